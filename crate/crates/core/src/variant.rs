use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which information a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputVariant {
    GpaBaseline,
    Academic,
    Application,
    Human,
    Sociodemo,
    Everything,
}

impl InputVariant {
    pub const ALL: [InputVariant; 6] = [
        InputVariant::GpaBaseline,
        InputVariant::Academic,
        InputVariant::Application,
        InputVariant::Human,
        InputVariant::Sociodemo,
        InputVariant::Everything,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputVariant::GpaBaseline => "gpa_baseline",
            InputVariant::Academic => "academic",
            InputVariant::Application => "application",
            InputVariant::Human => "human",
            InputVariant::Sociodemo => "sociodemo",
            InputVariant::Everything => "everything",
        }
    }

    pub fn applications(self) -> bool {
        matches!(self, InputVariant::Application | InputVariant::Everything)
    }

    pub fn human(self) -> bool {
        matches!(self, InputVariant::Human | InputVariant::Everything)
    }

    pub fn sociodemo(self) -> bool {
        matches!(self, InputVariant::Sociodemo | InputVariant::Everything)
    }
}

impl std::fmt::Display for InputVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        InputVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown input variant {s:?}")))
    }
}
