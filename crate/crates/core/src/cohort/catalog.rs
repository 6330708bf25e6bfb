//! Fixed categorical inventories used by the generator and the encoders.

use serde::{Deserialize, Serialize};

use super::SchoolStage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CourseField {
    Stem,
    Languages,
    Other,
}

impl CourseField {
    pub const ALL: [CourseField; 3] = [CourseField::Stem, CourseField::Languages, CourseField::Other];

    pub fn name(self) -> &'static str {
        match self {
            CourseField::Stem => "stem",
            CourseField::Languages => "languages",
            CourseField::Other => "other",
        }
    }
}

pub struct CourseInfo {
    pub name: &'static str,
    pub field: CourseField,
    pub stage: SchoolStage,
}

const fn course(name: &'static str, field: CourseField, stage: SchoolStage) -> CourseInfo {
    CourseInfo { name, field, stage }
}

use CourseField::{Languages, Other, Stem};
use SchoolStage::{HighSchool, Primary};

pub static COURSES: &[CourseInfo] = &[
    course("danish", Languages, Primary),
    course("english", Languages, Primary),
    course("german", Languages, Primary),
    course("mathematics", Stem, Primary),
    course("physics_chemistry", Stem, Primary),
    course("biology", Stem, Primary),
    course("geography", Stem, Primary),
    course("history", Other, Primary),
    course("social_studies", Other, Primary),
    course("christianity", Other, Primary),
    course("physical_education", Other, Primary),
    course("hs_danish", Languages, HighSchool),
    course("hs_english", Languages, HighSchool),
    course("hs_german", Languages, HighSchool),
    course("hs_french", Languages, HighSchool),
    course("hs_spanish", Languages, HighSchool),
    course("hs_latin", Languages, HighSchool),
    course("hs_mathematics", Stem, HighSchool),
    course("hs_physics", Stem, HighSchool),
    course("hs_chemistry", Stem, HighSchool),
    course("hs_biology", Stem, HighSchool),
    course("hs_informatics", Stem, HighSchool),
    course("hs_history", Other, HighSchool),
    course("hs_social_studies", Other, HighSchool),
    course("hs_religion", Other, HighSchool),
    course("hs_philosophy", Other, HighSchool),
    course("hs_music", Other, HighSchool),
    course("hs_business", Other, HighSchool),
];

/// Broad field of a course name; unknown names count as `Other`.
pub fn course_field(name: &str) -> CourseField {
    COURSES
        .iter()
        .find(|c| c.name == name)
        .map_or(CourseField::Other, |c| c.field)
}

pub fn courses_for(stage: SchoolStage, field: CourseField) -> Vec<&'static CourseInfo> {
    COURSES.iter().filter(|c| c.stage == stage && c.field == field).collect()
}

/// The eleven ISCED-F broad fields with their relative training-year sizes.
pub static ISCED_FIELDS: &[(&str, f64)] = &[
    ("health_welfare", 92_379.0),
    ("business_admin_law", 76_757.0),
    ("arts_humanities", 57_657.0),
    ("social_sciences", 41_027.0),
    ("engineering", 37_821.0),
    ("natural_sciences", 24_478.0),
    ("education", 22_860.0),
    ("ict", 13_987.0),
    ("services", 6_147.0),
    ("agriculture", 3_538.0),
    ("generic", 151.0),
];

pub static PRIMARY_TYPES: &[&str] = &["folkeskole", "friskole", "efterskole"];
pub static HIGH_SCHOOL_TYPES: &[&str] = &["stx", "hhx", "htx", "hf", "eux", "ib"];
pub static STUDY_LINES: &[&str] = &[
    "math_physics",
    "math_chemistry",
    "biotech",
    "languages",
    "social_science",
    "music_arts",
    "business_economics",
    "engineering_tech",
    "general",
];
pub static TEST_TYPES: &[&str] = &["written", "oral", "year_mark"];
pub static PARENT_ISCED: &[(&str, f64)] = &[
    ("244", 130.0),
    ("354", 160.0),
    ("344", 155.0),
    ("454", 170.0),
    ("554", 190.0),
    ("645", 200.0),
    ("746", 215.0),
    ("844", 250.0),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_stage_field_has_courses() {
        for stage in [Primary, HighSchool] {
            for field in CourseField::ALL {
                assert!(!courses_for(stage, field).is_empty());
            }
        }
        assert_eq!(ISCED_FIELDS.len(), 11);
        assert_eq!(course_field("hs_physics"), Stem);
    }
}
