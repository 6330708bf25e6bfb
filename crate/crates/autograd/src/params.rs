use crate::error::{AutogradError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named tensor plus optimizer metadata.
///
/// `frozen_rows` are rows of a 2-d parameter that are pinned to zero and
/// never updated (the `[Null]` embedding row).
#[derive(Clone, Debug)]
pub struct Parameter<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub trainable: bool,
    pub frozen_rows: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<F> {
    params: Vec<Parameter<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            value,
            trainable: true,
            frozen_rows: Vec::new(),
        });
        ParamId(self.params.len() - 1)
    }

    /// Pins `row` of parameter `id` to zero.
    pub fn freeze_row(&mut self, id: ParamId, row: usize) -> Result<()> {
        let p = &mut self.params[id.0];
        let rows = p.value.rows();
        if row >= rows {
            return Err(AutogradError::OutOfRange {
                what: "parameter rows",
                index: row,
                size: rows,
            });
        }
        let cols = p.value.cols();
        p.value.data_mut()[row * cols..(row + 1) * cols]
            .iter_mut()
            .for_each(|v| *v = F::zero());
        if !p.frozen_rows.contains(&row) {
            p.frozen_rows.push(row);
        }
        Ok(())
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Number of trainable scalars, excluding frozen rows.
    pub fn num_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len() - p.frozen_rows.len() * p.value.cols())
            .sum()
    }

    /// Replaces every parameter value by the tensor of the same name.
    pub fn load_named(&mut self, tensors: &[(String, Tensor<F>)]) -> Result<()> {
        for p in &mut self.params {
            let Some((_, t)) = tensors.iter().find(|(n, _)| *n == p.name) else {
                return Err(AutogradError::Checkpoint(format!(
                    "missing tensor '{}'",
                    p.name
                )));
            };
            if t.shape() != p.value.shape() {
                return Err(AutogradError::ShapeMismatch {
                    op: "load_named",
                    lhs: p.value.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor<F>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }
}

/// Per-parameter gradient buffers, allocated on first touch.
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn for_store(store: &ParamStore<F>) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[F]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn buffer(&mut self, id: ParamId, len: usize) -> &mut Vec<F> {
        if id.0 >= self.grads.len() {
            self.grads.resize(id.0 + 1, None);
        }
        self.grads[id.0].get_or_insert_with(|| vec![F::zero(); len])
    }

    /// Adds `other` element-wise.
    pub fn add_assign(&mut self, other: &Gradients<F>) {
        if other.grads.len() > self.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.iter_mut().zip(t).for_each(|(a, &b)| *a += b),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, factor: F) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn zero(&mut self) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v = F::zero());
        }
    }
}
