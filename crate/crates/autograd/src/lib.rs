//! Dense reverse-mode automatic differentiation.
//!
//! The engine is a tape: every operation appends a node holding its forward
//! value, and [`Graph::backward`] walks the tape in reverse. Parameters live in
//! a [`ParamStore`] shared read-only by any number of graphs, and gradients
//! are accumulated into a caller-owned [`Gradients`] buffer so that several
//! graphs (one per sequence) can contribute to one optimizer step.
//!
//! Only the kernels needed by an LSTM and a pre-norm transformer encoder are
//! provided. Everything is row-major and two-dimensional.

mod checkpoint;
mod error;
mod graph;
mod kernels;
mod optim;
mod params;
mod real;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use error::{AutogradError, Result};
pub use graph::{Graph, Var};
pub use optim::{lr_schedule, AdamW, AdamWConfig};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tensor::Tensor;
