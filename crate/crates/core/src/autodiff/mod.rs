//! Dense tensors with reverse-mode differentiation and an Adam optimiser.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters enter it as
//! borrowed leaves via [`Tape::param`]; [`Tape::backward`] then returns
//! their gradients, which [`Adam::step`] applies.

mod adam;
mod contract;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::Adam;
pub use contract::{contract, ContractScratch};
pub use tape::{Aggregator, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("loss must be a single value, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("mask row {0} excludes every entry")]
    EmptyMaskRow(usize),
    #[error("{0}: no inputs")]
    Empty(&'static str),
}
