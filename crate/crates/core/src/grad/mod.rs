//! Tensor container, reverse-mode tape, and forward-mode second-order jets.
//!
//! The tape evaluates eagerly: every op computes its value on the spot and
//! records just enough to run its adjoint later. Second derivatives of a
//! network with respect to its inputs are carried forward as jets through
//! tape ops ([`Var::jet_sin`]), so the reverse sweep then differentiates the
//! jets with respect to parameters.

mod jet;
mod tape;
mod tensor;

pub use jet::Jet2;
pub use tape::{Gradients, JetLayout, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{laplacian_forward, neumann_laplacian_forward};
pub(crate) use tensor::gemm;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite adjoint at node {node} ({op}), element {index}")]
    NonFiniteAdjoint {
        node: usize,
        op: &'static str,
        index: usize,
    },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
}

#[cfg(test)]
mod tests;
