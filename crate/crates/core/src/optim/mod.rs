//! Losses, loss-weight annealing, ADAM and the NMSE metric.

mod adam;
mod anneal;
mod log;
mod losses;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use anneal::{anneal_update, AnnealRule, LossWeights, TermNorms};
pub use log::{LossLog, LossRecord};
pub use losses::{
    bc_residual_loss, bc_residual_of, data_loss, data_loss_discrete, nmse, nmse_values, pde_residual_loss,
    pde_residual_of, sparsity_loss,
};

use thiserror::Error;

use crate::grad::GradError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("shape mismatch: {lhs:?} vs {rhs:?}")]
    Shape { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("reference field has zero energy")]
    ZeroReference,
    #[error("boundary normal {index} is not unit length (|n| = {norm})")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("non-finite gradient in parameter {param}, element {index}")]
    NonFiniteGradient { param: usize, index: usize },
    #[error("jet output lacks the derivatives this residual needs")]
    MissingDerivatives,
    #[error(transparent)]
    Grad(#[from] GradError),
}
