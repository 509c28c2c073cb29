//! Physics-informed baseline: a space-time SIREN trained on sensor data
//! plus PDE, boundary and early-time sparsity penalties at Sobol collocation
//! points.

mod sobol;
mod train;

pub use sobol::{boundary_collocation, edge_rng, BoundaryBatch, SobolStream, MAX_SOBOL_DIMS};
pub use train::{pinn_evaluate, pinn_field, pinn_train, pinn_train_with, CollocationCounts, PinnConfig, PinnOutcome};
