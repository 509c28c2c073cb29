//! Sound field reconstruction from sparse sensors. The core model is a
//! coordinate network for the initial pressure trained through a
//! differentiable wave solver; a physics-informed network is the baseline.

pub mod dp;
pub mod experiment;
pub mod fdtd;
pub mod grad;
pub mod io;
pub mod optim;
pub mod oracle;
pub mod pinn;
pub mod siren;
