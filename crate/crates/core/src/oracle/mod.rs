//! Ground-truth fields, sensor placement and measurement noise.

mod bessel;
mod geometry;
mod pulse;
pub mod quadrature;
mod scene;
mod sensors;

pub use bessel::bessel_j0;
pub use geometry::{distance_to_line, mirror_point, Polygon};
pub use pulse::{gaussian_pulse_field, pulses_on_grid, radial_field, superpose, Pulse, RadialTable};
pub use scene::{image_sources, image_sources_trapezoid, ring_initial, RingSpec, SceneKind, SceneSpec, TRAPEZOID};
pub use sensors::{add_noise, sample_sensors, Measurements, Region, SensorSet};

use thiserror::Error;

use crate::fdtd::FdtdError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("placed only {placed} of {count} sensors before giving up")]
    InfeasibleSensors { placed: usize, count: usize },
    #[error("SNR must be finite or +inf, got {0}")]
    InvalidSnr(f64),
    #[error("clean signal has zero power")]
    ZeroSignalPower,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("quadrature did not converge: estimate {estimate}, error {error:e} > {tolerance:e}")]
    Quadrature { estimate: f64, error: f64, tolerance: f64 },
    #[error("source ({x}, {y}) is not strictly inside the room")]
    SourceOutsideRoom { x: f64, y: f64 },
    #[error("wall index {index} out of range for {walls} walls")]
    InvalidWall { index: usize, walls: usize },
    #[error("source centre ({x}, {y}) outside the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error(transparent)]
    Fdtd(#[from] FdtdError),
}
