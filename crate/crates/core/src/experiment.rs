//! Synthetic reconstruction problems: a scene, its reference field on a
//! fine grid, sensors and noisy observations on a coarser training grid.

use thiserror::Error;

use crate::fdtd::{Boundary, FdtdError, FieldSequence, GridSpec, SolverConfig};
use crate::grad::Tensor;
use crate::oracle::{add_noise, sample_sensors, Measurements, OracleError, Polygon, Region, SceneSpec, SensorSet};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("grid of {nodes} nodes cannot be coarsened by {factor}")]
    Coarsening { nodes: usize, factor: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fdtd(#[from] FdtdError),
}

/// Sensor placement parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSpec {
    pub count: usize,
    pub region: Region,
    pub min_dist: f64,
    pub polygon: Option<Polygon>,
    pub seed: u64,
}

impl SensorSpec {
    /// Twenty sensors in `[0.1, 0.9]^2`, at least 0.05 apart.
    pub fn array(seed: u64) -> Self {
        Self {
            count: 20,
            region: Region::square(0.1, 0.9),
            min_dist: 0.05,
            polygon: None,
            seed,
        }
    }
}

/// Everything needed to build an [`Experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub side: f64,
    pub c: f64,
    pub duration: f64,
    /// Reference grid nodes per side.
    pub reference_m: usize,
    /// Reference frames over `[0, duration]`.
    pub reference_frames: usize,
    pub scene: SceneSpec,
    pub sensors: SensorSpec,
    /// Sensors are drawn from the reference grid coarsened by this factor,
    /// so they remain grid nodes of every training grid at least as fine.
    pub sensor_lattice: usize,
    pub snr_db: f64,
    pub noise_seed: u64,
}

impl ExperimentSpec {
    /// Spec whose reference grid is `upsample` times finer than a training
    /// grid of `m` nodes and `n_steps` frames; sensors sit on that grid.
    pub fn from_training(
        m: usize,
        n_steps: usize,
        upsample: usize,
        scene: SceneSpec,
        sensors: SensorSpec,
        snr_db: f64,
        noise_seed: u64,
    ) -> Self {
        Self {
            side: 1.0,
            c: 1.0,
            duration: 0.343,
            reference_m: (m - 1) * upsample + 1,
            reference_frames: (n_steps - 1) * upsample + 1,
            scene,
            sensors,
            sensor_lattice: upsample,
            snr_db,
            noise_seed,
        }
    }

    pub fn reference_grid(&self) -> GridSpec {
        GridSpec::square(self.reference_m, self.side)
    }

    pub fn reference_solver(&self) -> Result<SolverConfig, FdtdError> {
        SolverConfig::spanning(
            self.c,
            self.duration,
            self.reference_frames,
            self.reference_grid().dr,
            Boundary::Absorbing,
        )
    }
}

/// A training problem at one resolution.
#[derive(Clone, Debug)]
pub struct Problem {
    pub side: f64,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub sensors: SensorSet,
    pub clean: Measurements,
    pub observed: Measurements,
    /// Reference grid is this many times finer than `grid`.
    pub factor: usize,
}

impl Problem {
    /// Observations as a time-major `(N, M_ob)` tensor.
    pub fn observed_time_major(&self) -> Tensor {
        Tensor::matrix(
            self.observed.samples(),
            self.observed.sensors(),
            self.observed.time_major(),
        )
        .expect("sized")
    }

    /// Physical sensor positions.
    pub fn sensor_positions(&self) -> Vec<(f64, f64)> {
        self.sensors.positions(&self.grid)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.solver.n_steps).map(|n| n as f64 * self.solver.dt).collect()
    }
}

/// Reference field plus sensors drawn on the reference lattice.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub reference: FieldSequence,
    pub reference_solver: SolverConfig,
    /// Sensor indices on the reference grid.
    pub reference_sensors: SensorSet,
}

impl Experiment {
    pub fn build(spec: ExperimentSpec) -> Result<Self, ExperimentError> {
        spec.scene.validate(spec.side)?;
        let grid = spec.reference_grid();
        let solver = spec.reference_solver()?;
        let lattice = grid.coarsened(spec.sensor_lattice).ok_or(ExperimentError::Coarsening {
            nodes: grid.m,
            factor: spec.sensor_lattice,
        })?;
        let s = &spec.sensors;
        let sensors = sample_sensors(s.count, s.region, s.min_dist, &lattice, s.polygon.as_ref(), s.seed)?
            .refined(spec.sensor_lattice);
        let reference = spec.scene.reference(&grid, &solver)?;
        Ok(Self {
            spec,
            reference,
            reference_solver: solver,
            reference_sensors: sensors,
        })
    }

    /// Training problem on the reference grid coarsened by `factor` in space
    /// and time. Observations are the reference field at the sensors plus
    /// noise.
    pub fn problem(&self, factor: usize) -> Result<Problem, ExperimentError> {
        let ref_grid = self.reference.spec;
        let grid = ref_grid.coarsened(factor).ok_or(ExperimentError::Coarsening {
            nodes: ref_grid.m,
            factor,
        })?;
        let frames = self.reference.n_frames();
        if (frames - 1) % factor != 0 {
            return Err(ExperimentError::Coarsening { nodes: frames, factor });
        }
        let sensors = self
            .reference_sensors
            .coarsened(factor)
            .ok_or(ExperimentError::Coarsening { nodes: ref_grid.m, factor })?;
        let n_steps = (frames - 1) / factor + 1;
        let solver = SolverConfig::new(
            self.spec.c,
            self.reference_solver.dt * factor as f64,
            grid.dr,
            n_steps,
            Boundary::Absorbing,
        )?;
        let flat = self.reference_sensors.flat_indices(ref_grid.m);
        let mut values = Vec::with_capacity(flat.len() * n_steps);
        for &k in &flat {
            values.extend((0..n_steps).map(|n| self.reference.frame(n * factor)[k]));
        }
        let clean = Measurements::new(flat.len(), n_steps, values)?;
        let observed = add_noise(&clean, self.spec.snr_db, self.spec.noise_seed)?;
        Ok(Problem {
            side: self.spec.side,
            grid,
            solver,
            sensors,
            clean,
            observed,
            factor,
        })
    }
}
