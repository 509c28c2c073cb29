//! Differentiable-physics training: a SIREN models the initial pressure,
//! the FDTD solver propagates it, and the sensor misfit is back-propagated
//! through every solver step.

use std::time::Instant;

use thiserror::Error;

use crate::experiment::Problem;
use crate::fdtd::{measure_tape, simulate, simulate_tape, FdtdError, FieldSequence, Grid2D, GridSpec, SolverConfig};
use crate::grad::{GradError, Gradients, Tape, Tensor, Var};
use crate::optim::{
    adam_step, anneal_update, data_loss_discrete, nmse, sparsity_loss, AdamConfig, AdamState, AnnealRule, LossLog,
    LossRecord, LossWeights, OptimError, TermNorms,
};
use crate::siren::{forward, grid_coords, input_constant, Arch, InputScaling, MlpParams, SirenError, DEFAULT_OMEGA0};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("evaluation grid does not match the reference: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Fdtd(#[from] FdtdError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Siren(#[from] SirenError),
}

impl TrainError {
    /// True for numerical failures (as opposed to configuration errors).
    pub fn is_numerical(&self) -> bool {
        match self {
            TrainError::NonFiniteLoss { .. } => true,
            TrainError::Fdtd(FdtdError::NonFinite { .. }) => true,
            TrainError::Grad(GradError::NonFiniteAdjoint { .. }) => true,
            TrainError::Optim(OptimError::NonFiniteGradient { .. }) => true,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpConfig {
    pub arch: Arch,
    pub omega0: f64,
    pub adam: AdamConfig,
    pub n_iters: usize,
    pub weights: LossWeights,
    pub rule: AnnealRule,
    pub seed: u64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            arch: Arch::dp(),
            omega0: DEFAULT_OMEGA0,
            adam: AdamConfig::default(),
            n_iters: 50_000,
            weights: LossWeights::default(),
            rule: AnnealRule::SumOverOwn,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DpOutcome {
    pub params: MlpParams,
    pub log: LossLog,
    pub seconds: f64,
}

/// Reusable per-problem state for the training loop.
struct DpGraph {
    coords: Tensor,
    scaling: InputScaling,
    solver: SolverConfig,
    m: usize,
    sensors: crate::oracle::SensorSet,
    observed: Tensor,
}

struct Terms<'t> {
    data: Var<'t>,
    sp: Var<'t>,
}

impl DpGraph {
    fn new(problem: &Problem) -> Self {
        Self {
            coords: grid_coords(&problem.grid),
            scaling: InputScaling::square(problem.side, None),
            solver: problem.solver,
            m: problem.grid.m,
            sensors: problem.sensors.clone(),
            observed: problem.observed_time_major(),
        }
    }

    fn terms<'t>(&self, tape: &'t Tape, vars: &[Var<'t>], omega0: f64) -> Result<Terms<'t>, TrainError> {
        let x = input_constant(tape, &self.coords, &self.scaling)?;
        let p0 = forward(vars, omega0, x)?.reshape(vec![self.m, self.m])?;
        let frames = simulate_tape(p0, &self.solver)?;
        let pred = measure_tape(&frames, &self.sensors, self.m)?;
        Ok(Terms {
            data: data_loss_discrete(pred, &self.observed)?,
            sp: sparsity_loss(p0),
        })
    }
}

pub(crate) fn global_norm(grads: &Gradients, vars: &[Var<'_>]) -> f64 {
    vars.iter()
        .map(|v| grads.get(v).map_or(0.0, Tensor::norm_sq))
        .sum::<f64>()
        .sqrt()
}

/// Weighted sum of per-term gradients, one tensor per parameter.
pub(crate) fn combine(parts: &[(f64, &Gradients)], vars: &[Var<'_>]) -> Vec<Tensor> {
    vars.iter()
        .map(|v| {
            let mut acc = Tensor::zeros(&v.shape());
            for (w, g) in parts {
                if let Some(t) = g.get(v) {
                    acc.axpy(*w, t);
                }
            }
            acc
        })
        .collect()
}

/// Trains the initial-condition network on one problem.
pub fn dp_train(problem: &Problem, config: &DpConfig) -> Result<DpOutcome, TrainError> {
    dp_train_with(problem, config, |_, _| {})
}

/// [`dp_train`] with a callback after every iteration, receiving the
/// iteration index and its log record.
pub fn dp_train_with(
    problem: &Problem,
    config: &DpConfig,
    mut on_iter: impl FnMut(usize, &LossRecord),
) -> Result<DpOutcome, TrainError> {
    problem.solver.courant_check()?;
    let graph = DpGraph::new(problem);
    let mut params = MlpParams::init(&config.arch, config.omega0, config.seed)?;
    let mut adam = AdamState::new(params.tensors(), config.adam);
    let mut weights = config.weights;
    let mut log = LossLog::default();
    let start = Instant::now();
    for iter in 0..config.n_iters {
        let tape = Tape::new();
        let vars = params.track(&tape);
        let terms = graph.terms(&tape, &vars, params.omega0)?;
        let (ld, ls) = (terms.data.item(), terms.sp.item());
        let total = weights.data * ld + weights.sp * ls;
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration: iter });
        }
        let grads = if weights.due(iter) {
            let each = tape.backward_each(&[terms.data, terms.sp])?;
            let norms = TermNorms {
                data: global_norm(&each[0], &vars),
                sp: global_norm(&each[1], &vars),
                pde: None,
                bcs: None,
            };
            weights = anneal_update(&norms, &weights, config.rule);
            combine(&[(weights.data, &each[0]), (weights.sp, &each[1])], &vars)
        } else {
            let loss = terms.data.scale(weights.data).add(&terms.sp.scale(weights.sp))?;
            let g = tape.backward(loss)?;
            combine(&[(1.0, &g)], &vars)
        };
        drop(tape);
        adam_step(&mut params.tensors_mut(), &grads, &mut adam)?;
        let record = LossRecord {
            iteration: iter,
            total,
            data: ld,
            sp: ls,
            pde: None,
            bcs: None,
            lambda_data: weights.data,
            lambda_sp: weights.sp,
            lambda_pde: None,
            lambda_bcs: None,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_iter(iter, &record);
        log.push(record);
    }
    Ok(DpOutcome {
        params,
        log,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Current value of both loss terms without updating anything.
pub fn dp_losses(params: &MlpParams, problem: &Problem) -> Result<(f64, f64), TrainError> {
    let graph = DpGraph::new(problem);
    let tape = Tape::new();
    let vars = params.constants(&tape);
    let t = graph.terms(&tape, &vars, params.omega0)?;
    Ok((t.data.item(), t.sp.item()))
}

/// Initial pressure predicted on `grid`, through the same tape forward
/// pass the trainer uses.
pub fn initial_pressure(params: &MlpParams, grid: &GridSpec, side: f64) -> Result<Grid2D, TrainError> {
    let tape = Tape::new();
    let vars = params.constants(&tape);
    let x = input_constant(&tape, &grid_coords(grid), &InputScaling::square(side, None))?;
    let p0 = forward(&vars, params.omega0, x)?;
    Ok(Grid2D {
        spec: *grid,
        values: p0.value().data().to_vec(),
    })
}

/// Reconstruction at `upsample` times the training resolution in space and
/// time.
pub fn dp_reconstruct(params: &MlpParams, problem: &Problem, upsample: usize) -> Result<FieldSequence, TrainError> {
    let grid = problem.grid.refined(upsample);
    let solver = problem.solver.refined(upsample);
    solver.courant_check()?;
    let p0 = initial_pressure(params, &grid, problem.side)?;
    Ok(simulate(&p0, &solver)?)
}

/// Reconstruction on the reference grid and its NMSE.
pub fn dp_evaluate(
    params: &MlpParams,
    problem: &Problem,
    upsample: usize,
    reference: &FieldSequence,
) -> Result<(FieldSequence, f64), TrainError> {
    let field = dp_reconstruct(params, problem, upsample)?;
    if field.spec.m != reference.spec.m || field.n_frames() != reference.n_frames() {
        return Err(TrainError::Mismatch(format!(
            "{} frames of {}^2 vs {} frames of {}^2",
            field.n_frames(),
            field.spec.m,
            reference.n_frames(),
            reference.spec.m
        )));
    }
    let err = nmse(&field, reference)?;
    Ok((field, err))
}

/// Fraction of grid cells whose magnitude is below `rel` times the peak.
pub fn sparse_fraction(values: &[f64], rel: f64) -> f64 {
    let peak = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let small = values.iter().filter(|v| v.abs() < rel * peak).count();
    small as f64 / values.len().max(1) as f64
}
