use std::time::{Duration, Instant};

use super::sobol::{boundary_collocation, edge_rng, SobolStream};
use crate::dp::{combine, global_norm, TrainError};
use crate::experiment::Problem;
use crate::fdtd::{FieldSequence, GridSpec};
use crate::grad::{Tape, Tensor, Var};
use crate::optim::{
    adam_step, anneal_update, bc_residual_loss, data_loss_discrete, nmse, pde_residual_loss, sparsity_loss,
    AdamConfig, AdamState, AnnealRule, LossLog, LossRecord, LossWeights, TermNorms,
};
use crate::siren::{forward, input_constant, jet_forward, Arch, InputScaling, MlpParams, DEFAULT_OMEGA0};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollocationCounts {
    pub pde: usize,
    pub bcs: usize,
    pub sp: usize,
}

impl Default for CollocationCounts {
    fn default() -> Self {
        Self {
            pde: 2000,
            bcs: 800,
            sp: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PinnConfig {
    pub arch: Arch,
    pub omega0: f64,
    pub adam: AdamConfig,
    pub n_iters: usize,
    /// Stops early once this much wall-clock time has been spent.
    pub time_budget: Option<Duration>,
    pub counts: CollocationCounts,
    /// Sparsity slab end as a fraction of the duration.
    pub early_fraction: f64,
    pub weights: LossWeights,
    pub rule: AnnealRule,
    pub seed: u64,
}

impl Default for PinnConfig {
    fn default() -> Self {
        Self {
            arch: Arch::pinn(),
            omega0: DEFAULT_OMEGA0,
            adam: AdamConfig::default(),
            n_iters: 50_000,
            time_budget: None,
            counts: CollocationCounts::default(),
            early_fraction: 0.1,
            weights: LossWeights::default(),
            rule: AnnealRule::ReferenceOverOwn,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PinnOutcome {
    pub params: MlpParams,
    pub log: LossLog,
    pub iterations: usize,
    pub seconds: f64,
}

struct Terms<'t> {
    data: Var<'t>,
    sp: Var<'t>,
    pde: Var<'t>,
    bcs: Var<'t>,
}

struct Sampler {
    pde: SobolStream,
    sp: SobolStream,
    bcs: SobolStream,
    edges: rand_chacha::ChaCha8Rng,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        // distinct starting offsets keep the three batches decorrelated
        let offset = (seed % 1024) * 4096;
        Self {
            pde: SobolStream::with_offset(3, offset),
            sp: SobolStream::with_offset(3, offset + 1_000_003),
            bcs: SobolStream::with_offset(2, offset),
            edges: edge_rng(seed),
        }
    }
}

/// Sensor space-time coordinates `(M_ob * N, 3)` in time-major order.
fn data_coords(problem: &Problem) -> Tensor {
    let pos = problem.sensor_positions();
    let mut data = Vec::with_capacity(3 * pos.len() * problem.solver.n_steps);
    for t in problem.times() {
        for &(x, y) in &pos {
            data.extend([x, y, t]);
        }
    }
    Tensor::matrix(pos.len() * problem.solver.n_steps, 3, data).expect("sized")
}

fn terms<'t>(
    tape: &'t Tape,
    vars: &[Var<'t>],
    omega0: f64,
    problem: &Problem,
    config: &PinnConfig,
    scaling: &InputScaling,
    sensors_xt: &Tensor,
    observed: &Tensor,
    sampler: &mut Sampler,
) -> Result<Terms<'t>, TrainError> {
    let side = problem.side;
    let duration = problem.solver.duration();
    let c = problem.solver.c;

    let x = input_constant(tape, sensors_xt, scaling)?;
    let pred = forward(vars, omega0, x)?.reshape(observed.shape().to_vec())?;
    let data = data_loss_discrete(pred, observed)?;

    let bounds = [(0.0, side), (0.0, side), (0.0, duration)];
    let pts = sampler.pde.sample(config.counts.pde, &bounds);
    let pts = Tensor::matrix(config.counts.pde, 3, pts)?;
    let jets = jet_forward(vars, omega0, &pts, scaling, &[0, 1, 2], 2)?;
    let pde = pde_residual_loss(&jets, c)?;

    let batch = boundary_collocation(config.counts.bcs, side, duration, &mut sampler.bcs, &mut sampler.edges);
    let bpts = Tensor::matrix(config.counts.bcs, 3, batch.points)?;
    let bjets = jet_forward(vars, omega0, &bpts, scaling, &[0, 1, 2], 1)?;
    let bcs = bc_residual_loss(tape, &bjets, &batch.normals, c)?;

    let early = [(0.0, side), (0.0, side), (0.0, config.early_fraction * duration)];
    let spts = Tensor::matrix(config.counts.sp, 3, sampler.sp.sample(config.counts.sp, &early))?;
    let sx = input_constant(tape, &spts, scaling)?;
    let sp = sparsity_loss(forward(vars, omega0, sx)?);

    Ok(Terms { data, sp, pde, bcs })
}

pub fn pinn_train(problem: &Problem, config: &PinnConfig) -> Result<PinnOutcome, TrainError> {
    pinn_train_with(problem, config, |_, _| {})
}

/// [`pinn_train`] with a per-iteration callback.
pub fn pinn_train_with(
    problem: &Problem,
    config: &PinnConfig,
    mut on_iter: impl FnMut(usize, &LossRecord),
) -> Result<PinnOutcome, TrainError> {
    let duration = problem.solver.duration();
    let scaling = InputScaling::square(problem.side, Some(duration));
    let sensors_xt = data_coords(problem);
    let observed = problem.observed_time_major();
    let mut params = MlpParams::init(&config.arch, config.omega0, config.seed)?;
    let mut adam = AdamState::new(params.tensors(), config.adam);
    let mut weights = LossWeights { pde: 1.0, ..config.weights };
    let mut sampler = Sampler::new(config.seed);
    let mut log = LossLog::default();
    let start = Instant::now();
    let mut iterations = 0;
    for iter in 0..config.n_iters {
        if config.time_budget.is_some_and(|b| start.elapsed() >= b) {
            break;
        }
        let tape = Tape::new();
        let vars = params.track(&tape);
        let t = terms(
            &tape,
            &vars,
            params.omega0,
            problem,
            config,
            &scaling,
            &sensors_xt,
            &observed,
            &mut sampler,
        )?;
        let values = [t.data.item(), t.sp.item(), t.pde.item(), t.bcs.item()];
        let total = weights.data * values[0] + weights.sp * values[1] + values[2] + weights.bcs * values[3];
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration: iter });
        }
        let grads = if weights.due(iter) {
            let each = tape.backward_each(&[t.data, t.sp, t.pde, t.bcs])?;
            let norms = TermNorms {
                data: global_norm(&each[0], &vars),
                sp: global_norm(&each[1], &vars),
                pde: Some(global_norm(&each[2], &vars)),
                bcs: Some(global_norm(&each[3], &vars)),
            };
            weights = anneal_update(&norms, &weights, config.rule);
            combine(
                &[
                    (weights.data, &each[0]),
                    (weights.sp, &each[1]),
                    (weights.pde, &each[2]),
                    (weights.bcs, &each[3]),
                ],
                &vars,
            )
        } else {
            let loss = t
                .data
                .scale(weights.data)
                .add(&t.sp.scale(weights.sp))?
                .add(&t.pde.scale(weights.pde))?
                .add(&t.bcs.scale(weights.bcs))?;
            let g = tape.backward(loss)?;
            combine(&[(1.0, &g)], &vars)
        };
        drop(tape);
        adam_step(&mut params.tensors_mut(), &grads, &mut adam)?;
        let record = LossRecord {
            iteration: iter,
            total,
            data: values[0],
            sp: values[1],
            pde: Some(values[2]),
            bcs: Some(values[3]),
            lambda_data: weights.data,
            lambda_sp: weights.sp,
            lambda_pde: Some(weights.pde),
            lambda_bcs: Some(weights.bcs),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_iter(iter, &record);
        log.push(record);
        iterations += 1;
    }
    Ok(PinnOutcome {
        params,
        log,
        iterations,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Direct network evaluation at every node and frame of a grid.
pub fn pinn_field(
    params: &MlpParams,
    grid: &GridSpec,
    dt: f64,
    n_frames: usize,
    side: f64,
    duration: f64,
) -> Result<FieldSequence, TrainError> {
    let scaling = InputScaling::square(side, Some(duration));
    let nodes = grid.coordinates();
    let mut data = Vec::with_capacity(n_frames * nodes.len());
    for n in 0..n_frames {
        let t = n as f64 * dt;
        let coords: Vec<f64> = nodes.iter().flat_map(|&(x, y)| [x, y, t]).collect();
        let out = params.eval(&Tensor::matrix(nodes.len(), 3, coords)?, &scaling)?;
        data.extend_from_slice(out.data());
    }
    Ok(FieldSequence::new(*grid, dt, n_frames, data)?)
}

/// NMSE of the network evaluated on the reference grid and frames.
pub fn pinn_evaluate(
    params: &MlpParams,
    reference: &FieldSequence,
    side: f64,
    duration: f64,
) -> Result<(FieldSequence, f64), TrainError> {
    let field = pinn_field(params, &reference.spec, reference.dt, reference.n_frames(), side, duration)?;
    let err = nmse(&field, reference)?;
    Ok((field, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{Experiment, ExperimentSpec, SensorSpec};
    use crate::oracle::SceneSpec;

    fn tiny() -> (Experiment, Problem, PinnConfig) {
        let scene = SceneSpec::single_pulse((0.5, 0.5), 0.08).unwrap();
        let mut sensors = SensorSpec::array(3);
        sensors.count = 5;
        let mut spec = ExperimentSpec::from_training(17, 9, 2, scene, sensors, 20.0, 1);
        spec.duration = 0.25;
        let exp = Experiment::build(spec).unwrap();
        let problem = exp.problem(2).unwrap();
        let config = PinnConfig {
            arch: Arch {
                inputs: 3,
                hidden: vec![16, 16],
                outputs: 1,
            },
            omega0: 5.0,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            n_iters: 8,
            counts: CollocationCounts { pde: 40, bcs: 20, sp: 10 },
            weights: LossWeights {
                update_every: Some(3),
                ..LossWeights::default()
            },
            ..PinnConfig::default()
        };
        (exp, problem, config)
    }

    #[test]
    fn training_is_reproducible_and_pins_pde_weight() {
        let (_, problem, config) = tiny();
        let a = pinn_train(&problem, &config).unwrap();
        let b = pinn_train(&problem, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.iterations, 8);
        for r in &a.log.records {
            assert_eq!(r.lambda_pde, Some(1.0));
            for l in [r.lambda_data, r.lambda_sp, r.lambda_bcs.unwrap()] {
                assert!(l.is_finite() && l > 0.0);
            }
        }
        assert_ne!(a.log.records[2].lambda_data, a.log.records[3].lambda_data);
    }

    #[test]
    fn zero_network_has_unit_nmse() {
        let (exp, problem, config) = tiny();
        let mut params = MlpParams::init(&config.arch, config.omega0, 0).unwrap();
        params.layers.last_mut().unwrap().weight.scale_in_place(0.0);
        params.layers.last_mut().unwrap().bias.scale_in_place(0.0);
        let (_, err) = pinn_evaluate(&params, &exp.reference, problem.side, problem.solver.duration()).unwrap();
        assert_eq!(err, 1.0);
    }

    #[test]
    fn collocation_batches_change_between_iterations() {
        let mut s = Sampler::new(0);
        let a = s.pde.sample(10, &[(0.0, 1.0); 3]);
        let b = s.pde.sample(10, &[(0.0, 1.0); 3]);
        assert_ne!(a, b);
    }

    #[test]
    fn time_budget_stops_early() {
        let (_, problem, mut config) = tiny();
        config.n_iters = 1_000_000;
        config.time_budget = Some(Duration::from_millis(200));
        let out = pinn_train(&problem, &config).unwrap();
        assert!(out.iterations < 1_000_000 && out.iterations > 0);
    }
}
