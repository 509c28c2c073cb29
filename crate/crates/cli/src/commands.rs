use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dpsf::dp::{dp_train_with, initial_pressure};
use dpsf::experiment::{Experiment, Problem};
use dpsf::fdtd::{simulate, Boundary, FieldSequence, GridSpec, SolverConfig};
use dpsf::io::{
    load_field, load_params, read_measurements, read_sensors, save_field, save_params, write_measurements,
    write_pgm_series, write_sensors,
};
use dpsf::optim::{nmse, LossLog, LossRecord};
use dpsf::pinn::{pinn_field, pinn_train_with};
use dpsf::siren::MlpParams;

use crate::config::{ModelKind, RunConfig, SweepAxis};
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.resolved";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const CLEAN_MEASUREMENTS_FILE: &str = "measurements_clean.csv";
pub const SENSORS_FILE: &str = "sensors.csv";
pub const REFERENCE_FILE: &str = "reference.wfd";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.wfd";
pub const MODEL_FILE: &str = "model.mlp";
pub const LOSS_FILE: &str = "loss.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const FRAMES_DIR: &str = "frames";

const PROGRESS_EVERY: usize = 1000;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(path.display().to_string()))
    }
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.resolved())?;
    Ok(())
}

/// Key-value run record, one `key = value` per line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary(pub BTreeMap<String, String>);

impl Summary {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        if path.is_file() {
            for line in fs::read_to_string(path)?.lines() {
                if let Some((k, v)) = line.split_once('=') {
                    map.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }
        Ok(Self(map))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut w = create(path)?;
        for (k, v) in &self.0 {
            writeln!(w, "{k} = {v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub reference_m: usize,
    pub reference_frames: usize,
    pub dr: f64,
    pub dt: f64,
}

/// Reference field, sensors and measurements for the configured scene.
pub fn cmd_oracle(cfg: &RunConfig, out: &Path) -> Result<OracleReport, CliError> {
    cfg.validate()?;
    let exp = Experiment::build(cfg.experiment_spec()?)?;
    let problem = exp.problem(cfg.downsample())?;
    write_config(cfg, out)?;
    save_field(&out.join(REFERENCE_FILE), &exp.reference)?;
    write_sensors(create(&out.join(SENSORS_FILE))?, &problem.sensors, &problem.grid)?;
    write_measurements(create(&out.join(MEASUREMENTS_FILE))?, &problem.observed)?;
    write_measurements(create(&out.join(CLEAN_MEASUREMENTS_FILE))?, &problem.clean)?;
    Ok(OracleReport {
        reference_m: exp.reference.spec.m,
        reference_frames: exp.reference.n_frames(),
        dr: exp.reference.spec.dr,
        dt: exp.reference.dt,
    })
}

/// Training problem rebuilt from the files written by [`cmd_oracle`].
pub fn load_problem(cfg: &RunConfig, out: &Path) -> Result<Problem, CliError> {
    let (meas_path, sensor_path) = (out.join(MEASUREMENTS_FILE), out.join(SENSORS_FILE));
    require(&meas_path)?;
    require(&sensor_path)?;
    let spec = cfg.experiment_spec()?;
    let d = cfg.downsample();
    let m = (spec.reference_m - 1) / d + 1;
    let n_steps = (spec.reference_frames - 1) / d + 1;
    let grid = GridSpec::square(m, cfg.grid.side);
    let solver = cfg.training_solver(m, n_steps)?;
    let sensors = read_sensors(File::open(&sensor_path)?)?;
    if let Some(&(i, j)) = sensors.indices.iter().find(|&&(i, j)| i >= m || j >= m) {
        return Err(CliError::Config(format!("sensor ({i}, {j}) outside the {m}x{m} training grid")));
    }
    let observed = read_measurements(File::open(&meas_path)?)?;
    if observed.sensors() != sensors.len() || observed.samples() != n_steps {
        return Err(CliError::Config(format!(
            "measurements hold {} sensors x {} samples, expected {} x {n_steps}",
            observed.sensors(),
            observed.samples(),
            sensors.len()
        )));
    }
    Ok(Problem {
        side: cfg.grid.side,
        grid,
        solver,
        sensors,
        clean: observed.clone(),
        observed,
        factor: d,
    })
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub iterations: usize,
    pub seconds: f64,
    pub final_loss: f64,
}

fn progress(model: ModelKind) -> impl FnMut(usize, &LossRecord) {
    move |i, r| {
        if i % PROGRESS_EVERY == 0 {
            log::info!("{} iteration {i}: loss {:.4e} ({:.1} s)", model.name(), r.total, r.wall_seconds);
        }
    }
}

fn write_log(log: &LossLog, path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    log.write_csv(&mut w).map_err(dpsf::io::IoError::from)?;
    w.flush()?;
    Ok(())
}

/// Trains the configured model on the stored measurements.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let problem = load_problem(cfg, out)?;
    write_config(cfg, out)?;
    let kind = cfg.model.kind;
    let (params, log, seconds) = match kind {
        ModelKind::Dp => {
            let r = dp_train_with(&problem, &cfg.dp_config(), progress(kind))?;
            (r.params, r.log, r.seconds)
        }
        ModelKind::Pinn => {
            let r = pinn_train_with(&problem, &cfg.pinn_config(), progress(kind))?;
            (r.params, r.log, r.seconds)
        }
    };
    save_params(&out.join(MODEL_FILE), &params)?;
    write_log(&log, &out.join(LOSS_FILE))?;
    let final_loss = log.last().map_or(f64::NAN, |r| r.total);
    let mut summary = Summary::default();
    summary.set("config_hash", cfg.hash());
    summary.set("model", kind.name());
    summary.set("iterations", log.len());
    summary.set("wall_seconds", format!("{seconds:.3}"));
    summary.set("final_loss", format!("{final_loss:e}"));
    summary.save(&out.join(SUMMARY_FILE))?;
    Ok(TrainReport {
        iterations: log.len(),
        seconds,
        final_loss,
    })
}

/// Model field on the reference grid and frames.
pub fn model_field(
    params: &MlpParams,
    kind: ModelKind,
    reference: &FieldSequence,
    side: f64,
    c: f64,
) -> Result<FieldSequence, CliError> {
    let expected_inputs = match kind {
        ModelKind::Dp => 2,
        ModelKind::Pinn => 3,
    };
    if params.inputs() != expected_inputs {
        return Err(CliError::Config(format!(
            "checkpoint takes {} inputs but a {} model takes {expected_inputs}",
            params.inputs(),
            kind.name()
        )));
    }
    let grid = reference.spec;
    let duration = (reference.n_frames() - 1) as f64 * reference.dt;
    match kind {
        ModelKind::Dp => {
            let solver = SolverConfig::new(c, reference.dt, grid.dr, reference.n_frames(), Boundary::Absorbing)?;
            let p0 = initial_pressure(params, &grid, side)?;
            Ok(simulate(&p0, &solver)?)
        }
        ModelKind::Pinn => Ok(pinn_field(params, &grid, reference.dt, reference.n_frames(), side, duration)?),
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub nmse: f64,
    pub images: Vec<PathBuf>,
}

/// Reference frames nearest to the requested times, deduplicated.
pub fn display_frames(reference: &FieldSequence, times: &[f64]) -> Vec<usize> {
    let mut frames: Vec<usize> = times.iter().map(|&t| reference.nearest_frame(t)).collect();
    frames.dedup();
    frames
}

/// Scores a checkpoint against the stored reference.
pub fn cmd_eval(cfg: &RunConfig, out: &Path, times: Option<&[f64]>, images: bool) -> Result<EvalReport, CliError> {
    cfg.validate()?;
    let (model_path, ref_path) = (out.join(MODEL_FILE), out.join(REFERENCE_FILE));
    require(&model_path)?;
    require(&ref_path)?;
    let params = load_params(&model_path)?;
    let reference = load_field(&ref_path)?;
    let field = model_field(&params, cfg.model.kind, &reference, cfg.grid.side, cfg.time.c)?;
    let err = nmse(&field, &reference).map_err(dpsf::dp::TrainError::from)?;
    save_field(&out.join(RECONSTRUCTION_FILE), &field)?;
    let mut paths = Vec::new();
    if images {
        let frames = display_frames(&reference, times.unwrap_or(&cfg.eval.frames));
        let dir = out.join(FRAMES_DIR);
        let diff: Vec<f64> = field.data().iter().zip(reference.data()).map(|(a, b)| a - b).collect();
        let diff = FieldSequence::new(reference.spec, reference.dt, reference.n_frames(), diff)?;
        paths.extend(write_pgm_series(&dir, "reference", &reference, &frames)?);
        paths.extend(write_pgm_series(&dir, "reconstruction", &field, &frames)?);
        paths.extend(write_pgm_series(&dir, "difference", &diff, &frames)?);
    }
    let summary_path = out.join(SUMMARY_FILE);
    let mut summary = Summary::load(&summary_path)?;
    summary.set("config_hash", cfg.hash());
    summary.set("model", cfg.model.kind.name());
    summary.set("nmse", format!("{err:e}"));
    summary.save(&summary_path)?;
    Ok(EvalReport { nmse: err, images: paths })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub nmse: Option<f64>,
    pub error: Option<String>,
}

fn sweep_one(cfg: &RunConfig, dir: &Path) -> Result<f64, CliError> {
    cmd_oracle(cfg, dir)?;
    cmd_train(cfg, dir)?;
    Ok(cmd_eval(cfg, dir, None, false)?.nmse)
}

/// Runs oracle, training and evaluation for each axis value and model;
/// writes `sweep_{model}.csv` per model. Failed runs are recorded and the
/// sweep carries on.
pub fn cmd_sweep(
    cfg: &RunConfig,
    axis: Option<SweepAxis>,
    out: &Path,
) -> Result<BTreeMap<&'static str, Vec<SweepRow>>, CliError> {
    let axis = axis
        .or(cfg.sweep.axis)
        .ok_or_else(|| CliError::Config("no sweep axis given".into()))?;
    if cfg.sweep.values.is_empty() {
        return Err(CliError::Config("sweep.values is empty".into()));
    }
    let models = if cfg.sweep.models.is_empty() {
        vec![cfg.model.kind]
    } else {
        cfg.sweep.models.clone()
    };
    let mut base = cfg.clone();
    base.pin_lattice_for(axis, &cfg.sweep.values);
    fs::create_dir_all(out)?;
    let mut results = BTreeMap::new();
    for kind in models {
        let mut rows = Vec::new();
        for (k, &value) in cfg.sweep.values.iter().enumerate() {
            let dir = out.join(kind.name()).join(format!("value_{k:02}"));
            let run = base.with_axis(axis, value, k).and_then(|mut c| {
                c.model.kind = kind;
                c.model.hidden = cfg.model.hidden.clone().filter(|_| kind == cfg.model.kind);
                c.output.dir = dir.clone();
                sweep_one(&c, &dir)
            });
            let row = match run {
                Ok(e) => {
                    log::info!("{} {axis:?} = {value}: nmse {e:.4e}", kind.name());
                    SweepRow { value, nmse: Some(e), error: None }
                }
                Err(e) => {
                    log::warn!("{} {axis:?} = {value} failed: {e}", kind.name());
                    SweepRow { value, nmse: None, error: Some(e.to_string()) }
                }
            };
            rows.push(row);
        }
        let mut w = create(&out.join(format!("sweep_{}.csv", kind.name())))?;
        writeln!(w, "{},nmse,error", axis_name(axis))?;
        for r in &rows {
            let nmse = r.nmse.map_or(String::new(), |e| format!("{e:e}"));
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(w, "{},{nmse},{err}", r.value)?;
        }
        w.flush()?;
        results.insert(kind.name(), rows);
    }
    Ok(results)
}

pub fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Snr => "snr_db",
        SweepAxis::Sigma => "sigma",
        SweepAxis::SourceDistance => "source_distance",
        SweepAxis::Downsample => "downsample",
    }
}
