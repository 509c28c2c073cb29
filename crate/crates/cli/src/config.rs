//! Experiment configuration: a TOML document of `[section]` tables with
//! `key = value` pairs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dpsf::dp::DpConfig;
use dpsf::experiment::{ExperimentSpec, SensorSpec};
use dpsf::fdtd::{Boundary, SolverConfig};
use dpsf::oracle::{Polygon, Region, SceneSpec, TRAPEZOID};
use dpsf::optim::{AdamConfig, AnnealRule, LossWeights};
use dpsf::pinn::{CollocationCounts, PinnConfig};
use dpsf::siren::Arch;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKindCfg {
    SinglePulse,
    MultiPulse,
    Trapezoid,
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dp,
    Pinn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dp => "dp",
            ModelKind::Pinn => "pinn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    Sigma,
    SourceDistance,
    Downsample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneCfg {
    pub kind: SceneKindCfg,
    pub center: [f64; 2],
    pub sigma: f64,
    /// Pulse count for `multi_pulse`.
    pub count: usize,
    /// Interval holding random pulse centres on both axes.
    pub spread: [f64; 2],
    pub source: Option<[f64; 2]>,
    pub walls: Option<[usize; 3]>,
    pub radius: f64,
}

impl Default for SceneCfg {
    fn default() -> Self {
        Self {
            kind: SceneKindCfg::SinglePulse,
            center: [0.5, 0.5],
            sigma: 0.02,
            count: 5,
            spread: [0.3, 0.7],
            source: None,
            walls: None,
            radius: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCfg {
    /// Training grid nodes per side.
    pub m: usize,
    pub side: f64,
}

impl Default for GridCfg {
    fn default() -> Self {
        Self { m: 100, side: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeCfg {
    /// Training frames, including the initial one.
    pub n_steps: usize,
    pub duration: f64,
    pub c: f64,
}

impl Default for TimeCfg {
    fn default() -> Self {
        Self {
            n_steps: 50,
            duration: 0.343,
            c: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorsCfg {
    pub count: usize,
    pub region: [f64; 2],
    pub min_dist: f64,
    /// Restrict sensors to the trapezoid room.
    pub inside_room: bool,
    /// Sensors are drawn from the reference grid coarsened by this factor;
    /// defaults to the larger of `eval.upsample` and the downsample factor.
    pub lattice: Option<usize>,
}

impl Default for SensorsCfg {
    fn default() -> Self {
        Self {
            count: 20,
            region: [0.1, 0.9],
            min_dist: 0.05,
            inside_room: false,
            lattice: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseCfg {
    pub snr_db: f64,
}

impl Default for NoiseCfg {
    fn default() -> Self {
        Self { snr_db: 20.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelCfg {
    pub kind: ModelKind,
    /// Hidden widths; the default follows the model kind.
    pub hidden: Option<Vec<usize>>,
    pub omega0: f64,
}

impl Default for ModelCfg {
    fn default() -> Self {
        Self {
            kind: ModelKind::Dp,
            hidden: None,
            omega0: dpsf::siren::DEFAULT_OMEGA0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingCfg {
    /// Defaults to 5e4 for both models, or 5e5 for the PINN with `full`.
    pub n_iters: Option<usize>,
    pub full: bool,
    pub lr: f64,
    pub time_budget_s: Option<f64>,
    /// Training grid coarsening relative to the reference; defaults to
    /// `eval.upsample`.
    pub downsample: Option<usize>,
}

impl Default for TrainingCfg {
    fn default() -> Self {
        Self {
            n_iters: None,
            full: false,
            lr: 1e-4,
            time_budget_s: None,
            downsample: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealCfg {
    pub alpha: f64,
    /// Iterations between weight updates; zero keeps the weights fixed.
    pub update_every: usize,
}

impl Default for AnnealCfg {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            update_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PinnCfg {
    pub pde_points: usize,
    pub bcs_points: usize,
    pub sp_points: usize,
    pub early_fraction: f64,
}

impl Default for PinnCfg {
    fn default() -> Self {
        let c = CollocationCounts::default();
        Self {
            pde_points: c.pde,
            bcs_points: c.bcs,
            sp_points: c.sp,
            early_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalCfg {
    /// Reference grid refinement over the training grid.
    pub upsample: usize,
    /// Display times for heatmaps.
    pub frames: Vec<f64>,
}

impl Default for EvalCfg {
    fn default() -> Self {
        Self {
            upsample: 2,
            frames: vec![0.0, 0.07, 0.14, 0.21, 0.28],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    pub dir: PathBuf,
}

impl Default for OutputCfg {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepCfg {
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
    /// Models trained per value; defaults to `model.kind`.
    pub models: Vec<ModelKind>,
}

impl Default for SweepCfg {
    fn default() -> Self {
        Self {
            axis: None,
            values: Vec::new(),
            models: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; sensors, noise, scene and network seeds derive from it.
    pub seed: u64,
    pub scene: SceneCfg,
    pub grid: GridCfg,
    pub time: TimeCfg,
    pub sensors: SensorsCfg,
    pub noise: NoiseCfg,
    pub model: ModelCfg,
    pub training: TrainingCfg,
    pub anneal: AnnealCfg,
    pub pinn: PinnCfg,
    pub eval: EvalCfg,
    /// Left out of the resolved text, so it does not change the hash.
    #[serde(skip_serializing)]
    pub output: OutputCfg,
    pub sweep: SweepCfg,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text of the fully defaulted configuration.
    pub fn resolved(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn downsample(&self) -> usize {
        self.training.downsample.unwrap_or(self.eval.upsample)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("grid.side", self.grid.side)?;
        positive("time.duration", self.time.duration)?;
        positive("time.c", self.time.c)?;
        positive("scene.sigma", self.scene.sigma)?;
        positive("model.omega0", self.model.omega0)?;
        positive("training.lr", self.training.lr)?;
        positive("sensors.min_dist", self.sensors.min_dist)?;
        if !self.noise.snr_db.is_finite() {
            return Err(bad("noise.snr_db must be finite"));
        }
        if self.grid.m < 3 || self.time.n_steps < 2 {
            return Err(bad("grid.m must be at least 3 and time.n_steps at least 2"));
        }
        if self.eval.upsample == 0 || self.downsample() == 0 {
            return Err(bad("eval.upsample and training.downsample must be at least 1"));
        }
        if self.sensors.count == 0 {
            return Err(bad("sensors.count must be positive"));
        }
        let [lo, hi] = self.sensors.region;
        if !(lo < hi) {
            return Err(bad("sensors.region must be an increasing interval"));
        }
        if !(self.anneal.alpha >= 0.0 && self.anneal.alpha <= 1.0) {
            return Err(bad("anneal.alpha must lie in [0, 1]"));
        }
        let p = &self.pinn;
        if p.pde_points == 0 || p.bcs_points == 0 || p.sp_points == 0 {
            return Err(bad("pinn collocation counts must be positive"));
        }
        if !(p.early_fraction > 0.0 && p.early_fraction <= 1.0) {
            return Err(bad("pinn.early_fraction must lie in (0, 1]"));
        }
        if let Some(b) = self.training.time_budget_s {
            positive("training.time_budget_s", b)?;
        }
        if matches!(self.model.hidden.as_deref(), Some(h) if h.is_empty() || h.contains(&0)) {
            return Err(bad("model.hidden must list positive widths"));
        }
        let spec = self.experiment_spec()?;
        spec.scene.validate(self.grid.side)?;
        spec.reference_solver()?.courant_check()?;
        if let Some(room) = &spec.sensors.polygon {
            if let SceneKindCfg::Trapezoid = self.scene.kind {
                let source = self.scene.source.map(|[x, y]| (x, y)).unwrap_or_else(|| room.centroid());
                if !room.contains(source) {
                    return Err(bad(format!("source {source:?} lies outside the room")));
                }
            }
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<SceneSpec, CliError> {
        let s = &self.scene;
        let spec = match s.kind {
            SceneKindCfg::SinglePulse => SceneSpec::single_pulse((s.center[0], s.center[1]), s.sigma)?,
            SceneKindCfg::MultiPulse => {
                SceneSpec::random_pulses(s.count, s.spread[0], s.spread[1], s.sigma, self.seed.wrapping_add(2))?
            }
            SceneKindCfg::Trapezoid => SceneSpec::trapezoid(s.source.map(|[x, y]| (x, y)), s.walls, s.sigma)?,
            SceneKindCfg::Ring => SceneSpec::ring((s.center[0], s.center[1]), s.radius, s.sigma)?,
        };
        Ok(spec)
    }

    pub fn sensor_spec(&self) -> SensorSpec {
        let s = &self.sensors;
        SensorSpec {
            count: s.count,
            region: Region::square(s.region[0], s.region[1]),
            min_dist: s.min_dist,
            polygon: s.inside_room.then(|| Polygon::new(TRAPEZOID.to_vec())),
            seed: self.seed,
        }
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec, CliError> {
        let up = self.eval.upsample;
        let reference_m = (self.grid.m - 1) * up + 1;
        let reference_frames = (self.time.n_steps - 1) * up + 1;
        let lattice = self.sensors.lattice.unwrap_or(self.downsample().max(up));
        if lattice == 0 || lattice % self.downsample() != 0 {
            return Err(bad(format!(
                "sensor lattice {lattice} is not a multiple of the downsample factor {}",
                self.downsample()
            )));
        }
        if (reference_m - 1) % lattice != 0 || (reference_frames - 1) % self.downsample() != 0 {
            return Err(bad(format!(
                "reference grid of {reference_m} nodes and {reference_frames} frames cannot be coarsened by {}",
                self.downsample()
            )));
        }
        Ok(ExperimentSpec {
            side: self.grid.side,
            c: self.time.c,
            duration: self.time.duration,
            reference_m,
            reference_frames,
            scene: self.scene()?,
            sensors: self.sensor_spec(),
            sensor_lattice: lattice,
            snr_db: self.noise.snr_db,
            noise_seed: self.seed.wrapping_add(1),
        })
    }

    /// Solver of the training grid.
    pub fn training_solver(&self, m: usize, n_steps: usize) -> Result<SolverConfig, CliError> {
        let dr = self.grid.side / (m - 1) as f64;
        Ok(SolverConfig::spanning(self.time.c, self.time.duration, n_steps, dr, Boundary::Absorbing)?)
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.anneal.alpha,
            update_every: (self.anneal.update_every > 0).then_some(self.anneal.update_every),
            ..LossWeights::default()
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.training.lr,
            ..AdamConfig::default()
        }
    }

    pub fn dp_config(&self) -> DpConfig {
        let mut arch = Arch::dp();
        if let Some(h) = &self.model.hidden {
            arch.hidden = h.clone();
        }
        DpConfig {
            arch,
            omega0: self.model.omega0,
            adam: self.adam(),
            n_iters: self.training.n_iters.unwrap_or(50_000),
            weights: self.weights(),
            rule: AnnealRule::SumOverOwn,
            seed: self.seed,
        }
    }

    pub fn pinn_config(&self) -> PinnConfig {
        let mut arch = Arch::pinn();
        if let Some(h) = &self.model.hidden {
            arch.hidden = h.clone();
        }
        let default_iters = if self.training.full { 500_000 } else { 50_000 };
        PinnConfig {
            arch,
            omega0: self.model.omega0,
            adam: self.adam(),
            n_iters: self.training.n_iters.unwrap_or(default_iters),
            time_budget: self.training.time_budget_s.map(std::time::Duration::from_secs_f64),
            counts: CollocationCounts {
                pde: self.pinn.pde_points,
                bcs: self.pinn.bcs_points,
                sp: self.pinn.sp_points,
            },
            early_fraction: self.pinn.early_fraction,
            weights: self.weights(),
            rule: AnnealRule::ReferenceOverOwn,
            seed: self.seed,
        }
    }

    /// Pins the sensor lattice so every sweep value sees the same sensors.
    pub fn pin_lattice_for(&mut self, axis: SweepAxis, values: &[f64]) {
        if axis != SweepAxis::Downsample || self.sensors.lattice.is_some() {
            return;
        }
        let up = self.eval.upsample;
        let intervals = [(self.grid.m - 1) * up, (self.time.n_steps - 1) * up];
        let mut l = up;
        for &v in values {
            // factors that cannot coarsen the reference fail on their own
            if v >= 1.0 && v.fract() == 0.0 && intervals.iter().all(|n| n % (v as usize) == 0) {
                l = lcm(l, v as usize);
            }
        }
        if intervals.iter().any(|n| n % l != 0) {
            l = up;
        }
        self.sensors.lattice = Some(l);
    }

    /// Copy with one sweep axis set to `value` and the seed offset by `index`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64, index: usize) -> Result<Self, CliError> {
        let mut cfg = self.clone();
        cfg.seed = self.seed.wrapping_add(index as u64);
        match axis {
            SweepAxis::Snr => cfg.noise.snr_db = value,
            SweepAxis::Sigma => cfg.scene.sigma = value,
            SweepAxis::SourceDistance => {
                // distance from the array centre along +x, in units of the array aperture
                let [lo, hi] = cfg.sensors.region;
                let centre = 0.5 * (lo + hi);
                cfg.scene.kind = SceneKindCfg::SinglePulse;
                cfg.scene.center = [centre + value * (hi - lo), centre];
            }
            SweepAxis::Downsample => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(bad(format!("downsample factor {value} is not a positive integer")));
                }
                cfg.training.downsample = Some(value as usize);
            }
        }
        Ok(cfg)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}
