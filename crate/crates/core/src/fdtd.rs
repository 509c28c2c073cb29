//! Explicit leapfrog solver for the 2D homogeneous wave equation.
//!
//! Two evaluation paths share the same arithmetic: [`simulate`] runs on plain
//! buffers for reference and evaluation rollouts, [`simulate_tape`] records
//! every step on a [`Tape`] so the rollout can be differentiated with respect
//! to the initial pressure. Both produce bit-identical frames.
//!
//! Grid convention: node `(i, j)` sits at `(x, y) = origin + (i, j) * dr` and
//! is stored at flat index `i * m + j`.

use std::rc::Rc;

use thiserror::Error;

use crate::grad::{laplacian_forward, neumann_laplacian_forward, GradError, Tensor, Var};
use crate::oracle::SensorSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdtdError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("Courant condition violated: c*dt*sqrt(2)/dr = {ratio:.4} >= 1")]
    CourantViolation { ratio: f64 },
    #[error("grid needs at least 3 points per side, got {0}")]
    GridTooSmall(usize),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite pressure in frame {step}")]
    NonFinite { step: usize },
    #[error("sensor ({i}, {j}) outside {m}x{m} grid")]
    SensorOutOfRange { i: usize, j: usize, m: usize },
    #[error(transparent)]
    Grad(#[from] GradError),
}

/// Square node lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub m: usize,
    pub dr: f64,
    pub origin: (f64, f64),
}

impl GridSpec {
    /// `m` nodes per side spanning `[0, 1]`, both ends included.
    pub fn unit_square(m: usize) -> Self {
        Self::square(m, 1.0)
    }

    pub fn square(m: usize, side: f64) -> Self {
        Self {
            m,
            dr: side / (m - 1) as f64,
            origin: (0.0, 0.0),
        }
    }

    pub fn extent(&self) -> f64 {
        (self.m - 1) as f64 * self.dr
    }

    pub fn nodes(&self) -> usize {
        self.m * self.m
    }

    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + i as f64 * self.dr,
            self.origin.1 + j as f64 * self.dr,
        )
    }

    /// Grid refined by an integer factor; every coarse node stays a node.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            m: (self.m - 1) * factor + 1,
            dr: self.dr / factor as f64,
            origin: self.origin,
        }
    }

    /// Grid coarsened by an integer factor, when `m - 1` divides evenly.
    pub fn coarsened(&self, factor: usize) -> Option<Self> {
        ((self.m - 1) % factor == 0).then(|| Self {
            m: (self.m - 1) / factor + 1,
            dr: self.dr * factor as f64,
            origin: self.origin,
        })
    }

    /// Nearest node to a physical position, clamped to the grid.
    pub fn nearest(&self, (x, y): (f64, f64)) -> (usize, usize) {
        let snap = |v: f64, o: f64| {
            let k = ((v - o) / self.dr).round();
            k.clamp(0.0, (self.m - 1) as f64) as usize
        };
        (snap(x, self.origin.0), snap(y, self.origin.1))
    }

    pub(crate) fn index_at_or_above(&self, v: f64) -> usize {
        let k = ((v - self.origin.0) / self.dr - 1e-9).ceil().max(0.0) as usize;
        k.min(self.m - 1)
    }

    pub(crate) fn index_at_or_below(&self, v: f64) -> usize {
        let k = ((v - self.origin.0) / self.dr + 1e-9).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.m - 1)
        }
    }

    /// All node coordinates, row-major.
    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.nodes());
        for i in 0..self.m {
            for j in 0..self.m {
                out.push(self.position(i, j));
            }
        }
        out
    }
}

/// Scalar pressure samples on a square grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl Grid2D {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self, FdtdError> {
        if spec.m < 3 {
            return Err(FdtdError::GridTooSmall(spec.m));
        }
        if values.len() != spec.nodes() {
            return Err(FdtdError::Shape {
                expected: spec.nodes(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            values: vec![0.0; spec.nodes()],
            spec,
        }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = spec.coordinates().into_iter().map(|(x, y)| f(x, y)).collect();
        Self { spec, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.m + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        let m = self.spec.m;
        Tensor::new(vec![m, m], self.values.clone()).expect("grid shape")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// First-order one-way absorbing update on every wall.
    Absorbing,
    /// Mirrored ghost nodes (homogeneous Neumann walls).
    Rigid,
}

/// Time stepping parameters. `n_steps` counts frames, including the
/// initial condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub c: f64,
    pub dt: f64,
    pub dr: f64,
    pub n_steps: usize,
    pub boundary: Boundary,
}

/// Result of a passing stability check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CourantReport {
    /// `c * dt * sqrt(2) / dr`; stable below one.
    pub ratio: f64,
}

impl SolverConfig {
    /// Validated constructor; rejects configurations that violate the 2D
    /// Courant bound.
    pub fn new(c: f64, dt: f64, dr: f64, n_steps: usize, boundary: Boundary) -> Result<Self, FdtdError> {
        let config = Self::unchecked(c, dt, dr, n_steps, boundary);
        config.courant_check()?;
        Ok(config)
    }

    /// Skips the stability check. Only useful to demonstrate instability.
    pub fn unchecked(c: f64, dt: f64, dr: f64, n_steps: usize, boundary: Boundary) -> Self {
        Self {
            c,
            dt,
            dr,
            n_steps,
            boundary,
        }
    }

    /// Frames spanning `[0, duration]` with the end point included.
    pub fn spanning(
        c: f64,
        duration: f64,
        n_steps: usize,
        dr: f64,
        boundary: Boundary,
    ) -> Result<Self, FdtdError> {
        Self::new(c, duration / (n_steps - 1) as f64, dr, n_steps, boundary)
    }

    pub fn courant_check(&self) -> Result<CourantReport, FdtdError> {
        for (name, value) in [("c", self.c), ("dt", self.dt), ("dr", self.dr)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(FdtdError::NonPositive { name, value });
            }
        }
        let ratio = self.c * self.dt * std::f64::consts::SQRT_2 / self.dr;
        if ratio < 1.0 {
            Ok(CourantReport { ratio })
        } else {
            Err(FdtdError::CourantViolation { ratio })
        }
    }

    /// `c * dt / dr`.
    pub fn courant_number(&self) -> f64 {
        self.c * self.dt / self.dr
    }

    fn lap_coeff(&self) -> f64 {
        let k = self.courant_number();
        k * k
    }

    /// Coefficient of the one-way boundary update, `(C - 1) / (C + 1)`.
    pub fn abc_coeff(&self) -> f64 {
        let k = self.courant_number();
        (k - 1.0) / (k + 1.0)
    }

    /// Same physical run with space and time steps divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            dt: self.dt / factor as f64,
            dr: self.dr / factor as f64,
            n_steps: (self.n_steps - 1) * factor + 1,
            ..*self
        }
    }

    pub fn duration(&self) -> f64 {
        (self.n_steps - 1) as f64 * self.dt
    }
}

/// Time-ordered frames of a pressure field, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSequence {
    pub spec: GridSpec,
    pub dt: f64,
    n_frames: usize,
    data: Vec<f64>,
}

impl FieldSequence {
    pub fn new(spec: GridSpec, dt: f64, n_frames: usize, data: Vec<f64>) -> Result<Self, FdtdError> {
        let expected = n_frames * spec.nodes();
        if data.len() != expected {
            return Err(FdtdError::Shape {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            spec,
            dt,
            n_frames,
            data,
        })
    }

    pub fn from_frames(spec: GridSpec, dt: f64, frames: &[Vec<f64>]) -> Result<Self, FdtdError> {
        let mut data = Vec::with_capacity(frames.len() * spec.nodes());
        for f in frames {
            if f.len() != spec.nodes() {
                return Err(FdtdError::Shape {
                    expected: spec.nodes(),
                    got: f.len(),
                });
            }
            data.extend_from_slice(f);
        }
        Self::new(spec, dt, frames.len(), data)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        let k = self.spec.nodes();
        &self.data[n * k..(n + 1) * k]
    }

    pub fn frame_grid(&self, n: usize) -> Grid2D {
        Grid2D {
            spec: self.spec,
            values: self.frame(n).to_vec(),
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Index of the frame closest to time `t`.
    pub fn nearest_frame(&self, t: f64) -> usize {
        let k = (t / self.dt).round().max(0.0) as usize;
        k.min(self.n_frames - 1)
    }

    /// Pressure at a node over all frames.
    pub fn series(&self, i: usize, j: usize) -> Vec<f64> {
        let idx = i * self.spec.m + j;
        (0..self.n_frames).map(|n| self.frame(n)[idx]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Precomputed index sets for the absorbing wall update.
///
/// Edge nodes (excluding corners) are updated first from their interior
/// neighbours; corners then average the two one-way updates that use their
/// already-updated edge neighbours.
#[derive(Clone, Debug)]
struct AbcPlan {
    edge_bnd: Rc<[usize]>,
    edge_adj: Rc<[usize]>,
    corner_bnd: Rc<[usize]>,
    corner_adj: Rc<[usize]>,
    keep_interior: Tensor,
    keep_non_corner: Tensor,
}

impl AbcPlan {
    fn new(m: usize) -> Self {
        let mut edge_bnd = Vec::with_capacity(4 * m);
        let mut edge_adj = Vec::with_capacity(4 * m);
        let at = |i: usize, j: usize| i * m + j;
        for k in 1..m - 1 {
            for (b, a) in [
                (at(0, k), at(1, k)),
                (at(m - 1, k), at(m - 2, k)),
                (at(k, 0), at(k, 1)),
                (at(k, m - 1), at(k, m - 2)),
            ] {
                edge_bnd.push(b);
                edge_adj.push(a);
            }
        }
        let mut corner_bnd = Vec::with_capacity(8);
        let mut corner_adj = Vec::with_capacity(8);
        for (ci, cj, di, dj) in [
            (0, 0, 1, 1),
            (0, m - 1, 1, m - 2),
            (m - 1, 0, m - 2, 1),
            (m - 1, m - 1, m - 2, m - 2),
        ] {
            corner_bnd.extend([at(ci, cj), at(ci, cj)]);
            corner_adj.extend([at(di, cj), at(ci, dj)]);
        }
        let mut keep_interior = Tensor::zeros(&[m, m]);
        for i in 1..m - 1 {
            for j in 1..m - 1 {
                keep_interior.data_mut()[at(i, j)] = 1.0;
            }
        }
        let mut keep_non_corner = Tensor::full(&[m, m], 1.0);
        for &c in &corner_bnd {
            keep_non_corner.data_mut()[c] = 0.0;
        }
        Self {
            edge_bnd: edge_bnd.into(),
            edge_adj: edge_adj.into(),
            corner_bnd: corner_bnd.into(),
            corner_adj: corner_adj.into(),
            keep_interior,
            keep_non_corner,
        }
    }

    /// Plain-buffer version of [`AbcPlan::apply_tape`]; same operation order.
    fn apply(&self, next: &mut [f64], curr: &[f64], k: f64) {
        for (&b, &a) in self.edge_bnd.iter().zip(self.edge_adj.iter()) {
            next[b] = curr[a] + k * (next[a] - curr[b]);
        }
        let mut corner = [0.0; 4];
        for (n, (bs, as_)) in self
            .corner_bnd
            .chunks_exact(2)
            .zip(self.corner_adj.chunks_exact(2))
            .enumerate()
        {
            let mut acc = 0.0;
            for (&b, &a) in bs.iter().zip(as_) {
                acc += 0.5 * (curr[a] + k * (next[a] - curr[b]));
            }
            corner[n] = acc;
        }
        for (n, bs) in self.corner_bnd.chunks_exact(2).enumerate() {
            next[bs[0]] = corner[n];
        }
    }

    fn apply_tape<'t>(&self, next: Var<'t>, curr: Var<'t>, k: f64) -> Result<Var<'t>, GradError> {
        let tape = next.tape();
        let shape = next.shape();
        let edges = {
            let outward = curr.gather(Rc::clone(&self.edge_adj))?;
            let inner_next = next.gather(Rc::clone(&self.edge_adj))?;
            let wall_curr = curr.gather(Rc::clone(&self.edge_bnd))?;
            outward.add(&inner_next.sub(&wall_curr)?.scale(k))?
        };
        let keep = tape.constant(self.keep_interior.clone());
        let stage = next
            .mul(&keep)?
            .add(&edges.scatter_add(Rc::clone(&self.edge_bnd), &shape)?)?;
        let corners = {
            let outward = curr.gather(Rc::clone(&self.corner_adj))?;
            let inner_next = stage.gather(Rc::clone(&self.corner_adj))?;
            let wall_curr = curr.gather(Rc::clone(&self.corner_bnd))?;
            outward.add(&inner_next.sub(&wall_curr)?.scale(k))?.scale(0.5)
        };
        let keep = tape.constant(self.keep_non_corner.clone());
        stage
            .mul(&keep)?
            .add(&corners.scatter_add(Rc::clone(&self.corner_bnd), &shape)?)
    }
}

/// Unscaled five-point Laplacian; zero on the boundary ring.
pub fn laplacian(p: &Grid2D) -> Grid2D {
    let mut out = vec![0.0; p.values.len()];
    laplacian_forward(&p.values, p.spec.m, &mut out);
    Grid2D {
        spec: p.spec,
        values: out,
    }
}

/// Rewrites the wall values of `next` with the first-order one-way update.
pub fn apply_abc(next: &Grid2D, curr: &Grid2D, config: &SolverConfig) -> Grid2D {
    let mut out = next.values.clone();
    AbcPlan::new(next.spec.m).apply(&mut out, &curr.values, config.abc_coeff());
    Grid2D {
        spec: next.spec,
        values: out,
    }
}

/// Reusable stepping state for the plain-buffer path.
struct Stepper {
    m: usize,
    config: SolverConfig,
    plan: Option<AbcPlan>,
    lap: Vec<f64>,
}

impl Stepper {
    fn new(m: usize, config: SolverConfig) -> Self {
        let plan = match config.boundary {
            Boundary::Absorbing => Some(AbcPlan::new(m)),
            Boundary::Rigid => None,
        };
        Self {
            m,
            config,
            plan,
            lap: vec![0.0; m * m],
        }
    }

    fn laplacian(&mut self, p: &[f64]) {
        match self.config.boundary {
            Boundary::Absorbing => laplacian_forward(p, self.m, &mut self.lap),
            Boundary::Rigid => neumann_laplacian_forward(p, self.m, &mut self.lap),
        }
    }

    fn first(&mut self, p0: &[f64]) -> Vec<f64> {
        self.laplacian(p0);
        let h = 0.5 * self.config.lap_coeff();
        let mut next: Vec<f64> = p0.iter().zip(&self.lap).map(|(p, l)| p + h * l).collect();
        if let Some(plan) = &self.plan {
            plan.apply(&mut next, p0, self.config.abc_coeff());
        }
        next
    }

    fn step(&mut self, prev: &[f64], curr: &[f64]) -> Vec<f64> {
        self.laplacian(curr);
        let h = self.config.lap_coeff();
        let mut next: Vec<f64> = curr
            .iter()
            .zip(prev)
            .zip(&self.lap)
            .map(|((c, p), l)| (2.0 * c - p) + h * l)
            .collect();
        if let Some(plan) = &self.plan {
            plan.apply(&mut next, curr, self.config.abc_coeff());
        }
        next
    }
}

fn check_shapes(a: &Grid2D, b: &Grid2D) -> Result<(), FdtdError> {
    if a.spec.m < 3 {
        return Err(FdtdError::GridTooSmall(a.spec.m));
    }
    if a.values.len() != b.values.len() {
        return Err(FdtdError::Shape {
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    Ok(())
}

/// First step from the initial pressure with zero initial velocity.
pub fn step_first(p0: &Grid2D, config: &SolverConfig) -> Result<Grid2D, FdtdError> {
    config.courant_check()?;
    check_shapes(p0, p0)?;
    let values = Stepper::new(p0.spec.m, *config).first(&p0.values);
    Ok(Grid2D {
        spec: p0.spec,
        values,
    })
}

/// One leapfrog step `p_next = 2 p_curr - p_prev + C^2 L p_curr`, followed by
/// the wall update.
pub fn step(prev: &Grid2D, curr: &Grid2D, config: &SolverConfig) -> Result<Grid2D, FdtdError> {
    config.courant_check()?;
    check_shapes(curr, prev)?;
    let values = Stepper::new(curr.spec.m, *config).step(&prev.values, &curr.values);
    Ok(Grid2D {
        spec: curr.spec,
        values,
    })
}

/// Full rollout of `config.n_steps` frames starting from `p0`.
pub fn simulate(p0: &Grid2D, config: &SolverConfig) -> Result<FieldSequence, FdtdError> {
    config.courant_check()?;
    simulate_unchecked(p0, config)
}

/// [`simulate`] without the stability check.
pub fn simulate_unchecked(p0: &Grid2D, config: &SolverConfig) -> Result<FieldSequence, FdtdError> {
    check_shapes(p0, p0)?;
    let n = config.n_steps;
    let nodes = p0.spec.nodes();
    let mut data = Vec::with_capacity(n * nodes);
    data.extend_from_slice(&p0.values);
    check_frame(&p0.values, 0)?;
    let mut stepper = Stepper::new(p0.spec.m, *config);
    if n > 1 {
        let p1 = stepper.first(&p0.values);
        check_frame(&p1, 1)?;
        data.extend_from_slice(&p1);
    }
    for k in 2..n {
        let next = {
            let prev = &data[(k - 2) * nodes..(k - 1) * nodes];
            let curr = &data[(k - 1) * nodes..k * nodes];
            stepper.step(prev, curr)
        };
        check_frame(&next, k)?;
        data.extend_from_slice(&next);
    }
    FieldSequence::new(p0.spec, config.dt, n, data)
}

/// Continues leapfrog stepping from two given frames (no first-step rule).
pub fn continue_from(
    prev: &Grid2D,
    curr: &Grid2D,
    config: &SolverConfig,
    steps: usize,
) -> Result<Vec<Grid2D>, FdtdError> {
    config.courant_check()?;
    check_shapes(curr, prev)?;
    let mut stepper = Stepper::new(curr.spec.m, *config);
    let (mut a, mut b) = (prev.values.clone(), curr.values.clone());
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let next = stepper.step(&a, &b);
        check_frame(&next, k + 1)?;
        a = std::mem::replace(&mut b, next);
        out.push(Grid2D {
            spec: curr.spec,
            values: b.clone(),
        });
    }
    Ok(out)
}

fn check_frame(values: &[f64], step: usize) -> Result<(), FdtdError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FdtdError::NonFinite { step })
    }
}

fn lap_tape<'t>(p: Var<'t>, boundary: Boundary) -> Result<Var<'t>, GradError> {
    match boundary {
        Boundary::Absorbing => p.laplacian(),
        Boundary::Rigid => p.neumann_laplacian(),
    }
}

/// Differentiable rollout. `p0` must be an `(m, m)` node; returns every
/// frame, with frame 0 being `p0` itself.
pub fn simulate_tape<'t>(p0: Var<'t>, config: &SolverConfig) -> Result<Vec<Var<'t>>, FdtdError> {
    config.courant_check()?;
    let shape = p0.shape();
    let m = match shape[..] {
        [a, b] if a == b && a >= 3 => a,
        [a, _] => return Err(FdtdError::GridTooSmall(a)),
        _ => {
            return Err(FdtdError::Shape {
                expected: 2,
                got: shape.len(),
            })
        }
    };
    let plan = match config.boundary {
        Boundary::Absorbing => Some(AbcPlan::new(m)),
        Boundary::Rigid => None,
    };
    let k = config.abc_coeff();
    let h = config.lap_coeff();
    let mut frames = Vec::with_capacity(config.n_steps);
    frames.push(p0);
    if config.n_steps > 1 {
        let lap = lap_tape(p0, config.boundary)?;
        let mut p1 = p0.add(&lap.scale(0.5 * h))?;
        if let Some(plan) = &plan {
            p1 = plan.apply_tape(p1, p0, k)?;
        }
        frames.push(p1);
    }
    for step in 2..config.n_steps {
        let (prev, curr) = (frames[step - 2], frames[step - 1]);
        let lap = lap_tape(curr, config.boundary)?;
        let mut next = curr.scale(2.0).sub(&prev)?.add(&lap.scale(h))?;
        if let Some(plan) = &plan {
            next = plan.apply_tape(next, curr, k)?;
        }
        if !next.value().is_finite() {
            return Err(FdtdError::NonFinite { step });
        }
        frames.push(next);
    }
    Ok(frames)
}

fn check_sensors(sensors: &SensorSet, m: usize) -> Result<(), FdtdError> {
    for &(i, j) in &sensors.indices {
        if i >= m || j >= m {
            return Err(FdtdError::SensorOutOfRange { i, j, m });
        }
    }
    Ok(())
}

/// Predicted sensor data as a time-major `(N, M_ob)` node.
pub fn measure_tape<'t>(frames: &[Var<'t>], sensors: &SensorSet, m: usize) -> Result<Var<'t>, FdtdError> {
    check_sensors(sensors, m)?;
    let idx: Rc<[usize]> = sensors.flat_indices(m).into();
    let per_frame = frames
        .iter()
        .map(|f| f.gather(Rc::clone(&idx)))
        .collect::<Result<Vec<_>, _>>()?;
    let stacked = Var::concat(&per_frame)?;
    Ok(stacked.reshape(vec![frames.len(), sensors.len()])?)
}

/// Samples a field sequence at the sensor nodes.
pub fn measure(seq: &FieldSequence, sensors: &SensorSet) -> Result<crate::oracle::Measurements, FdtdError> {
    let m = seq.spec.m;
    check_sensors(sensors, m)?;
    let flat = sensors.flat_indices(m);
    let samples = seq.n_frames();
    let mut values = Vec::with_capacity(flat.len() * samples);
    for &k in &flat {
        values.extend((0..samples).map(|n| seq.frame(n)[k]));
    }
    crate::oracle::Measurements::new(flat.len(), samples, values).map_err(|_| FdtdError::Shape {
        expected: flat.len() * samples,
        got: 0,
    })
}

/// Trapezoid-weighted inner product matching the mirrored-wall stencil.
fn wall_weight(i: usize, j: usize, m: usize) -> f64 {
    let w = |k: usize| if k == 0 || k == m - 1 { 0.5 } else { 1.0 };
    w(i) * w(j)
}

/// Discrete leapfrog energy between consecutive frames,
/// `|v|^2 - (c/dr)^2 <p_next, L p_curr>` with `v = (p_next - p_curr) / dt`,
/// weighted so that it is exactly conserved by the rigid-wall scheme.
pub fn discrete_energy(curr: &[f64], next: &[f64], m: usize, config: &SolverConfig) -> f64 {
    let mut lap = vec![0.0; m * m];
    neumann_laplacian_forward(curr, m, &mut lap);
    let s = (config.c / config.dr).powi(2);
    let mut e = 0.0;
    for i in 0..m {
        for j in 0..m {
            let k = i * m + j;
            let v = (next[k] - curr[k]) / config.dt;
            e += wall_weight(i, j, m) * (v * v - s * next[k] * lap[k]);
        }
    }
    e
}

/// Energy for each consecutive frame pair of a sequence.
pub fn energy_series(seq: &FieldSequence, config: &SolverConfig) -> Vec<f64> {
    (0..seq.n_frames().saturating_sub(1))
        .map(|n| discrete_energy(seq.frame(n), seq.frame(n + 1), seq.spec.m, config))
        .collect()
}

/// Dense stencil matrix (rows = outputs) used to cross-check [`laplacian`].
#[cfg(test)]
fn dense_laplacian_matrix(m: usize) -> Vec<Vec<f64>> {
    let n = m * m;
    let mut a = vec![vec![0.0; n]; n];
    for i in 1..m - 1 {
        for j in 1..m - 1 {
            let r = i * m + j;
            a[r][r] = -4.0;
            a[r][r - 1] = 1.0;
            a[r][r + 1] = 1.0;
            a[r][r - m] = 1.0;
            a[r][r + m] = 1.0;
        }
    }
    a
}
