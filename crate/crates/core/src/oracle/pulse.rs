//! Free-space field radiated by a Gaussian initial pressure with zero
//! initial velocity, evaluated through its Hankel-transform representation.

use super::bessel::bessel_j0;
use super::quadrature::integrate;
use super::OracleError;
use crate::fdtd::{FieldSequence, GridSpec};

/// Truncation of the scaled wavenumber `xi * sigma`; the Gaussian weight is
/// below 1e-31 beyond it.
pub const SCALED_CUTOFF: f64 = 12.0;
/// Absolute tolerance on the integral for a unit-amplitude pulse.
pub const QUAD_TOL: f64 = 1e-9;
const MAX_PIECES: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pulse {
    pub center: (f64, f64),
    pub amplitude: f64,
    pub sigma: f64,
}

impl Pulse {
    pub fn new(center: (f64, f64), amplitude: f64, sigma: f64) -> Result<Self, OracleError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(OracleError::NonPositive { name: "sigma", value: sigma });
        }
        Ok(Self {
            center,
            amplitude,
            sigma,
        })
    }

    /// Initial condition `A exp(-|r - r0|^2 / (2 sigma^2))`.
    pub fn initial(&self, (x, y): (f64, f64)) -> f64 {
        let d2 = (x - self.center.0).powi(2) + (y - self.center.1).powi(2);
        self.amplitude * (-0.5 * d2 / (self.sigma * self.sigma)).exp()
    }

    pub fn distance(&self, (x, y): (f64, f64)) -> f64 {
        (x - self.center.0).hypot(y - self.center.1)
    }
}

/// Unit-amplitude radial profile at distance `r` and time `t`.
pub fn radial_field(r: f64, t: f64, sigma: f64, c: f64) -> Result<f64, OracleError> {
    if t < 0.0 || t.is_nan() {
        return Err(OracleError::NegativeTime(t));
    }
    let tau = c * t / sigma;
    let rho = r / sigma;
    let oscillations = SCALED_CUTOFF * (tau + rho) / std::f64::consts::TAU;
    let pieces = oscillations.ceil() as usize + 4;
    integrate(
        |u: f64| (-0.5 * u * u).exp() * (u * tau).cos() * bessel_j0(u * rho) * u,
        0.0,
        SCALED_CUTOFF,
        QUAD_TOL,
        pieces,
        MAX_PIECES,
    )
    .map(|res| res.value)
    .map_err(|f| OracleError::Quadrature {
        estimate: f.estimate,
        error: f.error,
        tolerance: f.tolerance,
    })
}

/// Pressure of one pulse at space-time points `(x, y, t)`.
pub fn gaussian_pulse_field(pulse: &Pulse, points: &[(f64, f64, f64)], c: f64) -> Result<Vec<f64>, OracleError> {
    points
        .iter()
        .map(|&(x, y, t)| Ok(pulse.amplitude * radial_field(pulse.distance((x, y)), t, pulse.sigma, c)?))
        .collect()
}

/// Linear superposition of several pulses.
pub fn superpose(pulses: &[Pulse], points: &[(f64, f64, f64)], c: f64) -> Result<Vec<f64>, OracleError> {
    let mut out = vec![0.0; points.len()];
    for pulse in pulses {
        for (o, v) in out.iter_mut().zip(gaussian_pulse_field(pulse, points, c)?) {
            *o += v;
        }
    }
    Ok(out)
}

/// Radial profile sampled on a uniform grid, read back by cubic
/// Lagrange interpolation.
#[derive(Clone, Debug)]
pub struct RadialTable {
    step: f64,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn build(sigma: f64, t: f64, c: f64, r_max: f64, step: f64) -> Result<Self, OracleError> {
        let n = (r_max / step).ceil() as usize + 4;
        let values = (0..n)
            .map(|k| radial_field(k as f64 * step, t, sigma, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { step, values })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let s = r / self.step;
        let last = self.values.len() - 1;
        if s >= last as f64 {
            return self.values[last];
        }
        // four-point stencil starting one node to the left, mirrored at r = 0
        let k = s.floor() as isize;
        let u = s - k as f64;
        let at = |i: isize| self.values[i.unsigned_abs().min(last)];
        let (f0, f1, f2, f3) = (at(k - 1), at(k), at(k + 1), at(k + 2));
        let w0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let w1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let w2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let w3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        w0 * f0 + w1 * f1 + w2 * f2 + w3 * f3
    }
}

/// Default radial table spacing relative to the pulse width.
pub const TABLE_STEP_PER_SIGMA: f64 = 1.0 / 20.0;

/// Superposed field on every node of `grid` at the frame times
/// `n * dt`, `n = 0..n_frames`. Frame 0 uses the closed-form initial
/// condition; later frames read tabulated radial profiles shared by pulses
/// of equal width.
pub fn pulses_on_grid(
    pulses: &[Pulse],
    grid: &GridSpec,
    dt: f64,
    n_frames: usize,
    c: f64,
) -> Result<FieldSequence, OracleError> {
    let coords = grid.coordinates();
    let mut widths: Vec<f64> = pulses.iter().map(|p| p.sigma).collect();
    widths.sort_by(f64::total_cmp);
    widths.dedup();
    let r_max = pulses
        .iter()
        .flat_map(|p| {
            let e = grid.extent();
            [(0.0, 0.0), (e, 0.0), (0.0, e), (e, e)].map(|(x, y)| p.distance((grid.origin.0 + x, grid.origin.1 + y)))
        })
        .fold(0.0, f64::max);
    let mut data = Vec::with_capacity(n_frames * coords.len());
    for n in 0..n_frames {
        if n == 0 {
            data.extend(coords.iter().map(|&q| pulses.iter().map(|p| p.initial(q)).sum::<f64>()));
            continue;
        }
        let t = n as f64 * dt;
        let tables = widths
            .iter()
            .map(|&s| RadialTable::build(s, t, c, r_max, s * TABLE_STEP_PER_SIGMA))
            .collect::<Result<Vec<_>, _>>()?;
        let table_for = |p: &Pulse| &tables[widths.iter().position(|&s| s == p.sigma).expect("width listed")];
        let start = data.len();
        data.resize(start + coords.len(), 0.0);
        for p in pulses {
            let table = table_for(p);
            for (o, &q) in data[start..].iter_mut().zip(&coords) {
                *o += p.amplitude * table.eval(p.distance(q));
            }
        }
    }
    FieldSequence::new(*grid, dt, n_frames, data).map_err(OracleError::from)
}
