use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::geometry::Polygon;
use super::OracleError;
use crate::fdtd::GridSpec;

/// Sensor positions as grid node indices `(i, j)`, where `i` runs along x.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSet {
    pub indices: Vec<(usize, usize)>,
}

impl SensorSet {
    pub fn new(indices: Vec<(usize, usize)>) -> Self {
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Flat row-major node indices on a grid of side `m`.
    pub fn flat_indices(&self, m: usize) -> Vec<usize> {
        self.indices.iter().map(|&(i, j)| i * m + j).collect()
    }

    /// Physical coordinates on the given grid.
    pub fn positions(&self, grid: &GridSpec) -> Vec<(f64, f64)> {
        self.indices.iter().map(|&(i, j)| grid.position(i, j)).collect()
    }

    /// The same physical nodes on a grid refined by an integer factor.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            indices: self
                .indices
                .iter()
                .map(|&(i, j)| (i * factor, j * factor))
                .collect(),
        }
    }

    /// Same physical nodes on a grid coarsened by `factor`; fails when a
    /// sensor does not sit on a coarse node.
    pub fn coarsened(&self, factor: usize) -> Option<Self> {
        self.indices
            .iter()
            .map(|&(i, j)| (i % factor == 0 && j % factor == 0).then_some((i / factor, j / factor)))
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }
}

/// Pressure observed at each sensor for each time sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    sensors: usize,
    samples: usize,
    /// Sensor-major: `values[s * samples + n]`.
    values: Vec<f64>,
    /// SNR of the injected noise, `None` for clean data.
    pub snr_db: Option<f64>,
}

impl Measurements {
    pub fn new(sensors: usize, samples: usize, values: Vec<f64>) -> Result<Self, OracleError> {
        if values.len() != sensors * samples {
            return Err(OracleError::Shape {
                expected: sensors * samples,
                got: values.len(),
            });
        }
        Ok(Self {
            sensors,
            samples,
            values,
            snr_db: None,
        })
    }

    /// Builds from a time-major buffer (`data[n * sensors + s]`).
    pub fn from_time_major(sensors: usize, samples: usize, data: &[f64]) -> Result<Self, OracleError> {
        if data.len() != sensors * samples {
            return Err(OracleError::Shape {
                expected: sensors * samples,
                got: data.len(),
            });
        }
        let mut values = vec![0.0; data.len()];
        for n in 0..samples {
            for s in 0..sensors {
                values[s * samples + n] = data[n * sensors + s];
            }
        }
        Self::new(sensors, samples, values)
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, sensor: usize, sample: usize) -> f64 {
        self.values[sensor * self.samples + sample]
    }

    pub fn series(&self, sensor: usize) -> &[f64] {
        &self.values[sensor * self.samples..(sensor + 1) * self.samples]
    }

    /// Time-major copy, matching the layout produced by
    /// [`crate::fdtd::measure_tape`].
    pub fn time_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for s in 0..self.sensors {
            for n in 0..self.samples {
                out[n * self.sensors + s] = self.values[s * self.samples + n];
            }
        }
        out
    }

    /// Mean power over all sensors and samples.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// Rectangular sampling window in physical coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Region {
    pub fn square(lo: f64, hi: f64) -> Self {
        Self {
            x: (lo, hi),
            y: (lo, hi),
        }
    }

    fn contains(&self, (x, y): (f64, f64)) -> bool {
        const TOL: f64 = 1e-12;
        x >= self.x.0 - TOL && x <= self.x.1 + TOL && y >= self.y.0 - TOL && y <= self.y.1 + TOL
    }
}

const MAX_CONSECUTIVE_REJECTIONS: usize = 100_000;

/// Rejection-samples distinct grid nodes inside `region` (and `polygon`,
/// when given) with pairwise spacing of at least `min_dist`.
pub fn sample_sensors(
    count: usize,
    region: Region,
    min_dist: f64,
    grid: &GridSpec,
    polygon: Option<&Polygon>,
    seed: u64,
) -> Result<SensorSet, OracleError> {
    let lo_i = grid.index_at_or_above(region.x.0);
    let hi_i = grid.index_at_or_below(region.x.1);
    let lo_j = grid.index_at_or_above(region.y.0);
    let hi_j = grid.index_at_or_below(region.y.1);
    if lo_i > hi_i || lo_j > hi_j {
        return Err(OracleError::InfeasibleSensors { placed: 0, count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(count);
    let mut rejections = 0;
    while chosen.len() < count {
        let node = (rng.gen_range(lo_i..=hi_i), rng.gen_range(lo_j..=hi_j));
        let pos = grid.position(node.0, node.1);
        let inside = region.contains(pos) && polygon.map_or(true, |p| p.contains(pos));
        let spaced = chosen.iter().all(|&(i, j)| {
            let q = grid.position(i, j);
            (q.0 - pos.0).hypot(q.1 - pos.1) >= min_dist
        });
        if inside && spaced && !chosen.contains(&node) {
            chosen.push(node);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(OracleError::InfeasibleSensors {
                    placed: chosen.len(),
                    count,
                });
            }
        }
    }
    Ok(SensorSet::new(chosen))
}

/// Adds i.i.d. Gaussian noise at the requested SNR, with signal power
/// pooled over every sensor and sample. An infinite SNR returns the data
/// unchanged.
pub fn add_noise(clean: &Measurements, snr_db: f64, seed: u64) -> Result<Measurements, OracleError> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(OracleError::InvalidSnr(snr_db));
    }
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    let power = clean.power();
    if power <= 0.0 {
        return Err(OracleError::ZeroSignalPower);
    }
    let variance = power / 10f64.powf(snr_db / 10.0);
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite positive deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = clean.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(Measurements {
        sensors: clean.sensors,
        samples: clean.samples,
        values,
        snr_db: Some(snr_db),
    })
}
