use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::{mirror_point, distance_to_line, Polygon};
use super::pulse::{pulses_on_grid, Pulse};
use super::OracleError;
use crate::fdtd::{simulate, FieldSequence, Grid2D, GridSpec, SolverConfig};

/// Corners of the trapezoidal enclosure used by the reverberant scene.
pub const TRAPEZOID: [(f64, f64); 4] = [(0.3, 0.3), (0.3, 0.7), (0.7, 0.45), (0.7, 0.3)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    SinglePulse,
    MultiPulse,
    TrapezoidReverb,
    Ring,
}

/// Annular initial condition `exp(-(|r - r0| - R)^2 / (2 sigma^2))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingSpec {
    pub center: (f64, f64),
    pub radius: f64,
    pub sigma: f64,
}

/// Ground-truth initial condition of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub pulses: Vec<Pulse>,
    pub ring: Option<RingSpec>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn single_pulse(center: (f64, f64), sigma: f64) -> Result<Self, OracleError> {
        Ok(Self {
            kind: SceneKind::SinglePulse,
            pulses: vec![Pulse::new(center, 1.0, sigma)?],
            ring: None,
            seed: 0,
        })
    }

    /// `count` pulses with centres uniform in `[lo, hi]^2` and amplitudes
    /// uniform in `[-1, 1]`.
    pub fn random_pulses(count: usize, lo: f64, hi: f64, sigma: f64, seed: u64) -> Result<Self, OracleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pulses = (0..count)
            .map(|_| {
                let center = (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
                Pulse::new(center, rng.gen_range(-1.0..=1.0), sigma)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            kind: SceneKind::MultiPulse,
            pulses,
            ring: None,
            seed,
        })
    }

    /// Direct sound plus three first-order image sources in the trapezoid.
    /// `source` defaults to the trapezoid centroid and `walls` to the three
    /// walls closest to it.
    pub fn trapezoid(source: Option<(f64, f64)>, walls: Option<[usize; 3]>, sigma: f64) -> Result<Self, OracleError> {
        let room = Polygon::new(TRAPEZOID.to_vec());
        let source = source.unwrap_or_else(|| room.centroid());
        let pulses = image_sources(source, &room, walls)?
            .into_iter()
            .map(|c| Pulse::new(c, 1.0, sigma))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            kind: SceneKind::TrapezoidReverb,
            pulses,
            ring: None,
            seed: 0,
        })
    }

    pub fn ring(center: (f64, f64), radius: f64, sigma: f64) -> Result<Self, OracleError> {
        if !(radius > 0.0) {
            return Err(OracleError::NonPositive { name: "radius", value: radius });
        }
        if !(sigma > 0.0) {
            return Err(OracleError::NonPositive { name: "sigma", value: sigma });
        }
        Ok(Self {
            kind: SceneKind::Ring,
            pulses: Vec::new(),
            ring: Some(RingSpec { center, radius, sigma }),
            seed: 0,
        })
    }

    /// Checks that every source centre lies in the square `[0, side]^2`.
    pub fn validate(&self, side: f64) -> Result<(), OracleError> {
        let centers = self
            .pulses
            .iter()
            .map(|p| p.center)
            .chain(self.ring.map(|r| r.center));
        for (x, y) in centers {
            if !(0.0..=side).contains(&x) || !(0.0..=side).contains(&y) {
                return Err(OracleError::OutsideDomain { x, y });
            }
        }
        Ok(())
    }

    /// Initial pressure sampled on the grid nodes.
    pub fn initial_condition(&self, grid: &GridSpec) -> Result<Grid2D, OracleError> {
        if let Some(r) = self.ring {
            return ring_initial(r.center, r.radius, r.sigma, grid);
        }
        let values = grid
            .coordinates()
            .into_iter()
            .map(|q| self.pulses.iter().map(|p| p.initial(q)).sum())
            .collect();
        Ok(Grid2D::new(*grid, values)?)
    }

    /// Reference field on the solver's grid: analytic for pulse scenes,
    /// a finite-difference rollout for the ring.
    pub fn reference(&self, grid: &GridSpec, config: &SolverConfig) -> Result<FieldSequence, OracleError> {
        match self.kind {
            SceneKind::Ring => Ok(simulate(&self.initial_condition(grid)?, config)?),
            _ => pulses_on_grid(&self.pulses, grid, config.dt, config.n_steps, config.c),
        }
    }
}

/// `[source, image_1, image_2, image_3]`: the source followed by its mirror
/// images across three walls of `room`.
pub fn image_sources(
    source: (f64, f64),
    room: &Polygon,
    walls: Option<[usize; 3]>,
) -> Result<Vec<(f64, f64)>, OracleError> {
    if !room.contains_strictly(source) {
        return Err(OracleError::SourceOutsideRoom {
            x: source.0,
            y: source.1,
        });
    }
    let edges: Vec<_> = room.edges().collect();
    let walls = match walls {
        Some(w) => {
            if let Some(&bad) = w.iter().find(|&&k| k >= edges.len()) {
                return Err(OracleError::InvalidWall { index: bad, walls: edges.len() });
            }
            w
        }
        None => {
            let mut order: Vec<usize> = (0..edges.len()).collect();
            order.sort_by(|&i, &j| {
                let di = distance_to_line(source, edges[i].0, edges[i].1);
                let dj = distance_to_line(source, edges[j].0, edges[j].1);
                di.total_cmp(&dj)
            });
            [order[0], order[1], order[2]]
        }
    };
    let mut out = vec![source];
    out.extend(walls.iter().map(|&k| mirror_point(source, edges[k].0, edges[k].1)));
    Ok(out)
}

/// Image sources in the standard trapezoid.
pub fn image_sources_trapezoid(source: (f64, f64), corners: [(f64, f64); 4]) -> Result<Vec<(f64, f64)>, OracleError> {
    image_sources(source, &Polygon::new(corners.to_vec()), None)
}

pub fn ring_initial(center: (f64, f64), radius: f64, sigma: f64, grid: &GridSpec) -> Result<Grid2D, OracleError> {
    if !(radius > 0.0) {
        return Err(OracleError::NonPositive { name: "radius", value: radius });
    }
    Ok(Grid2D::from_fn(*grid, |x, y| {
        let d = (x - center.0).hypot(y - center.1) - radius;
        (-0.5 * d * d / (sigma * sigma)).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_images_are_equidistant_from_their_walls() {
        let room = Polygon::new(TRAPEZOID.to_vec());
        let src = room.centroid();
        let centers = image_sources_trapezoid(src, TRAPEZOID).unwrap();
        assert_eq!(centers.len(), 4);
        assert_eq!(centers[0], src);
        let edges: Vec<_> = room.edges().collect();
        for img in &centers[1..] {
            let wall = edges
                .iter()
                .find(|(a, b)| {
                    let mid = ((img.0 + src.0) / 2.0, (img.1 + src.1) / 2.0);
                    distance_to_line(mid, *a, *b) < 1e-12
                })
                .expect("image mirrors some wall");
            let ds = distance_to_line(src, wall.0, wall.1);
            let di = distance_to_line(*img, wall.0, wall.1);
            assert!((ds - di).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_wall_choice_and_errors() {
        let room = Polygon::new(TRAPEZOID.to_vec());
        let c = image_sources((0.5, 0.5), &room, Some([0, 1, 3])).unwrap();
        assert!((c[1].0 - 0.1).abs() < 1e-15 && (c[1].1 - 0.5).abs() < 1e-15);
        assert!(matches!(
            image_sources((0.9, 0.9), &room, None),
            Err(OracleError::SourceOutsideRoom { .. })
        ));
        assert!(image_sources((0.5, 0.4), &room, Some([0, 1, 7])).is_err());
    }

    #[test]
    fn ring_examples() {
        let grid = GridSpec::unit_square(101);
        let g = ring_initial((0.5, 0.5), 0.25, 0.02, &grid).unwrap();
        assert!((g.get(75, 50) - 1.0).abs() < 1e-12);
        assert!(g.get(50, 50) < 1e-30);
        assert!(ring_initial((0.5, 0.5), 0.0, 0.02, &grid).is_err());
    }

    #[test]
    fn random_pulses_are_seeded_and_bounded() {
        let a = SceneSpec::random_pulses(5, 0.3, 0.7, 0.02, 4).unwrap();
        let b = SceneSpec::random_pulses(5, 0.3, 0.7, 0.02, 4).unwrap();
        assert_eq!(a, b);
        for p in &a.pulses {
            assert!((0.3..=0.7).contains(&p.center.0) && (0.3..=0.7).contains(&p.center.1));
            assert!((-1.0..=1.0).contains(&p.amplitude));
        }
        a.validate(1.0).unwrap();
    }

    #[test]
    fn single_pulse_initial_peaks_at_center() {
        let s = SceneSpec::single_pulse((0.5, 0.5), 0.02).unwrap();
        let g = s.initial_condition(&GridSpec::unit_square(101)).unwrap();
        assert_eq!(g.get(50, 50), 1.0);
    }
}
