//! Gray-code Sobol sequence (up to three dimensions) and boundary
//! collocation built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BITS: usize = 32;

/// Primitive polynomial degree, coefficient bits and initial direction
/// numbers for dimensions two and three (dimension one is van der Corput).
const POLYS: [(u32, u32, &[u32]); 2] = [(1, 0, &[1]), (2, 1, &[1, 3])];

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = POLYS[dim - 1];
    let s = s as usize;
    for k in 0..s {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// Stateful Sobol stream; each call continues where the last one stopped.
#[derive(Clone, Debug)]
pub struct SobolStream {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

pub const MAX_SOBOL_DIMS: usize = 1 + POLYS.len();

impl SobolStream {
    /// New stream positioned after the all-zero point.
    pub fn new(dims: usize) -> Self {
        assert!(
            (1..=MAX_SOBOL_DIMS).contains(&dims),
            "Sobol stream supports 1 to {MAX_SOBOL_DIMS} dimensions"
        );
        let mut s = Self {
            directions: (0..dims).map(direction_numbers).collect(),
            state: vec![0; dims],
            index: 0,
        };
        s.advance();
        s
    }

    /// Stream that skips its first `offset` points.
    pub fn with_offset(dims: usize, offset: u64) -> Self {
        let mut s = Self::new(dims);
        for _ in 0..offset {
            s.advance();
        }
        s
    }

    pub fn dims(&self) -> usize {
        self.state.len()
    }

    /// Index of the next point in the underlying sequence.
    pub fn position(&self) -> u64 {
        self.index
    }

    fn advance(&mut self) {
        let c = self.index.trailing_ones() as usize;
        for (x, v) in self.state.iter_mut().zip(&self.directions) {
            *x ^= v[c.min(BITS - 1)];
        }
        self.index += 1;
    }

    /// Next point in the unit cube.
    pub fn next_point(&mut self) -> Vec<f64> {
        let scale = 1.0 / (1u64 << BITS) as f64;
        let p = self.state.iter().map(|&x| x as f64 * scale).collect();
        self.advance();
        p
    }

    /// Next `count` points mapped onto `bounds`, row-major `(count, dims)`.
    pub fn sample(&mut self, count: usize, bounds: &[(f64, f64)]) -> Vec<f64> {
        assert_eq!(bounds.len(), self.dims());
        let mut out = Vec::with_capacity(count * bounds.len());
        for _ in 0..count {
            for (u, &(lo, hi)) in self.next_point().into_iter().zip(bounds) {
                out.push(lo + u * (hi - lo));
            }
        }
        out
    }
}

/// Space-time points on the walls of `[0, side]^2 x [0, duration]` with
/// their outward unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryBatch {
    /// Row-major `(count, 3)`: x, y, t.
    pub points: Vec<f64>,
    pub normals: Vec<(f64, f64)>,
}

/// Edge choice is uniform from `rng`; the position along the edge and the
/// time come from the two-dimensional Sobol `stream`.
pub fn boundary_collocation(
    count: usize,
    side: f64,
    duration: f64,
    stream: &mut SobolStream,
    rng: &mut ChaCha8Rng,
) -> BoundaryBatch {
    let mut points = Vec::with_capacity(3 * count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let u = stream.next_point();
        let s = u[0] * side;
        let t = u[1] * duration;
        let (x, y, n) = match rng.gen_range(0..4) {
            0 => (0.0, s, (-1.0, 0.0)),
            1 => (side, s, (1.0, 0.0)),
            2 => (s, 0.0, (0.0, -1.0)),
            _ => (s, side, (0.0, 1.0)),
        };
        points.extend([x, y, t]);
        normals.push(n);
    }
    BoundaryBatch { points, normals }
}

/// Deterministic RNG for edge selection.
pub fn edge_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
