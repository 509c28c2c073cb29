//! Sine-activated multilayer perceptron (SIREN).
//!
//! Hidden layers compute `sin(omega * x W + b)` with `omega = omega0` on the
//! first layer and one elsewhere; the output layer is affine. Weights are
//! stored `(fan_in, fan_out)` so a batch of row vectors multiplies on the
//! left. Physical coordinates are mapped affinely to `[-1, 1]` by an
//! [`InputScaling`] before the first layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use thiserror::Error;

use crate::fdtd::{Grid2D, GridSpec};
use crate::grad::{GradError, Jet2, JetLayout, Tape, Tensor, Var};

pub const DEFAULT_OMEGA0: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SirenError {
    #[error("input has {got} columns, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("layer {layer}: expected {expected:?}, found {found:?}")]
    LayerShape {
        layer: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("architecture needs positive widths")]
    EmptyLayer,
    #[error("axis {axis} out of range for {dims} inputs")]
    Axis { axis: usize, dims: usize },
    #[error(transparent)]
    Grad(#[from] GradError),
}

/// Layer widths: input, hidden layers, output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arch {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
}

impl Arch {
    /// Initial-condition network: `(x, y) -> p`, three hidden layers of 64.
    pub fn dp() -> Self {
        Self {
            inputs: 2,
            hidden: vec![64; 3],
            outputs: 1,
        }
    }

    /// Space-time network: `(x, y, t) -> p`, four hidden layers of 128.
    pub fn pinn() -> Self {
        Self {
            inputs: 3,
            hidden: vec![128; 4],
            outputs: 1,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.inputs];
        w.extend(&self.hidden);
        w.push(self.outputs);
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `(fan_in, fan_out)`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub omega0: f64,
}

/// Per-axis affine map from the physical box onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputScaling {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaling {
    pub fn new(bounds: &[(f64, f64)]) -> Self {
        Self {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
        }
    }

    /// Unit square, or unit square times `[0, duration]`.
    pub fn square(side: f64, duration: Option<f64>) -> Self {
        let mut b = vec![(0.0, side), (0.0, side)];
        b.extend(duration.map(|d| (0.0, d)));
        Self::new(&b)
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    /// `d(normalized) / d(physical)` along `axis`.
    pub fn gain(&self, axis: usize) -> f64 {
        2.0 / (self.hi[axis] - self.lo[axis])
    }

    pub fn apply(&self, axis: usize, v: f64) -> f64 {
        (v - self.lo[axis]) * self.gain(axis) - 1.0
    }

    /// Normalizes a row-major `(B, dims)` buffer.
    pub fn normalize(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.dims();
        coords
            .iter()
            .enumerate()
            .map(|(k, &v)| self.apply(k % d, v))
            .collect()
    }
}

impl MlpParams {
    pub fn init(arch: &Arch, omega0: f64, seed: u64) -> Result<Self, SirenError> {
        let widths = arch.widths();
        if widths.iter().any(|&w| w == 0) {
            return Err(SirenError::EmptyLayer);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = weight_bound(l, fan_in);
                let wdist = Uniform::new_inclusive(-bound, bound);
                let bb = 1.0 / (fan_in as f64).sqrt();
                let bdist = Uniform::new_inclusive(-bb, bb);
                let weight = (0..fan_in * fan_out).map(|_| wdist.sample(&mut rng)).collect();
                let bias = (0..fan_out).map(|_| bdist.sample(&mut rng)).collect();
                Layer {
                    weight: Tensor::matrix(fan_in, fan_out, weight).expect("sized"),
                    bias: Tensor::vector(bias),
                }
            })
            .collect();
        Ok(Self { layers, omega0 })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn arch(&self) -> Arch {
        Arch {
            inputs: self.inputs(),
            hidden: self.layers[..self.layers.len() - 1].iter().map(Layer::fan_out).collect(),
            outputs: self.outputs(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in the order weight, bias, weight, bias, ...
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Checks that consecutive layer shapes chain.
    pub fn validate(&self) -> Result<(), SirenError> {
        if self.layers.is_empty() {
            return Err(SirenError::EmptyLayer);
        }
        let mut width = self.inputs();
        for (k, l) in self.layers.iter().enumerate() {
            let (r, c) = l.weight.dims2().ok_or(SirenError::EmptyLayer)?;
            if r != width || l.bias.len() != c {
                return Err(SirenError::LayerShape {
                    layer: k,
                    expected: vec![width, c],
                    found: vec![r, c, l.bias.len()],
                });
            }
            width = c;
        }
        Ok(())
    }

    /// Registers every parameter as a tracked leaf.
    pub fn track<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors().into_iter().map(|t| tape.var(t.clone())).collect()
    }

    /// Registers every parameter as an untracked constant.
    pub fn constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors().into_iter().map(|t| tape.constant(t.clone())).collect()
    }

    fn layer_omega(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.omega0
        } else {
            1.0
        }
    }

    /// Tape-free evaluation at physical coordinates `(B, inputs)`.
    pub fn eval(&self, coords: &Tensor, scaling: &InputScaling) -> Result<Tensor, SirenError> {
        let (b, d) = coords.dims2().ok_or(SirenError::InputDim {
            expected: self.inputs(),
            got: 0,
        })?;
        if d != self.inputs() || scaling.dims() != d {
            return Err(SirenError::InputDim {
                expected: self.inputs(),
                got: d,
            });
        }
        let mut out = Vec::with_capacity(b * self.outputs());
        let x = scaling.normalize(coords.data());
        const CHUNK: usize = 4096;
        for rows in x.chunks(CHUNK * d) {
            out.extend(self.eval_normalized(rows, rows.len() / d));
        }
        Ok(Tensor::matrix(b, self.outputs(), out)?)
    }

    fn eval_normalized(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let (k, n) = (layer.fan_in(), layer.fan_out());
            let mut z = vec![0.0; rows * n];
            crate::grad::gemm(&h, false, layer.weight.data(), false, rows, k, n, &mut z, false);
            let omega = self.layer_omega(l);
            for row in z.chunks_exact_mut(n) {
                for (v, b) in row.iter_mut().zip(layer.bias.data()) {
                    *v = if l == last { *v + b } else { (omega * *v + b).sin() };
                }
            }
            h = z;
        }
        h
    }

    /// Samples a single-output network on every node of a grid.
    pub fn eval_grid(&self, grid: &GridSpec, scaling: &InputScaling) -> Result<Grid2D, SirenError> {
        let coords = grid_coords(grid);
        let out = self.eval(&coords, scaling)?;
        Ok(Grid2D {
            spec: *grid,
            values: out.into_data(),
        })
    }

    /// Scalar jet of output 0 at `point` along `axis` of the physical
    /// coordinates, computed with [`Jet2`] arithmetic.
    pub fn jet2_at(&self, point: &[f64], axis: usize, scaling: &InputScaling) -> Result<Jet2, SirenError> {
        if point.len() != self.inputs() {
            return Err(SirenError::InputDim {
                expected: self.inputs(),
                got: point.len(),
            });
        }
        if axis >= point.len() {
            return Err(SirenError::Axis {
                axis,
                dims: point.len(),
            });
        }
        let mut h: Vec<Jet2> = point
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let u = scaling.apply(k, v);
                if k == axis {
                    Jet2 {
                        value: u,
                        d1: scaling.gain(k),
                        d2: 0.0,
                    }
                } else {
                    Jet2::constant(u)
                }
            })
            .collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (k, n) = (layer.fan_in(), layer.fan_out());
            let w = layer.weight.data();
            h = (0..n)
                .map(|j| {
                    let mut z = Jet2::constant(0.0);
                    for i in 0..k {
                        z = z + h[i].scale(w[i * n + j]);
                    }
                    if l == last {
                        z + Jet2::constant(layer.bias.data()[j])
                    } else {
                        (z.scale(self.layer_omega(l)) + Jet2::constant(layer.bias.data()[j])).sin()
                    }
                })
                .collect();
        }
        Ok(h[0])
    }
}

fn weight_bound(layer: usize, fan_in: usize) -> f64 {
    if layer == 0 {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt()
    }
}

/// Node coordinates of a grid as a `(m*m, 2)` tensor, row-major.
pub fn grid_coords(grid: &GridSpec) -> Tensor {
    let data = grid.coordinates().into_iter().flat_map(|(x, y)| [x, y]).collect();
    Tensor::matrix(grid.nodes(), 2, data).expect("sized")
}

/// Tape forward pass for already-normalized inputs `(B, inputs)`.
pub fn forward<'t>(params: &[Var<'t>], omega0: f64, x: Var<'t>) -> Result<Var<'t>, SirenError> {
    let n_layers = params.len() / 2;
    let mut h = x;
    for l in 0..n_layers {
        let (w, b) = (params[2 * l], params[2 * l + 1]);
        let z = h.matmul(&w)?;
        h = if l + 1 == n_layers {
            z.add_bias(&b)?
        } else {
            let omega = if l == 0 { omega0 } else { 1.0 };
            z.scale(omega).add_bias(&b)?.sin()
        };
    }
    Ok(h)
}

/// Normalized coordinates as an untracked tape constant.
pub fn input_constant<'t>(tape: &'t Tape, coords: &Tensor, scaling: &InputScaling) -> Result<Var<'t>, SirenError> {
    let (b, d) = coords.dims2().ok_or(SirenError::InputDim {
        expected: scaling.dims(),
        got: 0,
    })?;
    if d != scaling.dims() {
        return Err(SirenError::InputDim {
            expected: scaling.dims(),
            got: d,
        });
    }
    Ok(tape.constant(Tensor::matrix(b, d, scaling.normalize(coords.data()))?))
}

/// Network output and its derivatives along selected input axes, each a
/// `(B, 1)` tape node.
#[derive(Clone, Debug)]
pub struct JetOutput<'t> {
    pub value: Var<'t>,
    /// First derivative along each requested axis.
    pub d1: Vec<Var<'t>>,
    /// Second derivative along each requested axis; empty for order 1.
    pub d2: Vec<Var<'t>>,
}

/// Stacked jet input for physical coordinates `(B, dims)`: the value block
/// holds normalized coordinates, each derivative block the seed direction.
pub fn jet_inputs(coords: &Tensor, scaling: &InputScaling, axes: &[usize], order: usize) -> Result<(Tensor, JetLayout), SirenError> {
    let (b, d) = coords.dims2().ok_or(SirenError::InputDim {
        expected: scaling.dims(),
        got: 0,
    })?;
    if d != scaling.dims() {
        return Err(SirenError::InputDim {
            expected: scaling.dims(),
            got: d,
        });
    }
    if let Some(&axis) = axes.iter().find(|&&a| a >= d) {
        return Err(SirenError::Axis { axis, dims: d });
    }
    let layout = JetLayout {
        batch: b,
        axes: axes.len(),
        order,
    };
    let mut data = vec![0.0; layout.channels() * b * d];
    data[..b * d].copy_from_slice(&scaling.normalize(coords.data()));
    for (k, &axis) in axes.iter().enumerate() {
        let start = layout.d1_channel(k) * b * d;
        let g = scaling.gain(axis);
        for row in 0..b {
            data[start + row * d + axis] = g;
        }
    }
    Ok((Tensor::matrix(layout.channels() * b, d, data)?, layout))
}

/// Forward pass that carries first (and optionally second) derivatives of a
/// single-output network along `axes` of the physical coordinates.
pub fn jet_forward<'t>(
    params: &[Var<'t>],
    omega0: f64,
    coords: &Tensor,
    scaling: &InputScaling,
    axes: &[usize],
    order: usize,
) -> Result<JetOutput<'t>, SirenError> {
    let tape = params[0].tape();
    let (input, layout) = jet_inputs(coords, scaling, axes, order)?;
    let b = layout.batch;
    let n_layers = params.len() / 2;
    let mut h = tape.constant(input);
    for l in 0..n_layers {
        let (w, bias) = (params[2 * l], params[2 * l + 1]);
        let z = h.matmul(&w)?;
        h = if l + 1 == n_layers {
            z.add_bias_rows(&bias, b)?
        } else {
            let omega = if l == 0 { omega0 } else { 1.0 };
            z.scale(omega).add_bias_rows(&bias, b)?.jet_sin(layout)?
        };
    }
    let value = h.slice_rows(0, b)?;
    let mut d1 = Vec::with_capacity(axes.len());
    let mut d2 = Vec::new();
    for k in 0..axes.len() {
        d1.push(h.slice_rows(layout.d1_channel(k) * b, b)?);
        if order == 2 {
            d2.push(h.slice_rows(layout.d2_channel(k) * b, b)?);
        }
    }
    Ok(JetOutput { value, d1, d2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_arch() -> Arch {
        Arch {
            inputs: 3,
            hidden: vec![8, 8],
            outputs: 1,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = MlpParams::init(&Arch::dp(), DEFAULT_OMEGA0, 7).unwrap();
        let b = MlpParams::init(&Arch::dp(), DEFAULT_OMEGA0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_params(), 8577);
        assert_eq!(a.arch(), Arch::dp());
        for (l, layer) in a.layers.iter().enumerate() {
            let bound = weight_bound(l, layer.fan_in());
            assert!(layer.weight.data().iter().all(|w| w.abs() <= bound));
            let bb = 1.0 / (layer.fan_in() as f64).sqrt();
            assert!(layer.bias.data().iter().all(|v| v.abs() <= bb));
        }
        assert_ne!(a, MlpParams::init(&Arch::dp(), DEFAULT_OMEGA0, 8).unwrap());
    }

    #[test]
    fn pinn_parameter_count() {
        let p = MlpParams::init(&Arch::pinn(), DEFAULT_OMEGA0, 0).unwrap();
        assert_eq!(p.num_params(), (3 * 128 + 128) + 3 * (128 * 128 + 128) + 129);
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut p = MlpParams::init(&Arch::dp(), DEFAULT_OMEGA0, 1).unwrap();
        for l in &mut p.layers {
            l.weight.scale_in_place(0.0);
        }
        p.layers.last_mut().unwrap().bias = Tensor::vector(vec![0.37]);
        let grid = GridSpec::unit_square(13);
        let g = p.eval_grid(&grid, &InputScaling::square(1.0, None)).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.37));
    }

    #[test]
    fn grid_evaluation_is_resolution_free() {
        let p = MlpParams::init(&Arch::dp(), DEFAULT_OMEGA0, 3).unwrap();
        let s = InputScaling::square(1.0, None);
        let coarse = GridSpec::unit_square(100);
        let fine = coarse.refined(2);
        let gc = p.eval_grid(&coarse, &s).unwrap();
        let gf = p.eval_grid(&fine, &s).unwrap();
        assert_eq!(gc.values.len(), 10_000);
        for i in 0..coarse.m {
            for j in 0..coarse.m {
                assert_eq!(gc.get(i, j), gf.get(2 * i, 2 * j));
            }
        }
    }

    #[test]
    fn tape_forward_matches_plain_eval() {
        let p = MlpParams::init(&small_arch(), 5.0, 2).unwrap();
        let s = InputScaling::square(1.0, Some(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let coords = Tensor::matrix(20, 3, (0..60).map(|_| rng.gen_range(0.0..0.5)).collect()).unwrap();
        let plain = p.eval(&coords, &s).unwrap();
        let tape = Tape::new();
        let vars = p.constants(&tape);
        let x = input_constant(&tape, &coords, &s).unwrap();
        let y = forward(&vars, p.omega0, x).unwrap();
        for (a, b) in y.value().data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let p = MlpParams::init(&Arch::dp(), DEFAULT_OMEGA0, 0).unwrap();
        let coords = Tensor::zeros(&[4, 3]);
        assert!(matches!(
            p.eval(&coords, &InputScaling::square(1.0, Some(1.0))),
            Err(SirenError::InputDim { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn linear_layer_jet() {
        let p = MlpParams {
            layers: vec![Layer {
                weight: Tensor::matrix(3, 1, vec![0.7, -1.2, 0.4]).unwrap(),
                bias: Tensor::vector(vec![0.1]),
            }],
            omega0: 1.0,
        };
        let s = InputScaling::new(&[(-1.0, 1.0); 3]);
        let j = p.jet2_at(&[0.2, 0.3, -0.1], 0, &s).unwrap();
        assert!((j.d1 - 0.7).abs() < 1e-15);
        assert_eq!(j.d2, 0.0);
    }

    #[test]
    fn single_sine_layer_jet() {
        let (w, b) = (1.3, 0.2);
        let p = MlpParams {
            layers: vec![
                Layer {
                    weight: Tensor::matrix(1, 1, vec![w]).unwrap(),
                    bias: Tensor::vector(vec![b]),
                },
                Layer {
                    weight: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
                    bias: Tensor::vector(vec![0.0]),
                },
            ],
            omega0: 1.0,
        };
        let s = InputScaling::new(&[(-1.0, 1.0)]);
        let x = 0.4;
        let j = p.jet2_at(&[x], 0, &s).unwrap();
        assert!((j.d2 + w * w * (w * x + b).sin()).abs() < 1e-15);
    }

    #[test]
    fn tape_jets_match_scalar_jets_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = MlpParams::init(&small_arch(), 3.0, 4).unwrap();
        let s = InputScaling::square(1.0, Some(0.343));
        let pts: Vec<f64> = (0..5)
            .flat_map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.343)])
            .collect();
        let coords = Tensor::matrix(5, 3, pts.clone()).unwrap();
        let tape = Tape::new();
        let vars = p.constants(&tape);
        let out = jet_forward(&vars, p.omega0, &coords, &s, &[0, 1, 2], 2).unwrap();
        let h = 1e-4;
        for row in 0..5 {
            let q = &pts[3 * row..3 * row + 3];
            for axis in 0..3 {
                let j = p.jet2_at(q, axis, &s).unwrap();
                assert!((out.value.value().data()[row] - j.value).abs() < 1e-12);
                assert!((out.d1[axis].value().data()[row] - j.d1).abs() < 1e-10);
                assert!((out.d2[axis].value().data()[row] - j.d2).abs() < 1e-9);

                let at = |dv: f64| {
                    let mut c = q.to_vec();
                    c[axis] += dv;
                    p.eval(&Tensor::matrix(1, 3, c).unwrap(), &s).unwrap().data()[0]
                };
                let fd1 = (at(h) - at(-h)) / (2.0 * h);
                let fd2 = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
                assert!((fd1 - j.d1).abs() <= 1e-4 * j.d1.abs().max(1.0));
                assert!((fd2 - j.d2).abs() <= 1e-4 * j.d2.abs().max(1.0), "{fd2} vs {}", j.d2);
            }
        }
    }

    #[test]
    fn second_derivative_is_continuous() {
        let p = MlpParams::init(&Arch::dp(), DEFAULT_OMEGA0, 5).unwrap();
        let s = InputScaling::square(1.0, None);
        for x in [0.1, 0.5, 0.73] {
            let a = p.jet2_at(&[x, 0.3], 0, &s).unwrap().d2;
            let b = p.jet2_at(&[x + 1e-9, 0.3], 0, &s).unwrap().d2;
            assert!((a - b).abs() < 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let p = MlpParams::init(&Arch { inputs: 2, hidden: vec![6], outputs: 1 }, 4.0, 9).unwrap();
        let s = InputScaling::square(1.0, None);
        let coords = Tensor::matrix(4, 2, vec![0.1, 0.2, 0.5, 0.9, 0.3, 0.3, 0.8, 0.05]).unwrap();
        let loss_of = |p: &MlpParams| p.eval(&coords, &s).unwrap().norm_sq();
        let tape = Tape::new();
        let vars = p.track(&tape);
        let x = input_constant(&tape, &coords, &s).unwrap();
        let loss = forward(&vars, p.omega0, x).unwrap().sum_squares();
        let grads = tape.backward(loss).unwrap();
        let eps = 1e-6;
        for (k, v) in vars.iter().enumerate() {
            let g = grads.get(v).unwrap();
            for e in 0..g.len() {
                let mut hi = p.clone();
                hi.tensors_mut()[k].data_mut()[e] += eps;
                let mut lo = p.clone();
                lo.tensors_mut()[k].data_mut()[e] -= eps;
                let fd = (loss_of(&hi) - loss_of(&lo)) / (2.0 * eps);
                let err = (fd - g.data()[e]).abs() / fd.abs().max(1e-3);
                assert!(err < 1e-4, "param {k}[{e}]: {fd} vs {}", g.data()[e]);
            }
        }
    }
}
