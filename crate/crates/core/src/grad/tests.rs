use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Checks reverse-mode gradients of `f` (contracted with a random weight
/// tensor to a scalar) against central differences with step 1e-6.
fn check_gradient<F>(inputs: &[Tensor], f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probe = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars).value();
        random(out.shape(), &mut rng)
    };
    let scalar = |xs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars).value().dot(&probe)
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let out = f(&tape, &vars);
    let w = tape.constant(probe.clone());
    let loss = out.mul(&w).unwrap().sum();
    let grads = tape.backward(loss).unwrap();

    let eps = 1e-6;
    for (k, input) in inputs.iter().enumerate() {
        let g = grads.get_or_zeros(&vars[k]);
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += eps;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= eps;
            let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * eps);
            let ad = g.data()[i];
            let rel = (ad - fd).abs() / fd.abs().max(ad.abs()).max(1e-3);
            assert!(rel <= 1e-4, "input {k} elem {i}: ad {ad} fd {fd} rel {rel}");
        }
    }
}

#[test]
fn add_is_elementwise() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let b = tape.constant(Tensor::vector(vec![0.5, -2.0, 4.0]));
    assert_eq!(a.add(&b).unwrap().value().data(), &[1.5, 0.0, 7.0]);
}

#[test]
fn add_rejects_shape_mismatch() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[3]));
    let b = tape.constant(Tensor::zeros(&[4]));
    match a.add(&b) {
        Err(GradError::ShapeMismatch { op, lhs, rhs }) => {
            assert_eq!(op, "add");
            assert_eq!(lhs, vec![3]);
            assert_eq!(rhs, vec![4]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn sin_gradient_at_zero_is_one() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![0.0]));
    let g = tape.backward(x.sin().sum()).unwrap();
    assert_eq!(g.get(&x).unwrap().data(), &[1.0]);
}

#[test]
fn square_sum_gradient() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![3.0]));
    let loss = x.mul(&x).unwrap().sum();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(&x).unwrap().data(), &[6.0]);
}

#[test]
fn constants_have_no_gradient() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![1.0, 2.0]));
    let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let g = tape.backward(x.mul(&c).unwrap().sum()).unwrap();
    assert!(g.get(&c).is_none());
    assert_eq!(g.get(&x).unwrap().data(), &[3.0, 4.0]);
}

#[test]
fn abs_subgradient_at_zero_is_zero() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![-2.0, 0.0, 0.5]));
    let g = tape.backward(x.abs().sum()).unwrap();
    assert_eq!(g.get(&x).unwrap().data(), &[-1.0, 0.0, 1.0]);
}

#[test]
fn backward_errors() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(
        tape.backward(x.scale(2.0)),
        Err(GradError::NonScalarLoss { .. })
    ));
    // the failed call still consumed the tape
    assert!(matches!(tape.backward(x.sum()), Err(GradError::TapeConsumed)));

    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![1.0]));
    let inf = tape.constant(Tensor::vector(vec![f64::INFINITY]));
    let loss = x.mul(&inf).unwrap().sum();
    match tape.backward(loss) {
        Err(GradError::NonFiniteAdjoint { node, .. }) => assert_eq!(node, x.id()),
        other => panic!("expected non-finite adjoint, got {other:?}"),
    }
}

#[test]
fn gradients_match_finite_differences_for_every_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[4, 3], &mut rng);
    let b = random(&[4, 3], &mut rng);
    let w = random(&[3, 5], &mut rng);
    let bias = random(&[5], &mut rng);
    let field = random(&[6, 6], &mut rng);

    check_gradient(&[a.clone(), b.clone()], |_, v| v[0].add(&v[1]).unwrap());
    check_gradient(&[a.clone(), b.clone()], |_, v| v[0].sub(&v[1]).unwrap());
    check_gradient(&[a.clone(), b.clone()], |_, v| v[0].mul(&v[1]).unwrap());
    check_gradient(&[a.clone()], |_, v| v[0].scale(-2.5));
    check_gradient(&[a.clone(), w.clone()], |_, v| v[0].matmul(&v[1]).unwrap());
    let z = {
        let tape = Tape::new();
        let out = tape.constant(a.clone()).matmul(&tape.constant(w.clone())).unwrap();
        (*out.value()).clone()
    };
    check_gradient(&[z.clone(), bias.clone()], |_, v| v[0].add_bias(&v[1]).unwrap());
    check_gradient(&[z.clone(), bias.clone()], |_, v| {
        v[0].add_bias_rows(&v[1], 2).unwrap()
    });
    check_gradient(&[a.clone()], |_, v| v[0].sin());
    check_gradient(&[a.clone()], |_, v| v[0].cos());
    // keep away from the kink
    let away = a.map(|x| if x.abs() < 0.05 { 0.3 } else { x });
    check_gradient(&[away], |_, v| v[0].abs());
    check_gradient(&[a.clone()], |_, v| v[0].sum());
    check_gradient(&[a.clone()], |_, v| v[0].mean());
    check_gradient(&[a.clone()], |_, v| v[0].sum_squares());
    check_gradient(&[a.clone(), b.clone()], |_, v| v[0].squared_distance(&v[1]).unwrap());
    let idx: Rc<[usize]> = Rc::from(vec![0usize, 5, 5, 11, 2]);
    check_gradient(&[a.clone()], |_, v| v[0].gather(Rc::clone(&idx)).unwrap());
    let src = random(&[5], &mut rng);
    check_gradient(&[src], |_, v| v[0].scatter_add(Rc::clone(&idx), &[12]).unwrap());
    check_gradient(&[field.clone()], |_, v| v[0].laplacian().unwrap());
    check_gradient(&[field.clone()], |_, v| v[0].neumann_laplacian().unwrap());
    check_gradient(&[a.clone(), b.clone()], |_, v| Var::concat(&[v[0], v[1]]).unwrap());
    check_gradient(&[a.clone()], |_, v| v[0].slice_rows(1, 2).unwrap());
    check_gradient(&[a.clone()], |_, v| v[0].reshape(vec![3, 4]).unwrap());

    for order in [1, 2] {
        let layout = JetLayout {
            batch: 2,
            axes: 3,
            order,
        };
        let stacked = random(&[layout.channels() * 2, 4], &mut rng);
        check_gradient(&[stacked], |_, v| v[0].jet_sin(layout).unwrap());
    }
}

#[test]
fn jet_sin_matches_scalar_jets() {
    let layout = JetLayout {
        batch: 1,
        axes: 1,
        order: 2,
    };
    let tape = Tape::new();
    let x = tape.constant(Tensor::matrix(3, 1, vec![0.7, -1.2, 0.4]).unwrap());
    let out = x.jet_sin(layout).unwrap().value();
    let j = Jet2 {
        value: 0.7,
        d1: -1.2,
        d2: 0.4,
    }
    .sin();
    assert_eq!(out.data(), &[j.value, j.d1, j.d2]);
}

#[test]
fn gather_adjoint_counts_duplicates() {
    let tape = Tape::new();
    let x = tape.var(Tensor::zeros(&[10]));
    let idx: Rc<[usize]> = Rc::from(vec![1usize, 4, 4, 9, 1, 1]);
    let ones = tape.constant(Tensor::full(&[6], 1.0));
    let loss = x.gather(idx).unwrap().mul(&ones).unwrap().sum();
    let g = tape.backward(loss).unwrap();
    let g = g.get(&x).unwrap();
    assert_eq!(g.sum(), 6.0);
    assert_eq!(g.data()[1], 3.0);
    assert_eq!(g.data()[4], 2.0);
    assert_eq!(g.data()[9], 1.0);
}

#[test]
fn gather_rejects_out_of_range() {
    let tape = Tape::new();
    let x = tape.var(Tensor::zeros(&[3]));
    assert!(matches!(
        x.gather(Rc::from(vec![3usize])),
        Err(GradError::IndexOutOfRange { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_is_linear_in_the_loss(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random(&[3, 4], &mut rng);
        let w = random(&[4, 2], &mut rng);
        fn build<'t>(tape: &'t Tape, x0: &Tensor, w: &Tensor) -> (Var<'t>, Var<'t>, Var<'t>) {
            let x = tape.var(x0.clone());
            let wv = tape.constant(w.clone());
            let h = x.matmul(&wv).unwrap().sin();
            let l1 = h.sum_squares();
            let l2 = x.abs().mean();
            (x, l1, l2)
        }
        let tape = Tape::new();
        let (x, l1, l2) = build(&tape, &x0, &w);
        let combined = l1.scale(a).add(&l2.scale(b)).unwrap();
        let g = tape.backward(combined).unwrap().get_or_zeros(&x);

        let tape = Tape::new();
        let (x, l1, l2) = build(&tape, &x0, &w);
        let parts = tape.backward_each(&[l1, l2]).unwrap();
        let (g1, g2) = (parts[0].get_or_zeros(&x), parts[1].get_or_zeros(&x));
        for i in 0..g.len() {
            let expect = a * g1.data()[i] + b * g2.data()[i];
            prop_assert!((g.data()[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }
}
