use super::OptimError;
use crate::fdtd::FieldSequence;
use crate::grad::{Jet2, Tape, Tensor, Var};
use crate::oracle::Measurements;
use crate::siren::JetOutput;

/// Mean squared misfit between predicted and observed samples, both in the
/// same layout.
pub fn data_loss_discrete<'t>(pred: Var<'t>, obs: &Tensor) -> Result<Var<'t>, OptimError> {
    let shape = pred.shape();
    if shape != obs.shape() {
        return Err(OptimError::Shape {
            lhs: shape,
            rhs: obs.shape().to_vec(),
        });
    }
    let target = pred.tape().constant(obs.clone());
    Ok(pred.squared_distance(&target)?.scale(1.0 / obs.len().max(1) as f64))
}

/// Plain-value counterpart of [`data_loss_discrete`] on measurement sets.
pub fn data_loss(pred: &Measurements, obs: &Measurements) -> Result<f64, OptimError> {
    if pred.sensors() != obs.sensors() || pred.samples() != obs.samples() {
        return Err(OptimError::Shape {
            lhs: vec![pred.sensors(), pred.samples()],
            rhs: vec![obs.sensors(), obs.samples()],
        });
    }
    let n = pred.values().len().max(1) as f64;
    Ok(pred
        .values()
        .iter()
        .zip(obs.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

/// Mean absolute value.
pub fn sparsity_loss<'t>(values: Var<'t>) -> Var<'t> {
    values.abs().mean()
}

fn channel<'t>(list: &[Var<'t>], k: usize) -> Result<Var<'t>, OptimError> {
    list.get(k).copied().ok_or(OptimError::MissingDerivatives)
}

/// Mean squared wave-equation residual `p_xx + p_yy - p_tt / c^2` from a
/// second-order jet taken along axes `[x, y, t]`.
pub fn pde_residual_loss<'t>(jets: &JetOutput<'t>, c: f64) -> Result<Var<'t>, OptimError> {
    let (pxx, pyy, ptt) = (channel(&jets.d2, 0)?, channel(&jets.d2, 1)?, channel(&jets.d2, 2)?);
    let r = pxx.add(&pyy)?.sub(&ptt.scale(1.0 / (c * c)))?;
    let n = r.value().len().max(1) as f64;
    Ok(r.sum_squares().scale(1.0 / n))
}

fn check_normals(normals: &[(f64, f64)]) -> Result<(), OptimError> {
    for (index, &(nx, ny)) in normals.iter().enumerate() {
        let norm = nx.hypot(ny);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(OptimError::NonUnitNormal { index, norm });
        }
    }
    Ok(())
}

/// Mean squared first-order absorbing residual `grad p . n + p_t / c` from a
/// first-order jet along axes `[x, y, t]`.
pub fn bc_residual_loss<'t>(
    tape: &'t Tape,
    jets: &JetOutput<'t>,
    normals: &[(f64, f64)],
    c: f64,
) -> Result<Var<'t>, OptimError> {
    check_normals(normals)?;
    let (px, py, pt) = (channel(&jets.d1, 0)?, channel(&jets.d1, 1)?, channel(&jets.d1, 2)?);
    let b = normals.len();
    if px.value().len() != b {
        return Err(OptimError::Shape {
            lhs: px.shape(),
            rhs: vec![b, 1],
        });
    }
    let nx = tape.constant(Tensor::matrix(b, 1, normals.iter().map(|n| n.0).collect())?);
    let ny = tape.constant(Tensor::matrix(b, 1, normals.iter().map(|n| n.1).collect())?);
    let r = px.mul(&nx)?.add(&py.mul(&ny)?)?.add(&pt.scale(1.0 / c))?;
    Ok(r.sum_squares().scale(1.0 / b.max(1) as f64))
}

/// Residual loss of an arbitrary field given as `f(point, axis) -> Jet2`.
pub fn pde_residual_of(f: impl Fn(&[f64; 3], usize) -> Jet2, points: &[[f64; 3]], c: f64) -> f64 {
    let n = points.len().max(1) as f64;
    points
        .iter()
        .map(|q| {
            let r = f(q, 0).d2 + f(q, 1).d2 - f(q, 2).d2 / (c * c);
            r * r
        })
        .sum::<f64>()
        / n
}

/// Boundary residual loss of an arbitrary field given as
/// `f(point, axis) -> Jet2`.
pub fn bc_residual_of(
    f: impl Fn(&[f64; 3], usize) -> Jet2,
    points: &[[f64; 3]],
    normals: &[(f64, f64)],
    c: f64,
) -> Result<f64, OptimError> {
    check_normals(normals)?;
    let n = points.len().max(1) as f64;
    Ok(points
        .iter()
        .zip(normals)
        .map(|(q, &(nx, ny))| {
            let r = f(q, 0).d1 * nx + f(q, 1).d1 * ny + f(q, 2).d1 / c;
            r * r
        })
        .sum::<f64>()
        / n)
}

/// Squared error normalized by the reference energy.
pub fn nmse_values(model: &[f64], reference: &[f64]) -> Result<f64, OptimError> {
    if model.len() != reference.len() {
        return Err(OptimError::Shape {
            lhs: vec![model.len()],
            rhs: vec![reference.len()],
        });
    }
    let energy: f64 = reference.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(OptimError::ZeroReference);
    }
    let err: f64 = model.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(err / energy)
}

pub fn nmse(model: &FieldSequence, reference: &FieldSequence) -> Result<f64, OptimError> {
    if model.spec.m != reference.spec.m || model.n_frames() != reference.n_frames() {
        return Err(OptimError::Shape {
            lhs: vec![model.n_frames(), model.spec.m, model.spec.m],
            rhs: vec![reference.n_frames(), reference.spec.m, reference.spec.m],
        });
    }
    nmse_values(model.data(), reference.data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn data_loss_examples() {
        let tape = Tape::new();
        let obs = Tensor::matrix(50, 20, vec![0.3; 1000]).unwrap();
        let same = tape.var(obs.clone());
        assert_eq!(data_loss_discrete(same, &obs).unwrap().item(), 0.0);
        let shifted = tape.var(obs.map(|v| v + 1.0));
        assert!((data_loss_discrete(shifted, &obs).unwrap().item() - 1.0).abs() < 1e-12);

        let a = Measurements::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Measurements::new(2, 2, vec![1.0, 2.0, 5.0, 4.0]).unwrap();
        assert_eq!(data_loss(&a, &b).unwrap(), 1.0);
        assert!(data_loss(&a, &Measurements::new(1, 4, vec![0.0; 4]).unwrap()).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let tape = Tape::new();
        assert_eq!(sparsity_loss(tape.var(Tensor::zeros(&[5]))).item(), 0.0);
        assert_eq!(sparsity_loss(tape.var(Tensor::vector(vec![1.0, -1.0, 2.0, 0.0]))).item(), 1.0);

        let tape = Tape::new();
        let x = tape.var(Tensor::vector(vec![0.5, -0.5]));
        let g = tape.backward(sparsity_loss(x)).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[0.5, -0.5]);
    }

    #[test]
    fn residual_hooks() {
        let pts = [[0.2, 0.4, 0.1], [0.7, 0.1, 0.3]];
        let constant = |_: &[f64; 3], _: usize| Jet2::constant(2.0);
        assert_eq!(pde_residual_of(constant, &pts, 1.0), 0.0);

        let x_squared = |q: &[f64; 3], axis: usize| {
            let x = if axis == 0 { Jet2::variable(q[0]) } else { Jet2::constant(q[0]) };
            x * x
        };
        assert!((pde_residual_of(x_squared, &pts, 1.0) - 4.0).abs() < 1e-15);

        // outgoing plane wave sin(x - ct)
        let c = 2.0;
        let plane = move |q: &[f64; 3], axis: usize| {
            let mut u = Jet2::constant(q[0] - c * q[2]);
            match axis {
                0 => u.d1 = 1.0,
                2 => u.d1 = -c,
                _ => {}
            }
            u.sin()
        };
        let right = [[1.0, 0.3, 0.1], [1.0, 0.8, 0.2]];
        assert!(bc_residual_of(plane, &right, &[(1.0, 0.0); 2], c).unwrap() < 1e-30);
        assert!(bc_residual_of(plane, &right, &[(-1.0, 0.0); 2], c).unwrap() > 0.1);
        assert!(bc_residual_of(constant, &right, &[(0.0, 1.0); 2], c).unwrap() == 0.0);
        assert!(matches!(
            bc_residual_of(plane, &right, &[(1.0, 1.0); 2], c),
            Err(OptimError::NonUnitNormal { .. })
        ));
    }

    #[test]
    fn nmse_examples() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(nmse_values(&r, &r).unwrap(), 0.0);
        assert_eq!(nmse_values(&[0.0; 3], &r).unwrap(), 1.0);
        assert!((nmse_values(&r.map(|v| 2.0 * v), &r).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(nmse_values(&r, &[0.0; 3]), Err(OptimError::ZeroReference)));
    }

    proptest! {
        #[test]
        fn nmse_scales_quadratically(
            reference in prop::collection::vec(-1.0f64..1.0, 8),
            err in prop::collection::vec(-1.0f64..1.0, 8),
            k in -3.0f64..3.0,
        ) {
            prop_assume!(reference.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let model = |s: f64| reference.iter().zip(&err).map(|(r, e)| r + s * e).collect::<Vec<_>>();
            let base = nmse_values(&model(1.0), &reference).unwrap();
            let scaled = nmse_values(&model(k), &reference).unwrap();
            prop_assert!((scaled - k * k * base).abs() <= 1e-10 * (1.0 + base * k * k));
        }

        #[test]
        fn nmse_and_data_loss_are_permutation_invariant(
            a in prop::collection::vec(-1.0f64..1.0, 12),
            b in prop::collection::vec(0.1f64..1.0, 12),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut order: Vec<usize> = (0..12).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pa: Vec<f64> = order.iter().map(|&k| a[k]).collect();
            let pb: Vec<f64> = order.iter().map(|&k| b[k]).collect();
            let n0 = nmse_values(&a, &b).unwrap();
            let n1 = nmse_values(&pa, &pb).unwrap();
            prop_assert!((n0 - n1).abs() <= 1e-12 * n0.max(1.0));

            // permute whole sensors (3 sensors x 4 samples)
            let sensor_perm = [2usize, 0, 1];
            let permute = |v: &[f64]| sensor_perm.iter().flat_map(|&s| v[4 * s..4 * s + 4].to_vec()).collect::<Vec<_>>();
            let ma = Measurements::new(3, 4, a.clone()).unwrap();
            let mb = Measurements::new(3, 4, b.clone()).unwrap();
            let qa = Measurements::new(3, 4, permute(&a)).unwrap();
            let qb = Measurements::new(3, 4, permute(&b)).unwrap();
            let d0 = data_loss(&ma, &mb).unwrap();
            let d1 = data_loss(&qa, &qb).unwrap();
            prop_assert!((d0 - d1).abs() <= 1e-12);
        }
    }
}
