/// How the target weight of each term is formed from gradient norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnnealRule {
    /// `sum of all term norms / own norm`.
    SumOverOwn,
    /// `reference norm / own norm`, the reference being the PDE term when
    /// present and the data term otherwise. The reference weight stays at one.
    ReferenceOverOwn,
}

/// Global L2 norms of each loss term's parameter gradient. Absent terms do
/// not take part in the update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TermNorms {
    pub data: f64,
    pub sp: f64,
    pub pde: Option<f64>,
    pub bcs: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub data: f64,
    pub sp: f64,
    /// Pinned to one whenever a PDE term is present.
    pub pde: f64,
    pub bcs: f64,
    pub alpha: f64,
    /// Iterations between updates; `None` keeps the weights fixed.
    pub update_every: Option<usize>,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            data: 1.0,
            sp: 1.0,
            pde: 1.0,
            bcs: 1.0,
            alpha: 0.9,
            update_every: Some(100),
        }
    }
}

impl LossWeights {
    /// True when iteration `iter` (counted from zero) triggers an update.
    pub fn due(&self, iter: usize) -> bool {
        self.update_every.is_some_and(|k| k > 0 && iter > 0 && iter % k == 0)
    }
}

/// Moving-average weight update from per-term gradient norms. Terms with a
/// zero or non-finite norm keep their weight.
pub fn anneal_update(norms: &TermNorms, weights: &LossWeights, rule: AnnealRule) -> LossWeights {
    let total = norms.data + norms.sp + norms.pde.unwrap_or(0.0) + norms.bcs.unwrap_or(0.0);
    let reference = norms.pde.unwrap_or(norms.data);
    let numerator = match rule {
        AnnealRule::SumOverOwn => total,
        AnnealRule::ReferenceOverOwn => reference,
    };
    let blend = |name: &str, current: f64, own: f64| {
        if own > 0.0 && own.is_finite() && numerator.is_finite() {
            weights.alpha * current + (1.0 - weights.alpha) * numerator / own
        } else {
            log::warn!("skipping weight update for {name}: gradient norm {own}");
            current
        }
    };
    let mut out = *weights;
    let data_is_reference = norms.pde.is_none() && rule == AnnealRule::ReferenceOverOwn;
    if !data_is_reference {
        out.data = blend("data", weights.data, norms.data);
    }
    out.sp = blend("sparsity", weights.sp, norms.sp);
    if let Some(b) = norms.bcs {
        out.bcs = blend("boundary", weights.bcs, b);
    }
    if norms.pde.is_some() {
        out.pde = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dp(data: f64, sp: f64) -> TermNorms {
        TermNorms { data, sp, pde: None, bcs: None }
    }

    #[test]
    fn two_term_examples() {
        let w = LossWeights::default();
        // target 4 blended with alpha 0.9 from 1
        let out = anneal_update(&dp(1.0, 3.0), &w, AnnealRule::SumOverOwn);
        assert!((out.data - 1.3).abs() < 1e-12);
        let target_sp = 4.0 / 3.0;
        assert!((out.sp - (0.9 + 0.1 * target_sp)).abs() < 1e-12);

        let alpha_zero = LossWeights { alpha: 0.0, ..w };
        let eq = anneal_update(&dp(2.5, 2.5), &alpha_zero, AnnealRule::SumOverOwn);
        assert!((eq.data - 2.0).abs() < 1e-12 && (eq.sp - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pde_reference_stays_pinned() {
        let w = LossWeights { pde: 7.0, ..LossWeights::default() };
        let n = TermNorms { data: 2.0, sp: 0.5, pde: Some(4.0), bcs: Some(8.0) };
        let out = anneal_update(&n, &w, AnnealRule::ReferenceOverOwn);
        assert_eq!(out.pde, 1.0);
        assert!((out.data - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
        assert!((out.sp - (0.9 + 0.1 * 8.0)).abs() < 1e-12);
        assert!((out.bcs - (0.9 + 0.1 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_term_is_skipped() {
        let w = LossWeights::default();
        let out = anneal_update(&dp(1.0, 0.0), &w, AnnealRule::SumOverOwn);
        assert_eq!(out.sp, 1.0);
        assert!((out.data - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule() {
        let w = LossWeights::default();
        assert!(!w.due(0));
        assert!(w.due(100) && w.due(300) && !w.due(150));
        let never = LossWeights { update_every: None, ..w };
        assert!(!never.due(100));
    }

    proptest::proptest! {
        #[test]
        fn weights_stay_finite_and_positive(
            norms in proptest::collection::vec(0.0f64..1e6, 4),
            start in proptest::collection::vec(1e-3f64..1e3, 3),
            alpha in 0.0f64..1.0,
            steps in 1usize..20,
            pinn in proptest::bool::ANY,
        ) {
            let mut w = LossWeights { data: start[0], sp: start[1], bcs: start[2], alpha, ..LossWeights::default() };
            let (n, rule) = if pinn {
                (TermNorms { data: norms[0], sp: norms[1], pde: Some(norms[2]), bcs: Some(norms[3]) }, AnnealRule::ReferenceOverOwn)
            } else {
                (dp(norms[0], norms[1]), AnnealRule::SumOverOwn)
            };
            for _ in 0..steps {
                w = anneal_update(&n, &w, rule);
                for v in [w.data, w.sp, w.bcs, w.pde] {
                    proptest::prop_assert!(v.is_finite() && v > 0.0);
                }
                if pinn {
                    proptest::prop_assert_eq!(w.pde, 1.0);
                }
            }
        }
    }
}
