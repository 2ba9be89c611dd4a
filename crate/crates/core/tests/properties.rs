use dual_core::evidential::{beliefs, decompose, to_dirichlet, vacuity, DirichletState, EvidenceVector};
use dual_core::loss::{
    ace_grad_alpha, ace_loss, dual_loss, edl_loss, kl_grad_alpha, kl_to_uniform, LabelVector,
};
use dual_core::metrics::spearman;
use dual_core::policy::{eu_weight, PolicyConfig};
use dual_core::special::digamma;
use proptest::prelude::*;

fn evidence() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0f64..1.0, 0.0f64..100.0, 0.0f64..1e4], 2..16)
}

fn alpha() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.001f64..50.0, 2..12)
}

fn state(e: Vec<f64>) -> DirichletState {
    to_dirichlet(&EvidenceVector::new(e).unwrap())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Five-point central differences of `f` at `x`.
fn fd_gradient(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            // Keeps every probe point inside α ≥ 1.
            let h = (1e-3 * x[i]).min((x[i] - 1.0) / 4.0);
            let at = |d: f64| {
                let mut p = x.to_vec();
                p[i] += d;
                f(&p)
            };
            (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn budget_law(e in evidence()) {
        let d = state(e);
        let total = vacuity(&d) + beliefs(&d).iter().sum::<f64>();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn decomposition_is_ordered(e in evidence()) {
        let d = state(e);
        let r = decompose(&d).unwrap();
        let ln_k = (d.k() as f64).ln();
        prop_assert!(r.au <= r.pu + 1e-9);
        prop_assert!(r.pu <= ln_k + 1e-9);
        prop_assert!(r.eu >= 0.0);
        prop_assert!(r.au >= 0.0);
    }

    #[test]
    fn vacuity_falls_with_evidence(e in evidence(), idx in 0usize..16, extra in 1e-3f64..50.0) {
        let i = idx % e.len();
        let mut more = e.clone();
        more[i] += extra;
        prop_assert!(vacuity(&state(more)) < vacuity(&state(e)));
    }

    #[test]
    fn kl_non_negative(a in alpha()) {
        let d = DirichletState::from_alpha(a).unwrap();
        prop_assert!(kl_to_uniform(&d) >= 0.0);
    }

    #[test]
    fn ace_gradient_matches_fd(a in alpha(), c in 0usize..12) {
        let k = a.len();
        let y = LabelVector::one_hot(c % k, k).unwrap();
        let d = DirichletState::from_alpha(a.clone()).unwrap();
        let g = ace_grad_alpha(&d, &y).unwrap();
        let fd = fd_gradient(&a, |x| {
            ace_loss(&DirichletState::from_alpha(x.to_vec()).unwrap(), &y).unwrap()
        });
        for (gi, fi) in g.iter().zip(&fd) {
            prop_assert!(rel_err(*gi, *fi) <= 1e-5, "{gi} vs {fi}");
        }
    }

    #[test]
    fn kl_gradient_matches_fd(a in prop::collection::vec(1.05f64..30.0, 2..12)) {
        let d = DirichletState::from_alpha(a.clone()).unwrap();
        let g = kl_grad_alpha(&d);
        let fd = fd_gradient(&a, |x| kl_to_uniform(&DirichletState::from_alpha(x.to_vec()).unwrap()));
        for (gi, fi) in g.iter().zip(&fd) {
            prop_assert!(rel_err(*gi, *fi) <= 1e-5, "{gi} vs {fi}");
        }
    }

    #[test]
    fn smoothing_is_linear_in_ace(a in alpha(), c in 0usize..12, eps in 0.0f64..0.99) {
        let k = a.len();
        let d = DirichletState::from_alpha(a.clone()).unwrap();
        let y = LabelVector::one_hot(c % k, k).unwrap();
        let s: f64 = a.iter().sum();
        let uniform_term: f64 = a.iter().map(|&x| digamma(s).unwrap() - digamma(x).unwrap()).sum::<f64>() / k as f64;
        let expected = (1.0 - eps) * ace_loss(&d, &y).unwrap() + eps * uniform_term;
        let got = ace_loss(&d, &y.smoothed(eps).unwrap()).unwrap();
        prop_assert!((got - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn dual_reduces_to_edl(a in alpha(), c in 0usize..12, lambda in 0.0f64..1.0) {
        let k = a.len();
        let d = DirichletState::from_alpha(a).unwrap();
        let y = LabelVector::one_hot(c % k, k).unwrap();
        let dual = dual_loss(&d, &y, 1.0, 0.0, lambda).unwrap();
        let edl = edl_loss(&d, &y, lambda).unwrap();
        prop_assert_eq!(dual.total.to_bits(), edl.total.to_bits());
    }

    #[test]
    fn weight_increases_with_vacuity(u1 in 0.01f64..1.0, u2 in 0.01f64..1.0) {
        prop_assume!(u1 < u2);
        let r = |u: f64| decompose(&DirichletState::from_alpha(vec![1.0, 1.0]).unwrap())
            .map(|mut r| { r.vacuity = u; r })
            .unwrap();
        let cfg = PolicyConfig::default();
        prop_assert!(eu_weight(&r(u1), &cfg) < eu_weight(&r(u2), &cfg));
    }

    #[test]
    fn spearman_invariant_under_monotone_maps(
        xs in prop::collection::vec(-5.0f64..5.0, 3..60),
        ys in prop::collection::vec(-5.0f64..5.0, 3..60),
    ) {
        let n = xs.len().min(ys.len());
        let (x, y) = (&xs[..n], &ys[..n]);
        prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
        let base = spearman(x, y).unwrap();
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let cube: Vec<f64> = y.iter().map(|v| 3.0 * v * v * v - 7.0).collect();
        prop_assert!((spearman(&ex, &cube).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }
}

#[test]
fn kl_reference_values() {
    let uniform = DirichletState::from_alpha(vec![1.0; 7]).unwrap();
    assert_eq!(kl_to_uniform(&uniform), 0.0);
    let d = DirichletState::from_alpha(vec![2.0, 1.0]).unwrap();
    assert!((kl_to_uniform(&d) - (2f64.ln() - 0.5)).abs() < 1e-12);
    assert!(kl_grad_alpha(&uniform).iter().all(|g| *g == 0.0));
}
