mod common;

use common::oracle::{default_grid, references, Dd};
use dual_core::special::{digamma, log_gamma, shannon_entropy, trigamma};
use proptest::prelude::*;

#[test]
fn oracle_matches_independent_values() {
    // Cross-check of the summation oracle against 50-digit reference values.
    let r = references(&[1, 5, 2_000_000]);
    assert!(r[0].digamma.abs_diff(-1.9635100260214235) < 1e-16);
    assert!(r[1].ln_gamma.abs_diff(0.2846828704729192) < 1e-16);
    let big = r[2];
    assert_eq!(big.x, 1e6);
    // Reference values split into hi/lo.
    let err = |d: Dd, hi: f64, lo: f64| ((d.hi - hi) + (d.lo - lo)).abs();
    assert!(err(big.digamma, 13.815_510_057_964_191, -6.330_374_222_031_517e-16) < 1e-27);
    assert!(err(big.trigamma, 1.000_000_500_000_166_7e-6, -6.149_478_573_690_488e-23) < 1e-28);
    assert!(err(big.ln_gamma, 12_815_504.569_147_611, 6.230_802_661_575_757e-10) < 1e-20);
}

#[test]
fn digamma_and_trigamma_within_1e10_on_grid() {
    for r in references(&default_grid()) {
        let d = digamma(r.x).unwrap();
        let t = trigamma(r.x).unwrap();
        assert!(r.digamma.abs_diff(d) <= 1e-10, "digamma({}) = {d}", r.x);
        assert!(r.trigamma.abs_diff(t) <= 1e-10, "trigamma({}) = {t}", r.x);
    }
}

#[test]
fn log_gamma_tracks_oracle() {
    for r in references(&default_grid()) {
        let v = log_gamma(r.x).unwrap();
        assert!((v - r.ln_gamma.hi).abs() <= 1e-10, "log_gamma({}) = {v}", r.x);
        let ulp = f64::EPSILON * v.abs();
        assert!(r.ln_gamma.abs_diff(v) <= 4.0 * ulp + 2e-15, "log_gamma({})", r.x);
    }
}

#[test]
fn trigamma_is_derivative_of_digamma() {
    for &x in &[0.7, 1.3, 2.0, 4.9, 10.5, 37.0, 250.0] {
        let h = 1e-5 * x;
        let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
        let t = trigamma(x).unwrap();
        assert!((fd - t).abs() <= 1e-6 * t.abs(), "x={x}: {fd} vs {t}");
    }
}

proptest! {
    #[test]
    fn recurrences_hold(x in 0.5f64..1e5) {
        let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
        prop_assert!(d.abs() <= 1e-12 * (1.0 + digamma(x).unwrap().abs()));
        let t = trigamma(x).unwrap() - trigamma(x + 1.0).unwrap() - 1.0 / (x * x);
        prop_assert!(t.abs() <= 1e-12 * trigamma(x).unwrap());
        let l = log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap() - x.ln();
        prop_assert!(l.abs() <= 1e-13 * (1.0 + log_gamma(x + 1.0).unwrap().abs()));
    }

    #[test]
    fn entropy_bounded_by_ln_k(raw in prop::collection::vec(0.0f64..1.0, 2..20)) {
        let s: f64 = raw.iter().sum();
        prop_assume!(s > 1e-6);
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let h = shannon_entropy(&p).unwrap();
        prop_assert!(h >= 0.0 && h <= (p.len() as f64).ln() + 1e-12);
    }
}

#[test]
fn oracle_logs_are_double_double_accurate() {
    use common::oracle::{exp_dd, ln_table};
    // 50-digit values split into hi/lo.
    let close = |d: Dd, hi: f64, lo: f64| d.hi == hi && (d.lo - lo).abs() < 1e-30;
    let t = ln_table(1000);
    assert!(close(t[997], 6.904_750_769_961_838, 9.982_552_702_567_329e-17));
    assert!(close(t[10], std::f64::consts::LN_10, -2.170_756_223_382_249_4e-16));
    assert!(close(t[1000], 6.907_755_278_982_137, 2.369_515_526_854_504e-16));
    assert!(close(exp_dd(1.0), std::f64::consts::E, 1.445_646_891_729_250_2e-16));
}
