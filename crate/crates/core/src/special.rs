//! Scalar special functions: log-gamma, digamma, trigamma, plus the
//! entropy and logistic helpers shared by the loss and uncertainty code.
//!
//! All three gamma-family functions shift the argument upward with the
//! standard recurrences until it is at least [`ASYMPTOTIC_THRESHOLD`] and
//! then evaluate the Bernoulli-number asymptotic series. At that threshold
//! the first omitted term is below 1e-16, so accuracy is limited by
//! rounding alone.
//!
//! Above [`DD_THRESHOLD`] ln Γ grows past 10⁴ and a plain f64 evaluation
//! loses several ulps, so that range is computed in double-double and
//! rounded once at the end.
//!
//! The checked entry points return [`Error::Domain`] for non-positive or
//! non-finite arguments. The crate-internal `*_pos` variants skip the check
//! and are used on Dirichlet parameters, which are validated at
//! construction to be at least one.

use crate::error::{Error, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// 0.5 * ln(2π)
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

const DD_THRESHOLD: f64 = 1024.0;

/// 0.5 * ln(2π) as a double-double.
const HALF_LN_2PI_DD: Dd = Dd {
    hi: 0.918_938_533_204_672_8,
    lo: -3.878_294_158_067_241_4e-17,
};

const LN_2_DD: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

/// B_{2k} / (2k (2k - 1)) for k = 1..7 (Stirling series for ln Γ).
const LN_GAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// B_{2k} / (2k) for k = 1..7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

/// B_{2k} for k = 1..7.
const TRIGAMMA_SERIES: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} requires a finite positive argument, got {x}"
        )))
    }
}

/// Evaluates `Σ c_k t^k` for k = 1..n, innermost term first.
fn odd_series(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| (acc + c) * t)
}

/// ln Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    Ok(ln_gamma_pos(x))
}

/// ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma_pos(x))
}

/// ψ₁(x) = d²/dx² ln Γ(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    Ok(trigamma_pos(x))
}

pub(crate) fn ln_gamma_pos(x: f64) -> f64 {
    // Γ(1) = Γ(2) = 1 exactly; the KL regulariser relies on an exact zero at α = 1.
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x >= DD_THRESHOLD {
        return ln_gamma_large(x);
    }
    let mut y = x;
    let mut shift = 1.0;
    while y < ASYMPTOTIC_THRESHOLD {
        shift *= y;
        y += 1.0;
    }
    let inv = 1.0 / y;
    // (y - 1/2) ln y - y rewritten to avoid cancelling two large terms.
    let base = (y - 0.5) * (y.ln() - 1.0) - 0.5 + HALF_LN_2PI;
    // Σ c_k y^(1−2k)
    let tail = y * odd_series(&LN_GAMMA_SERIES, inv * inv);
    let value = base + tail;
    if shift == 1.0 {
        value
    } else {
        value - shift.ln()
    }
}

/// Stirling series with the leading terms in double-double.
fn ln_gamma_large(y: f64) -> f64 {
    let inv = 1.0 / y;
    let tail = y * odd_series(&LN_GAMMA_SERIES, inv * inv);
    let half_off = Dd::from_sum(y, -0.5);
    half_off
        .mul(ln_dd(y))
        .add_f64(-y)
        .add(HALF_LN_2PI_DD)
        .add_f64(tail)
        .hi
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd {
        hi: s,
        lo: b - (s - a),
    }
}

impl Dd {
    fn from_sum(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_sum(a, b);
        Dd { hi, lo }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        quick_two_sum(s, e + self.lo + o.lo)
    }

    fn add_f64(self, b: f64) -> Dd {
        let (s, e) = two_sum(self.hi, b);
        quick_two_sum(s, e + self.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        quick_two_sum(p, e + self.lo * b)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul_f64(-q1));
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul_f64(-q2));
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add_f64(q3)
    }
}

/// ln x for finite x > 0 via x = 2^e·m, m ∈ [√½, √2), and
/// ln m = 2·atanh((m − 1)/(m + 1)).
fn ln_dd(x: f64) -> Dd {
    let (mut m, mut e) = if x.is_normal() {
        let bits = x.to_bits();
        let e = ((bits >> 52) & 0x7ff) as i64 - 1023;
        let m = f64::from_bits((bits & ((1u64 << 52) - 1)) | (1023u64 << 52));
        (m, e)
    } else {
        let scaled = x * 2f64.powi(54);
        let bits = scaled.to_bits();
        let e = ((bits >> 52) & 0x7ff) as i64 - 1023 - 54;
        let m = f64::from_bits((bits & ((1u64 << 52) - 1)) | (1023u64 << 52));
        (m, e)
    };
    if m > std::f64::consts::SQRT_2 {
        m *= 0.5;
        e += 1;
    }
    let t = Dd { hi: m - 1.0, lo: 0.0 }.div(Dd::from_sum(m, 1.0));
    let t2 = t.mul(t);
    // |t| < 0.172, so t^(2k) < 1e-33 after 22 terms.
    let mut sum = Dd { hi: 0.0, lo: 0.0 };
    let mut power = t;
    for k in 0..23 {
        let term = power.div(Dd {
            hi: (2 * k + 1) as f64,
            lo: 0.0,
        });
        sum = sum.add(term);
        power = power.mul(t2);
    }
    sum.mul_f64(2.0).add(LN_2_DD.mul_f64(e as f64))
}

pub(crate) fn digamma_pos(x: f64) -> f64 {
    let mut y = x;
    let mut acc = 0.0;
    while y < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / y;
        y += 1.0;
    }
    let inv2 = 1.0 / (y * y);
    acc + y.ln() - 0.5 / y - odd_series(&DIGAMMA_SERIES, inv2)
}

pub(crate) fn trigamma_pos(x: f64) -> f64 {
    let mut y = x;
    let mut acc = 0.0;
    while y < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (y * y);
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    acc + inv + 0.5 * inv2 + inv * odd_series(&TRIGAMMA_SERIES, inv2)
}

/// Shannon entropy in nats, with 0 · ln 0 = 0.
///
/// The input must be a probability vector: non-negative, finite entries
/// summing to one within 1e-9.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::domain("entropy of an empty vector"));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::domain(format!(
            "probability entries must be finite and non-negative, got {bad}"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "probability vector sums to {total}, not 1"
        )));
    }
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
