//! Reference values for ψ, ψ₁ and lnΓ at integers and half-integers, from
//! the exact finite sums
//!
//! ψ(n)    = −γ + Σ_{k<n} 1/k          ψ(n+½)    = −γ − 2ln2 + Σ_{k≤n} 2/(2k−1)
//! ψ₁(n)   = π²/6 − Σ_{k<n} 1/k²        ψ₁(n+½)   = π²/2 − Σ_{k≤n} 4/(2k−1)²
//! lnΓ(n)  = Σ_{k<n} ln k               lnΓ(n+½)  = ln√π + Σ_{k≤n} ln(k−½)
//!
//! accumulated in double-double arithmetic. Logarithms come from a prime
//! sieve: ln p for each prime is one Newton step on `p·e^{−y} = 1` with a
//! double-double Taylor exponential, and composites add the logs of their
//! factors. Half-integer logs use ln(k − ½) = ln(2k − 1) − ln 2.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd::new(-self.hi, -self.lo)
    }

    pub fn scale(self, c: f64) -> Dd {
        Dd::new(self.hi * c, self.lo * c)
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn mul_f64(self, c: f64) -> Dd {
        self.mul(Dd::new(c, 0.0))
    }

    /// `1/d` for an exactly representable `d`.
    pub fn recip(d: f64) -> Dd {
        let hi = 1.0 / d;
        let err = hi.mul_add(d, -1.0);
        Dd::new(hi, -err / d)
    }

    /// `|v − self|` without first rounding `self` to f64.
    pub fn abs_diff(self, v: f64) -> f64 {
        ((v - self.hi) - self.lo).abs()
    }
}

pub const EULER: Dd = Dd::new(0.5772156649015329, -4.942915152430645e-18);
pub const LN_2: Dd = Dd::new(std::f64::consts::LN_2, 2.3190468138462996e-17);
pub const PI2_6: Dd = Dd::new(1.6449340668482264, 3.040672350398476e-17);
pub const PI2_2: Dd = Dd::new(4.934802200544679, 3.1326477543698557e-16);
pub const LN_SQRT_PI: Dd = Dd::new(0.5723649429247001, 5.132975581353913e-18);

/// e^x for |x| ≲ 700: x = m·ln2 + r, Taylor series for e^r.
pub fn exp_dd(x: f64) -> Dd {
    let m = (x / LN_2.hi).round();
    let r = Dd::new(x, 0.0).add(LN_2.mul_f64(-m));
    let mut term = Dd::new(1.0, 0.0);
    let mut sum = term;
    for n in 1..40 {
        term = term.mul(r).mul(Dd::recip(n as f64));
        sum = sum.add(term);
        if term.hi.abs() < 1e-34 {
            break;
        }
    }
    sum.scale(2f64.powi(m as i32))
}

/// ln p to double-double precision for an integer p > 1.
fn ln_newton(p: f64) -> Dd {
    let y0 = p.ln();
    // y1 = y0 + (p·e^{−y0} − 1); the residual is O(1e-16), its square negligible.
    let residual = exp_dd(-y0).mul_f64(p).add(Dd::new(-1.0, 0.0));
    Dd::new(y0, 0.0).add(residual)
}

/// ln n for every n in 0..=max (entry 0 unused).
pub fn ln_table(max: usize) -> Vec<Dd> {
    let mut spf = vec![0u32; max + 1];
    let mut table = vec![Dd::new(0.0, 0.0); max + 1];
    for n in 2..=max {
        if spf[n] == 0 {
            let mut j = n;
            while j <= max {
                if spf[j] == 0 {
                    spf[j] = n as u32;
                }
                j += n;
            }
            table[n] = ln_newton(n as f64);
        } else {
            let p = spf[n] as usize;
            table[n] = table[p].add(table[n / p]);
        }
    }
    table
}

#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub x: f64,
    pub digamma: Dd,
    pub trigamma: Dd,
    pub ln_gamma: Dd,
}

/// References at `x = m/2` for each `m` in `twice_x` (all ≥ 1).
pub fn references(twice_x: &[u64]) -> Vec<Reference> {
    let mut targets = twice_x.to_vec();
    targets.sort_unstable();
    targets.dedup();
    let max_n = targets.last().map(|m| m / 2 + 1).unwrap_or(0);

    let logs = ln_table(2 * max_n as usize + 1);
    let zero = Dd::new(0.0, 0.0);
    // Running sums after including term k (integer: k < n, half: k ≤ n).
    let (mut h, mut h2, mut lf) = (zero, zero, zero);
    let (mut o, mut o2, mut lh) = (zero, zero, zero);
    let mut out = Vec::with_capacity(targets.len());
    let mut it = targets.iter().peekable();

    for n in 0..=max_n {
        // Integer x = n uses sums over k < n, which is the state before
        // adding term n.
        if n >= 1 {
            while let Some(&&m) = it.peek() {
                if m == 2 * n {
                    out.push(Reference {
                        x: n as f64,
                        digamma: EULER.neg().add(h),
                        trigamma: PI2_6.add(h2.neg()),
                        ln_gamma: lf,
                    });
                    it.next();
                } else {
                    break;
                }
            }
            let k = n as f64;
            h = h.add(Dd::recip(k));
            h2 = h2.add(Dd::recip(k * k));
            lf = lf.add(logs[n as usize]);

            let odd = 2.0 * k - 1.0;
            o = o.add(Dd::recip(odd).scale(2.0));
            o2 = o2.add(Dd::recip(odd * odd).scale(4.0));
            lh = lh.add(logs[2 * n as usize - 1]).add(LN_2.neg());
        }
        while let Some(&&m) = it.peek() {
            if m == 2 * n + 1 {
                out.push(Reference {
                    x: n as f64 + 0.5,
                    digamma: EULER.neg().add(LN_2.scale(-2.0)).add(o),
                    trigamma: PI2_2.add(o2.neg()),
                    ln_gamma: LN_SQRT_PI.add(lh),
                });
                it.next();
            } else {
                break;
            }
        }
    }
    out
}

/// Log-spaced integers and half-integers covering [0.5, 1e6], as `2x`.
pub fn default_grid() -> Vec<u64> {
    let mut m = vec![1u64, 2, 3, 4, 5];
    let steps = 400;
    let (lo, hi) = (1f64.ln(), 1e6f64.ln());
    for i in 0..=steps {
        let x = (lo + (hi - lo) * i as f64 / steps as f64).exp();
        let n = x.round().max(1.0) as u64;
        m.push(2 * n);
        if n < 1_000_000 {
            m.push(2 * n + 1);
        }
    }
    m.sort_unstable();
    m.dedup();
    m
}
