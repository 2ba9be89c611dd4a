//! Evidence, Dirichlet parameters, and the per-sample uncertainty budget.
//!
//! A network emits non-negative evidence `e`; the Dirichlet parameters are
//! `α = e + 1` with strength `S = Σ α`. From these follow the subjective
//! logic masses (beliefs `e/S` and vacuity `K/S`, which sum to one), the
//! expected class distribution `α/S`, and the entropy decomposition of
//! predictive uncertainty into aleatoric and epistemic parts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma_pos, entropy_unchecked};

/// Tolerance on `pu - au` below zero before the decomposition is treated
/// as a numerical failure instead of rounding noise.
pub const EU_CLAMP_TOLERANCE: f64 = 1e-9;

/// Per-class non-negative evidence for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(evidence: Vec<f64>) -> Result<Self> {
        if evidence.len() < 2 {
            return Err(Error::domain(format!(
                "evidence needs at least two classes, got {}",
                evidence.len()
            )));
        }
        if let Some((j, e)) = evidence
            .iter()
            .enumerate()
            .find(|(_, e)| !e.is_finite() || **e < 0.0)
        {
            return Err(Error::domain(format!(
                "evidence[{j}] = {e} is negative or non-finite"
            )));
        }
        Ok(Self(evidence))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

/// Dirichlet parameters `α` (every entry at least 1) with their cached sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletState {
    alpha: Vec<f64>,
    strength: f64,
}

impl DirichletState {
    /// Builds a state directly from concentration parameters.
    pub fn from_alpha(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::domain(format!(
                "Dirichlet needs at least two classes, got {}",
                alpha.len()
            )));
        }
        if let Some((j, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !a.is_finite() || **a < 1.0)
        {
            return Err(Error::domain(format!(
                "alpha[{j}] = {a} must be finite and at least 1"
            )));
        }
        let strength = alpha.iter().sum();
        Ok(Self { alpha, strength })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }
}

/// Converts evidence to Dirichlet parameters, `α_j = e_j + 1`.
pub fn to_dirichlet(ev: &EvidenceVector) -> DirichletState {
    let alpha: Vec<f64> = ev.0.iter().map(|e| e + 1.0).collect();
    let strength = alpha.iter().sum();
    DirichletState { alpha, strength }
}

/// Vacuity `K / S`: 1 with no evidence, approaching 0 as evidence grows.
pub fn vacuity(d: &DirichletState) -> f64 {
    d.k() as f64 / d.strength
}

/// Belief masses `(α_j - 1) / S`.
pub fn beliefs(d: &DirichletState) -> Vec<f64> {
    d.alpha.iter().map(|a| (a - 1.0) / d.strength).collect()
}

/// Mean of the Dirichlet, `α_j / S`.
pub fn expected_probability(d: &DirichletState) -> Vec<f64> {
    d.alpha.iter().map(|a| a / d.strength).collect()
}

/// Expected entropy of a categorical drawn from the Dirichlet:
/// `Σ_j p_j [ψ(S + 1) − ψ(α_j + 1)]`.
pub fn aleatoric_uncertainty(d: &DirichletState) -> f64 {
    let psi_total = digamma_pos(d.strength + 1.0);
    d.alpha
        .iter()
        .map(|&a| (a / d.strength) * (psi_total - digamma_pos(a + 1.0)))
        .sum()
}

/// Per-sample uncertainty summary, all entropies in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// Entropy of the expected class distribution.
    pub pu: f64,
    pub au: f64,
    /// `pu - au`, clamped at zero.
    pub eu: f64,
    /// `K / S`.
    pub vacuity: f64,
    pub beliefs: Vec<f64>,
    pub expected_p: Vec<f64>,
}

/// Splits predictive uncertainty into its aleatoric and epistemic parts.
pub fn decompose(d: &DirichletState) -> Result<UncertaintyReport> {
    let expected_p = expected_probability(d);
    let pu = entropy_unchecked(&expected_p);
    let au = aleatoric_uncertainty(d);
    let gap = pu - au;
    if gap < -EU_CLAMP_TOLERANCE {
        return Err(Error::Numeric(format!(
            "aleatoric uncertainty {au} exceeds predictive entropy {pu} for alpha {:?}",
            d.alpha
        )));
    }
    Ok(UncertaintyReport {
        pu,
        au,
        eu: gap.max(0.0),
        vacuity: vacuity(d),
        beliefs: beliefs(d),
        expected_p,
    })
}

/// Monte-Carlo estimate of the expected entropy under `Dir(α)`.
///
/// Returns the sample mean and its standard error. Probability vectors are
/// drawn as normalised Gamma variates from a generator seeded with `seed`.
pub fn mc_expected_entropy(d: &DirichletState, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if n_samples < 1000 {
        return Err(Error::domain(format!(
            "Monte-Carlo expected entropy needs at least 1000 samples, got {n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas = d
        .alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::domain(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut draw = vec![0.0; d.k()];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let mut total = 0.0;
        for (slot, g) in draw.iter_mut().zip(&gammas) {
            *slot = g.sample(&mut rng);
            total += *slot;
        }
        let h = -draw
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let p = v / total;
                p * p.ln()
            })
            .sum::<f64>();
        sum += h;
        sum_sq += h * h;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}
