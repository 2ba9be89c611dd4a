//! Evidential losses on Dirichlet outputs and their gradients with respect
//! to `α`.
//!
//! * `ace_loss`: expected cross-entropy under `Dir(α)`,
//!   `Σ_j y_j (ψ(S) − ψ(α_j))`, valid for any target distribution.
//! * `kl_to_uniform`: `KL(Dir(α̃) ‖ Dir(1))` on parameters whose
//!   correct-class entry has been reset to one, so only misleading evidence
//!   is penalised.
//! * `edl_loss` / `dual_loss`: the annealed combinations used in training.
//!
//! Smoothed targets enter the cross-entropy term only. The KL mask always
//! uses the hard label.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidential::DirichletState;
use crate::special::{digamma_pos, ln_gamma_pos, trigamma_pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    OneHot,
    Smoothed,
}

/// Target distribution over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    y: Vec<f64>,
    kind: LabelKind,
}

impl LabelVector {
    pub fn one_hot(class: usize, k: usize) -> Result<Self> {
        if k < 2 || class >= k {
            return Err(Error::domain(format!(
                "one-hot label {class} invalid for {k} classes"
            )));
        }
        let mut y = vec![0.0; k];
        y[class] = 1.0;
        Ok(Self {
            y,
            kind: LabelKind::OneHot,
        })
    }

    /// Arbitrary target distribution; entries must be non-negative and sum
    /// to one within 1e-12.
    pub fn from_distribution(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::domain("label needs at least two classes"));
        }
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain(format!("label entries invalid: {y:?}")));
        }
        let total: f64 = y.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("label sums to {total}, not 1")));
        }
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        let kind = if ones == 1 {
            LabelKind::OneHot
        } else {
            LabelKind::Smoothed
        };
        Ok(Self { y, kind })
    }

    /// `(1 − ε)·y + ε/K` applied to a one-hot label.
    pub fn smoothed(&self, epsilon: f64) -> Result<Self> {
        if self.kind != LabelKind::OneHot {
            return Err(Error::domain("only one-hot labels can be smoothed"));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::domain(format!(
                "smoothing factor {epsilon} outside [0, 1)"
            )));
        }
        let uniform = epsilon / self.k() as f64;
        let y = self.y.iter().map(|v| (1.0 - epsilon) * v + uniform).collect();
        let kind = if epsilon == 0.0 {
            LabelKind::OneHot
        } else {
            LabelKind::Smoothed
        };
        Ok(Self { y, kind })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.y.len()
    }

    /// Index of the hot entry, if this is a one-hot label.
    pub fn class(&self) -> Option<usize> {
        match self.kind {
            LabelKind::OneHot => self.y.iter().position(|&v| v == 1.0),
            LabelKind::Smoothed => None,
        }
    }
}

/// Linear ramp of the KL coefficient: `λ_t = λ_max · min(1, t / T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSchedule {
    pub lambda_max: f64,
    pub anneal_epochs: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            lambda_max: 0.2,
            anneal_epochs: 10,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_max.is_finite() || self.lambda_max < 0.0 {
            return Err(Error::config("schedule.lambda_max", "must be finite and >= 0"));
        }
        if self.anneal_epochs == 0 {
            return Err(Error::config("schedule.anneal_epochs", "must be positive"));
        }
        Ok(())
    }
}

pub fn lambda_at(s: &AnnealSchedule, epoch: usize) -> f64 {
    let ramp = (epoch as f64 / s.anneal_epochs as f64).min(1.0);
    s.lambda_max * ramp
}

/// Per-sample loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ace: f64,
    pub kl: f64,
    pub weight: f64,
    pub lambda: f64,
    /// `weight · ace + lambda · kl`
    pub total: f64,
}

fn check_dims(d: &DirichletState, y: &LabelVector) -> Result<()> {
    if d.k() != y.k() {
        return Err(Error::DimensionMismatch {
            expected: d.k(),
            got: y.k(),
        });
    }
    Ok(())
}

fn require_one_hot(y: &LabelVector) -> Result<usize> {
    y.class()
        .ok_or_else(|| Error::domain("operation requires a one-hot label"))
}

pub fn ace_loss(d: &DirichletState, y: &LabelVector) -> Result<f64> {
    check_dims(d, y)?;
    let psi_s = digamma_pos(d.strength());
    Ok(d.alpha()
        .iter()
        .zip(y.as_slice())
        .filter(|(_, &yj)| yj != 0.0)
        .map(|(&a, &yj)| yj * (psi_s - digamma_pos(a)))
        .sum())
}

/// `α̃ = y + (1 − y) ⊙ α`: the labelled entry is reset to 1.
pub fn adjusted_alpha(d: &DirichletState, y_hard: &LabelVector) -> Result<DirichletState> {
    check_dims(d, y_hard)?;
    let class = require_one_hot(y_hard)?;
    let mut alpha = d.alpha().to_vec();
    alpha[class] = 1.0;
    DirichletState::from_alpha(alpha)
}

/// `KL(Dir(α̃) ‖ Dir(1, …, 1))`.
pub fn kl_to_uniform(d_tilde: &DirichletState) -> f64 {
    let k = d_tilde.k() as f64;
    let s = d_tilde.strength();
    let psi_s = digamma_pos(s);
    let log_norm = ln_gamma_pos(s)
        - ln_gamma_pos(k)
        - d_tilde.alpha().iter().map(|&a| ln_gamma_pos(a)).sum::<f64>();
    let cross: f64 = d_tilde
        .alpha()
        .iter()
        .filter(|&&a| a != 1.0)
        .map(|&a| (a - 1.0) * (digamma_pos(a) - psi_s))
        .sum();
    // Non-negative analytically; clip rounding noise near α̃ = 1.
    (log_norm + cross).max(0.0)
}

pub fn edl_loss(d: &DirichletState, y_hard: &LabelVector, lambda_t: f64) -> Result<LossBreakdown> {
    require_one_hot(y_hard)?;
    let ace = ace_loss(d, y_hard)?;
    let kl = kl_to_uniform(&adjusted_alpha(d, y_hard)?);
    Ok(LossBreakdown {
        ace,
        kl,
        weight: 1.0,
        lambda: lambda_t,
        total: ace + lambda_t * kl,
    })
}

/// Weighted, smoothed evidential loss:
/// `w · ace(α, ỹ) + λ_t · KL(α̃)` with `ỹ = (1 − ε̃)·y + ε̃/K`.
pub fn dual_loss(
    d: &DirichletState,
    y_hard: &LabelVector,
    weight: f64,
    smoothing: f64,
    lambda_t: f64,
) -> Result<LossBreakdown> {
    if !weight.is_finite() || weight < 0.0 || !lambda_t.is_finite() {
        return Err(Error::domain(format!(
            "invalid weight {weight} or lambda {lambda_t}"
        )));
    }
    require_one_hot(y_hard)?;
    let y_soft = y_hard.smoothed(smoothing)?;
    let ace = ace_loss(d, &y_soft)?;
    let kl = kl_to_uniform(&adjusted_alpha(d, y_hard)?);
    Ok(LossBreakdown {
        ace,
        kl,
        weight,
        lambda: lambda_t,
        total: weight * ace + lambda_t * kl,
    })
}

/// `∂ ace / ∂α_k = ψ₁(S) − y_k ψ₁(α_k)` (uses `Σ y = 1`).
pub fn ace_grad_alpha(d: &DirichletState, y: &LabelVector) -> Result<Vec<f64>> {
    check_dims(d, y)?;
    let tri_s = trigamma_pos(d.strength());
    Ok(d.alpha()
        .iter()
        .zip(y.as_slice())
        .map(|(&a, &yk)| {
            if yk == 0.0 {
                tri_s
            } else {
                tri_s - yk * trigamma_pos(a)
            }
        })
        .collect())
}

/// `∂ KL / ∂α̃_k = (α̃_k − 1) ψ₁(α̃_k) − ψ₁(S̃) Σ_j (α̃_j − 1)`.
pub fn kl_grad_alpha(d_tilde: &DirichletState) -> Vec<f64> {
    let tri_s = trigamma_pos(d_tilde.strength());
    let excess: f64 = d_tilde.alpha().iter().map(|a| a - 1.0).sum();
    d_tilde
        .alpha()
        .iter()
        .map(|&a| (a - 1.0) * trigamma_pos(a) - tri_s * excess)
        .collect()
}
