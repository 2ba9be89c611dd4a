//! Uncertainty-driven training policy.
//!
//! Each sample's epistemic uncertainty becomes a loss weight
//! `w = (2·EU)^σ`, and its aleatoric uncertainty becomes a label-smoothing
//! factor `ε̃ = sigmoid(AU)·ε`. Both are plain numbers computed from the
//! current forward pass; the trainer treats them as constants when it
//! backpropagates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidential::UncertaintyReport;
use crate::special::sigmoid;

/// Which quantity stands in for EU in the reweighting rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EuSource {
    /// `K / S`, bounded in (0, 1].
    Vacuity,
    /// `PU − AU` from the entropy decomposition, in nats.
    EntropyDecomposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub sigma: f64,
    pub epsilon: f64,
    pub eu_source: EuSource,
    pub reweight_enabled: bool,
    pub smoothing_enabled: bool,
    /// Divide weights by their batch mean.
    pub normalize_weights: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            epsilon: 0.2,
            eu_source: EuSource::Vacuity,
            reweight_enabled: true,
            smoothing_enabled: true,
            normalize_weights: false,
        }
    }
}

impl PolicyConfig {
    /// Both mechanisms switched off.
    pub fn disabled() -> Self {
        Self {
            reweight_enabled: false,
            smoothing_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::config("policy.sigma", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::config("policy.epsilon", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePolicy {
    pub weight: f64,
    pub smoothing: f64,
}

pub fn eu_weight(report: &UncertaintyReport, cfg: &PolicyConfig) -> f64 {
    if !cfg.reweight_enabled {
        return 1.0;
    }
    let eu = match cfg.eu_source {
        EuSource::Vacuity => report.vacuity,
        EuSource::EntropyDecomposition => report.eu,
    };
    (2.0 * eu).powf(cfg.sigma)
}

pub fn au_smoothing(report: &UncertaintyReport, cfg: &PolicyConfig) -> f64 {
    if !cfg.smoothing_enabled {
        return 0.0;
    }
    sigmoid(report.au) * cfg.epsilon
}

pub fn batch_policy(reports: &[UncertaintyReport], cfg: &PolicyConfig) -> Result<Vec<SamplePolicy>> {
    if reports.is_empty() {
        return Err(Error::domain("policy requested for an empty batch"));
    }
    let mut policies: Vec<SamplePolicy> = reports
        .iter()
        .map(|r| SamplePolicy {
            weight: eu_weight(r, cfg),
            smoothing: au_smoothing(r, cfg),
        })
        .collect();
    if cfg.normalize_weights && cfg.reweight_enabled {
        // Shifted mean: exact when all weights are equal.
        let min = policies.iter().map(|p| p.weight).fold(f64::INFINITY, f64::min);
        let excess: f64 = policies.iter().map(|p| p.weight - min).sum();
        let mean = min + excess / policies.len() as f64;
        if mean > 0.0 {
            for p in &mut policies {
                p.weight /= mean;
            }
        }
    }
    Ok(policies)
}
