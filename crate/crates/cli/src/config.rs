//! Experiment configuration: one JSON document, every field defaulted,
//! unknown fields rejected.

use std::path::{Path, PathBuf};

use dual_core::data::LongTailSpec;
use dual_core::experiment::{resolve_net_spec, StudyBase};
use dual_core::loss::AnnealSchedule;
use dual_core::network::NetworkSpec;
use dual_core::policy::PolicyConfig;
use dual_core::trainer::{Objective, TrainConfig};
use dual_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Optimisation settings. Policy and schedule live at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_start: t.lr_start,
            lr_end: t.lr_end,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            seed: t.seed,
            objective: t.objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: LongTailSpec,
    pub net: NetworkSpec,
    pub train: TrainSection,
    pub policy: PolicyConfig,
    pub schedule: AnnealSchedule,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: LongTailSpec::default(),
            net: NetworkSpec::default(),
            train: TrainSection::default(),
            policy: PolicyConfig::default(),
            schedule: AnnealSchedule::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Parse(format!("config {}: {e}", p.display())))
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_start: t.lr_start,
            lr_end: t.lr_end,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            seed: t.seed,
            objective: t.objective,
            policy: self.policy,
            schedule: self.schedule,
        }
    }

    pub fn net_spec(&self) -> NetworkSpec {
        resolve_net_spec(&self.net, &self.data)
    }

    pub fn study_base(&self) -> StudyBase {
        StudyBase {
            data: self.data.clone(),
            net: self.net.clone(),
            train: self.train_config(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        let net = self.net_spec();
        if net.k != self.data.k {
            return Err(Error::config("net.k", "must match data.k"));
        }
        if net.input_dim != self.data.feature_dim {
            return Err(Error::config("net.input_dim", "must match data.feature_dim"));
        }
        net.validate()?;
        self.train_config().validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
