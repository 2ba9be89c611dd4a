//! Mini-batch training of the evidential network and test-set evaluation.
//!
//! Each batch runs one forward pass per sample. From that pass the trainer
//! derives the Dirichlet state, the uncertainty report, and (for the
//! uncertainty-guided objective) the per-sample weight and smoothing
//! factor. Weight and smoothing are frozen before the backward pass. The
//! batch loss is the plain mean of per-sample totals.
//!
//! Runs are deterministic in the seed: initialisation draws from stream 0
//! of a ChaCha generator, and epoch `e` shuffles with stream `e + 1`.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, HeadTailPartition, LabeledSample};
use crate::error::{Error, Result};
use crate::evidential::{decompose, to_dirichlet, EvidenceVector, UncertaintyReport};
use crate::loss::{
    ace_grad_alpha, adjusted_alpha, dual_loss, edl_loss, kl_grad_alpha, lambda_at, AnnealSchedule,
    LabelVector,
};
use crate::metrics::MetricsRow;
use crate::network::{AdamConfig, AdamState, ForwardCache, Network, NetworkSpec};
use crate::policy::{batch_policy, PolicyConfig, SamplePolicy};

pub const STATE_FORMAT: &str = "dual-train-state/v1";

/// Which per-sample loss the trainer minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Expected cross-entropy plus annealed KL, no uncertainty policy.
    Edl,
    /// Policy-weighted, policy-smoothed variant.
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub objective: Objective,
    pub policy: PolicyConfig,
    pub schedule: AnnealSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr_start: 1e-3,
            lr_end: 1e-6,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            objective: Objective::Dual,
            policy: PolicyConfig::default(),
            schedule: AnnealSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.lr_start.is_finite() && self.lr_start >= 0.0) {
            return Err(Error::config("train.lr_start", "must be finite and >= 0"));
        }
        if !(self.lr_end.is_finite() && self.lr_end >= 0.0 && self.lr_end <= self.lr_start) {
            return Err(Error::config("train.lr_end", "must lie in [0, lr_start]"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be finite and >= 0"));
        }
        for (name, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        self.policy.validate()?;
        self.schedule.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

/// `lr_end + ½(lr_start − lr_end)(1 + cos(π·epoch/epochs))`.
pub fn cosine_lr(cfg: &TrainConfig, epoch: usize) -> f64 {
    let progress = epoch as f64 / cfg.epochs as f64;
    cfg.lr_end + 0.5 * (cfg.lr_start - cfg.lr_end) * (1.0 + (PI * progress).cos())
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub format: String,
    pub network: Network,
    pub optimizer: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    /// Shuffling for epoch `e` is derived from this seed and `e`.
    pub seed: u64,
    pub history: Vec<MetricsRow>,
}

impl TrainState {
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let network = Network::new(spec, seed)?;
        let optimizer = AdamState::new(network.num_params());
        Ok(Self {
            format: STATE_FORMAT.to_string(),
            network,
            optimizer,
            epoch: 0,
            seed,
            history: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(s)?;
        if state.format != STATE_FORMAT {
            return Err(Error::Parse(format!(
                "unsupported state format {:?}, expected {STATE_FORMAT:?}",
                state.format
            )));
        }
        Ok(state)
    }
}

/// Forward pass plus everything the loss needs for one sample.
struct SampleEval {
    cache: ForwardCache,
    report: UncertaintyReport,
}

fn evaluate_sample(net: &Network, s: &LabeledSample) -> Result<SampleEval> {
    let cache = net.forward_cached(&s.features)?;
    let ev = EvidenceVector::new(cache.evidence().to_vec())?;
    let report = decompose(&to_dirichlet(&ev))?;
    Ok(SampleEval { cache, report })
}

fn kl_grad_masked(d: &crate::evidential::DirichletState, y: &LabelVector) -> Result<Vec<f64>> {
    // ∂α̃_k/∂α_k = 1 − y_k: the labelled entry is constant.
    let mut g = kl_grad_alpha(&adjusted_alpha(d, y)?);
    if let Some(c) = y.class() {
        g[c] = 0.0;
    }
    Ok(g)
}

fn non_finite(epoch: usize, sample: usize, cache: &ForwardCache) -> Error {
    Error::NonFiniteLoss {
        epoch,
        sample,
        alpha: cache.evidence().iter().map(|e| e + 1.0).collect(),
    }
}

/// Mean loss and gradient of the weighted, smoothed objective with the
/// per-sample policies held fixed.
pub fn loss_and_gradient_with_policies(
    net: &Network,
    batch: &[&LabeledSample],
    policies: &[SamplePolicy],
    lambda_t: f64,
) -> Result<(f64, Vec<f64>)> {
    let evals = batch
        .iter()
        .map(|s| evaluate_sample(net, s))
        .collect::<Result<Vec<_>>>()?;
    weighted_batch(net, batch, &evals, policies, lambda_t, 0, &[])
}

fn weighted_batch(
    net: &Network,
    batch: &[&LabeledSample],
    evals: &[SampleEval],
    policies: &[SamplePolicy],
    lambda_t: f64,
    epoch: usize,
    indices: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if policies.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            got: policies.len(),
        });
    }
    let k = net.spec().k;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; net.num_params()];
    let mut total = 0.0;
    for (i, ((s, ev), p)) in batch.iter().zip(evals).zip(policies).enumerate() {
        let d = to_dirichlet(&EvidenceVector::new(ev.cache.evidence().to_vec())?);
        let y = LabelVector::one_hot(s.label, k)?;
        let loss = dual_loss(&d, &y, p.weight, p.smoothing, lambda_t)?;
        if !loss.total.is_finite() {
            return Err(non_finite(epoch, indices.get(i).copied().unwrap_or(i), &ev.cache));
        }
        total += loss.total;
        let y_soft = y.smoothed(p.smoothing)?;
        let g_ace = ace_grad_alpha(&d, &y_soft)?;
        let g_kl = kl_grad_masked(&d, &y)?;
        let g: Vec<f64> = g_ace
            .iter()
            .zip(&g_kl)
            .map(|(a, b)| p.weight * a + lambda_t * b)
            .collect();
        net.accumulate_gradient(&ev.cache, &g, scale, &mut grads)?;
    }
    Ok((total * scale, grads))
}

fn edl_batch(
    net: &Network,
    batch: &[&LabeledSample],
    evals: &[SampleEval],
    lambda_t: f64,
    epoch: usize,
    indices: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let k = net.spec().k;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; net.num_params()];
    let mut total = 0.0;
    for (i, (s, ev)) in batch.iter().zip(evals).enumerate() {
        let d = to_dirichlet(&EvidenceVector::new(ev.cache.evidence().to_vec())?);
        let y = LabelVector::one_hot(s.label, k)?;
        let loss = edl_loss(&d, &y, lambda_t)?;
        if !loss.total.is_finite() {
            return Err(non_finite(epoch, indices.get(i).copied().unwrap_or(i), &ev.cache));
        }
        total += loss.total;
        let g_ace = ace_grad_alpha(&d, &y)?;
        let g_kl = kl_grad_masked(&d, &y)?;
        let g: Vec<f64> = g_ace
            .iter()
            .zip(&g_kl)
            .map(|(a, b)| a + lambda_t * b)
            .collect();
        net.accumulate_gradient(&ev.cache, &g, scale, &mut grads)?;
    }
    Ok((total * scale, grads))
}

/// Loss and gradient for one batch under the configured objective. For
/// the uncertainty-guided objective, also returns the policies used.
/// `indices` are the training-set positions of the batch members and only
/// feed the non-finite diagnostic.
pub fn batch_step(
    net: &Network,
    batch: &[&LabeledSample],
    cfg: &TrainConfig,
    lambda_t: f64,
    epoch: usize,
    indices: &[usize],
) -> Result<(f64, Vec<f64>, Option<Vec<SamplePolicy>>)> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let evals = batch
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let cache = net.forward_cached(&s.features)?;
            if cache.evidence().iter().any(|e| !e.is_finite()) {
                return Err(non_finite(epoch, indices.get(i).copied().unwrap_or(i), &cache));
            }
            let ev = EvidenceVector::new(cache.evidence().to_vec())?;
            let report = decompose(&to_dirichlet(&ev))?;
            Ok(SampleEval { cache, report })
        })
        .collect::<Result<Vec<_>>>()?;
    match cfg.objective {
        Objective::Edl => {
            let (loss, grads) = edl_batch(net, batch, &evals, lambda_t, epoch, indices)?;
            Ok((loss, grads, None))
        }
        Objective::Dual => {
            let reports: Vec<UncertaintyReport> = evals.iter().map(|e| e.report.clone()).collect();
            let policies = batch_policy(&reports, &cfg.policy)?;
            let (loss, grads) =
                weighted_batch(net, batch, &evals, &policies, lambda_t, epoch, indices)?;
            Ok((loss, grads, Some(policies)))
        }
    }
}

fn run_epoch(state: &mut TrainState, train: &[LabeledSample], cfg: &TrainConfig) -> Result<()> {
    let epoch = state.epoch;
    let lr = cosine_lr(cfg, epoch);
    let lambda_t = lambda_at(&cfg.schedule, epoch);
    let adam = cfg.adam();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
    rng.set_stream(epoch as u64 + 1);
    order.shuffle(&mut rng);

    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&LabeledSample> = chunk.iter().map(|&i| &train[i]).collect();
        let (_, grads, _) = batch_step(&state.network, &batch, cfg, lambda_t, epoch, chunk)?;
        state
            .optimizer
            .update(state.network.params_mut(), &grads, lr, &adam);
    }
    state.epoch += 1;
    Ok(())
}

/// Trains from a fresh initialisation for `cfg.epochs` epochs.
pub fn train(data: &Dataset, net_spec: &NetworkSpec, cfg: &TrainConfig) -> Result<(TrainState, MetricsRow)> {
    let state = TrainState::init(net_spec.clone(), cfg.seed)?;
    resume(state, data, cfg)
}

/// Continues `state` until `cfg.epochs` epochs are complete, evaluating on
/// the test split after each one.
pub fn resume(mut state: TrainState, data: &Dataset, cfg: &TrainConfig) -> Result<(TrainState, MetricsRow)> {
    train_until(&mut state, data, cfg, cfg.epochs)?;
    let last = match state.history.last() {
        Some(row) => *row,
        None => evaluate(&state.network, &data.test, &data.partition)?,
    };
    Ok((state, last))
}

/// Runs epochs until `state.epoch == stop` (capped at `cfg.epochs`).
pub fn train_until(state: &mut TrainState, data: &Dataset, cfg: &TrainConfig, stop: usize) -> Result<()> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::domain("training split is empty"));
    }
    let stop = stop.min(cfg.epochs);
    while state.epoch < stop {
        run_epoch(state, &data.train, cfg)?;
        let mut row = evaluate(&state.network, &data.test, &data.partition)?;
        row.epoch = state.epoch;
        state.history.push(row);
    }
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn mean_or_nan(sum: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Per-class accuracies (percent) and group averages over the test split.
pub fn evaluate(net: &Network, test: &[LabeledSample], partition: &HeadTailPartition) -> Result<MetricsRow> {
    let k = net.spec().k;
    let mut seen = vec![0usize; k];
    let mut correct = vec![0usize; k];
    let mut ambiguous_classes = vec![false; k];
    for s in test {
        if s.clean_label >= k {
            return Err(Error::domain(format!("test label {} out of range", s.clean_label)));
        }
        if s.is_ambiguous {
            ambiguous_classes[s.clean_label] = true;
        }
    }
    let (mut au_amb, mut n_amb, mut au_clean, mut n_clean) = (0.0, 0, 0.0, 0);
    let (mut eu_tail, mut n_tail, mut eu_head, mut n_head) = (0.0, 0, 0.0, 0);
    for s in test {
        let eval = evaluate_sample(net, s)?;
        let c = s.clean_label;
        seen[c] += 1;
        if argmax(eval.cache.evidence()) == c {
            correct[c] += 1;
        }
        let r = &eval.report;
        if s.is_ambiguous {
            au_amb += r.au;
            n_amb += 1;
        } else if ambiguous_classes[c] {
            au_clean += r.au;
            n_clean += 1;
        }
        if partition.is_tail(c) {
            eu_tail += r.eu;
            n_tail += 1;
        } else if partition.is_head(c) {
            eu_head += r.eu;
            n_head += 1;
        }
    }
    if let Some(c) = seen.iter().position(|&n| n == 0) {
        return Err(Error::domain(format!("class {c} has no test samples")));
    }
    let per_class: Vec<f64> = correct
        .iter()
        .zip(&seen)
        .map(|(&a, &n)| 100.0 * a as f64 / n as f64)
        .collect();
    let group = |classes: &[usize]| {
        mean_or_nan(classes.iter().map(|&c| per_class[c]).sum(), classes.len())
    };
    Ok(MetricsRow {
        epoch: 0,
        overall_acc: 100.0 * correct.iter().sum::<usize>() as f64 / test.len() as f64,
        avg_class_acc: per_class.iter().sum::<f64>() / k as f64,
        head_acc: group(&partition.head_classes),
        tail_acc: group(&partition.tail_classes),
        mean_au_ambiguous: mean_or_nan(au_amb, n_amb),
        mean_au_clean: mean_or_nan(au_clean, n_clean),
        mean_eu_tail: mean_or_nan(eu_tail, n_tail),
        mean_eu_head: mean_or_nan(eu_head, n_head),
    })
}

/// Per-sample uncertainty reports on a split, in order.
pub fn uncertainty_reports(net: &Network, samples: &[LabeledSample]) -> Result<Vec<UncertaintyReport>> {
    samples
        .iter()
        .map(|s| evaluate_sample(net, s).map(|e| e.report))
        .collect()
}
