//! Experiment runners: the vacuity/EU correlation study, the three-variant
//! ablation, and one-parameter sweeps over σ or ε.
//!
//! Each (variant, seed) run is independent. Runs may execute on a worker
//! pool, but results are always gathered back into job order, so output
//! does not depend on `jobs`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate, Dataset, LabeledSample, LongTailSpec};
use crate::error::{Error, Result};
use crate::evidential::{decompose, to_dirichlet, EvidenceVector};
use crate::metrics::{fmt6, mean_std, spearman, MetricsRow, ABLATION_HEADER};
use crate::network::{Network, NetworkSpec};
use crate::trainer::{train, uncertainty_reports, Objective, TrainConfig};

pub const MIN_STUDY_PAIRS: usize = 100;

/// Where the correlation study draws its Dirichlet states from.
pub enum CorrelationSource<'a> {
    /// Direction ~ Dirichlet(1), total evidence ~ LogUniform[0.1, 100].
    Synthetic { k: usize },
    /// Predictions of a trained network on a sample set.
    Model {
        network: &'a Network,
        samples: &'a [LabeledSample],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStudy {
    pub spearman: f64,
    /// `(vacuity, entropy EU)` per state.
    pub pairs: Vec<(f64, f64)>,
}

fn synthetic_evidence(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = raw.iter().sum();
    let total = rng.random_range(0.1f64.ln()..100f64.ln()).exp();
    raw.into_iter().map(|g| total * g / sum).collect()
}

pub fn correlation_study(source: &CorrelationSource<'_>, n: usize, seed: u64) -> Result<CorrelationStudy> {
    if n < MIN_STUDY_PAIRS {
        return Err(Error::domain(format!(
            "correlation study needs n >= {MIN_STUDY_PAIRS}, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = match source {
        CorrelationSource::Synthetic { k } => {
            if *k < 2 {
                return Err(Error::domain("synthetic study needs k >= 2"));
            }
            (0..n)
                .map(|_| {
                    let ev = EvidenceVector::new(synthetic_evidence(&mut rng, *k))?;
                    let r = decompose(&to_dirichlet(&ev))?;
                    Ok((r.vacuity, r.eu))
                })
                .collect::<Result<Vec<_>>>()?
        }
        CorrelationSource::Model { network, samples } => {
            if samples.len() < n {
                return Err(Error::domain(format!(
                    "requested {n} pairs from {} samples",
                    samples.len()
                )));
            }
            let mut idx: Vec<usize> = (0..samples.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(n);
            idx.sort_unstable();
            let chosen: Vec<LabeledSample> = idx.iter().map(|&i| samples[i].clone()).collect();
            uncertainty_reports(network, &chosen)?
                .into_iter()
                .map(|r| (r.vacuity, r.eu))
                .collect()
        }
    };
    let (u, eu): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Ok(CorrelationStudy {
        spearman: spearman(&u, &eu)?,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    EdlOnly,
    EdlEu,
    EdlEuAu,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::EdlOnly, Variant::EdlEu, Variant::EdlEuAu];

    pub fn name(self) -> &'static str {
        match self {
            Variant::EdlOnly => "edl_only",
            Variant::EdlEu => "edl_eu",
            Variant::EdlEuAu => "edl_eu_au",
        }
    }

    /// The base config with objective and policy flags set for this variant.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Variant::EdlOnly => {
                cfg.objective = Objective::Edl;
                cfg.policy.reweight_enabled = false;
                cfg.policy.smoothing_enabled = false;
            }
            Variant::EdlEu => {
                cfg.objective = Objective::Dual;
                cfg.policy.reweight_enabled = true;
                cfg.policy.smoothing_enabled = false;
            }
            Variant::EdlEuAu => {
                cfg.objective = Objective::Dual;
                cfg.policy.reweight_enabled = true;
                cfg.policy.smoothing_enabled = true;
            }
        }
        cfg
    }
}

/// Shared inputs for a multi-seed study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyBase {
    pub data: LongTailSpec,
    pub net: NetworkSpec,
    pub train: TrainConfig,
}

impl StudyBase {
    /// Data and training seeds for one run, both set to `seed`.
    pub fn for_seed(&self, seed: u64) -> (LongTailSpec, TrainConfig) {
        let mut data = self.data.clone();
        data.seed = seed;
        let mut train = self.train.clone();
        train.seed = seed;
        (data, train)
    }
}

/// Fills zero `input_dim` / `k` from the dataset spec.
pub fn resolve_net_spec(net: &NetworkSpec, data: &LongTailSpec) -> NetworkSpec {
    let mut spec = net.clone();
    if spec.input_dim == 0 {
        spec.input_dim = data.feature_dim;
    }
    if spec.k == 0 {
        spec.k = data.k;
    }
    spec
}

pub fn params_fingerprint(params: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for p in params {
        p.to_bits().hash(&mut h);
    }
    h.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub final_row: MetricsRow,
    pub data_fingerprint: u64,
    pub init_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub mean: MetricsRow,
    pub std: MetricsRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<AblationResult>,
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    Ok(pool.install(f))
}

fn run_jobs<J: Sync, T: Send>(jobs: usize, items: &[J], f: impl Fn(&J) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    with_pool(jobs, || items.par_iter().map(f).collect::<Result<Vec<T>>>())?
}

fn summarize(variant: Variant, rows: &[(u64, MetricsRow)]) -> AblationResult {
    let column = |f: fn(&MetricsRow) -> f64| mean_std(&rows.iter().map(|(_, r)| f(r)).collect::<Vec<_>>());
    let fields: [fn(&MetricsRow) -> f64; 8] = [
        |r| r.overall_acc,
        |r| r.avg_class_acc,
        |r| r.head_acc,
        |r| r.tail_acc,
        |r| r.mean_au_ambiguous,
        |r| r.mean_au_clean,
        |r| r.mean_eu_tail,
        |r| r.mean_eu_head,
    ];
    let stats: Vec<(f64, f64)> = fields.iter().map(|f| column(*f)).collect();
    let epoch = rows.first().map(|(_, r)| r.epoch).unwrap_or(0);
    let build = |pick: fn(&(f64, f64)) -> f64| MetricsRow {
        epoch,
        overall_acc: pick(&stats[0]),
        avg_class_acc: pick(&stats[1]),
        head_acc: pick(&stats[2]),
        tail_acc: pick(&stats[3]),
        mean_au_ambiguous: pick(&stats[4]),
        mean_au_clean: pick(&stats[5]),
        mean_eu_tail: pick(&stats[6]),
        mean_eu_head: pick(&stats[7]),
    };
    AblationResult {
        variant,
        seeds: rows.iter().map(|(s, _)| *s).collect(),
        mean: build(|s| s.0),
        std: build(|s| s.1),
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.len() < 3 {
        return Err(Error::config("seeds", "at least 3 seeds are required"));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("seeds", "seeds must be distinct"));
    }
    Ok(())
}

fn datasets(base: &StudyBase, seeds: &[u64], jobs: usize) -> Result<Vec<Dataset>> {
    run_jobs(jobs, seeds, |&s| generate(&base.for_seed(s).0))
}

/// Trains the given variants for every seed.
pub fn run_variants(base: &StudyBase, variants: &[Variant], seeds: &[u64], jobs: usize) -> Result<Vec<RunRecord>> {
    base.data.validate()?;
    base.train.validate()?;
    let data = datasets(base, seeds, jobs)?;
    let mut items = Vec::with_capacity(variants.len() * seeds.len());
    for &v in variants {
        for (i, &s) in seeds.iter().enumerate() {
            items.push((v, s, i));
        }
    }
    run_jobs(jobs, &items, |&(variant, seed, i)| {
        let (spec, train_cfg) = base.for_seed(seed);
        let net_spec = resolve_net_spec(&base.net, &spec);
        let init = Network::new(net_spec.clone(), train_cfg.seed)?;
        let (_, final_row) = train(&data[i], &net_spec, &variant.apply(&train_cfg))?;
        Ok(RunRecord {
            variant,
            seed,
            final_row,
            data_fingerprint: data[i].fingerprint(),
            init_fingerprint: params_fingerprint(init.params()),
        })
    })
}

/// Runs all three variants on every seed and aggregates per variant.
pub fn ablate(base: &StudyBase, seeds: &[u64], jobs: usize) -> Result<AblationReport> {
    check_seeds(seeds)?;
    let runs = run_variants(base, &Variant::ALL, seeds, jobs)?;
    let summary = Variant::ALL
        .iter()
        .map(|&v| {
            let rows: Vec<(u64, MetricsRow)> = runs
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| (r.seed, r.final_row))
                .collect();
            summarize(v, &rows)
        })
        .collect();
    Ok(AblationReport { runs, summary })
}

/// One line of the ablation table. `seed` is `"mean"` on summary lines.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: String,
    pub overall_acc: f64,
    pub avg_class_acc: f64,
    pub head_acc: f64,
    pub tail_acc: f64,
}

impl AblationRow {
    fn from_metrics(variant: Variant, seed: String, r: &MetricsRow) -> Self {
        Self {
            variant: variant.name().to_string(),
            seed,
            overall_acc: r.overall_acc,
            avg_class_acc: r.avg_class_acc,
            head_acc: r.head_acc,
            tail_acc: r.tail_acc,
        }
    }
}

impl AblationReport {
    pub fn rows(&self) -> Vec<AblationRow> {
        let mut rows: Vec<AblationRow> = self
            .runs
            .iter()
            .map(|r| AblationRow::from_metrics(r.variant, r.seed.to_string(), &r.final_row))
            .collect();
        rows.extend(
            self.summary
                .iter()
                .map(|s| AblationRow::from_metrics(s.variant, "mean".into(), &s.mean)),
        );
        rows
    }

    pub fn result(&self, variant: Variant) -> Option<&AblationResult> {
        self.summary.iter().find(|s| s.variant == variant)
    }
}

pub fn write_ablation_csv<W: Write>(writer: W, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ABLATION_HEADER)?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.seed.clone(),
            fmt6(r.overall_acc),
            fmt6(r.avg_class_acc),
            fmt6(r.head_acc),
            fmt6(r.tail_acc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_cell(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
}

pub fn read_ablation_csv<R: Read>(reader: R) -> Result<Vec<AblationRow>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(ABLATION_HEADER) {
        return Err(Error::Parse("unexpected ablation header".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(AblationRow {
                variant: rec[0].to_string(),
                seed: rec[1].to_string(),
                overall_acc: parse_cell(&rec[2])?,
                avg_class_acc: parse_cell(&rec[3])?,
                head_acc: parse_cell(&rec[4])?,
                tail_acc: parse_cell(&rec[5])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Sigma,
    Epsilon,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Sigma => "sigma",
            SweepParameter::Epsilon => "epsilon",
        }
    }
}

pub const SWEEP_HEADER: [&str; 7] = [
    "parameter",
    "value",
    "seed",
    "overall_acc",
    "avg_class_acc",
    "head_acc",
    "tail_acc",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: Vec<(u64, MetricsRow)>,
    pub mean: MetricsRow,
    pub std: MetricsRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
}

/// Full-policy runs at each value of σ or ε, the other parameter held at
/// its base value.
pub fn sweep(
    parameter: SweepParameter,
    values: &[f64],
    base: &StudyBase,
    seeds: &[u64],
    jobs: usize,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    if seeds.is_empty() {
        return Err(Error::config("seeds", "sweep needs at least one seed"));
    }
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut b = base.clone();
        match parameter {
            SweepParameter::Sigma => b.train.policy.sigma = value,
            SweepParameter::Epsilon => b.train.policy.epsilon = value,
        }
        b.train.policy.validate()?;
        let runs: Vec<(u64, MetricsRow)> = run_variants(&b, &[Variant::EdlEuAu], seeds, jobs)?
            .into_iter()
            .map(|r| (r.seed, r.final_row))
            .collect();
        let s = summarize(Variant::EdlEuAu, &runs);
        points.push(SweepPoint {
            value,
            runs,
            mean: s.mean,
            std: s.std,
        });
    }
    Ok(SweepReport { parameter, points })
}

/// Per-seed lines followed by one `seed = mean` line per value.
pub fn write_sweep_csv<W: Write>(writer: W, report: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    let name = report.parameter.name();
    let line = |seed: String, value: f64, r: &MetricsRow| {
        [
            name.to_string(),
            fmt6(value),
            seed,
            fmt6(r.overall_acc),
            fmt6(r.avg_class_acc),
            fmt6(r.head_acc),
            fmt6(r.tail_acc),
        ]
    };
    for p in &report.points {
        for (seed, r) in &p.runs {
            w.write_record(line(seed.to_string(), p.value, r))?;
        }
    }
    for p in &report.points {
        w.write_record(line("mean".into(), p.value, &p.mean))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_rejects_small_n() {
        let src = CorrelationSource::Synthetic { k: 10 };
        assert!(correlation_study(&src, 99, 0).is_err());
        assert!(correlation_study(&src, 100, 0).is_ok());
    }

    #[test]
    fn synthetic_study_is_strongly_correlated() {
        let src = CorrelationSource::Synthetic { k: 10 };
        let study = correlation_study(&src, 2000, 3).unwrap();
        assert_eq!(study.pairs.len(), 2000);
        assert!(study.spearman >= 0.9, "{}", study.spearman);
        assert!(study.pairs.iter().all(|&(u, eu)| u > 0.0 && u <= 1.0 && eu >= 0.0));
    }

    #[test]
    fn variants_differ_only_in_policy() {
        let base = TrainConfig::default();
        let a = Variant::EdlOnly.apply(&base);
        let c = Variant::EdlEuAu.apply(&base);
        assert_eq!(a.seed, c.seed);
        assert_eq!(a.schedule, c.schedule);
        assert_eq!(a.policy.sigma, c.policy.sigma);
        assert!(!a.policy.reweight_enabled && c.policy.smoothing_enabled);
        assert_eq!(Variant::EdlEu.apply(&base).objective, Objective::Dual);
    }

    #[test]
    fn ablation_needs_three_distinct_seeds() {
        assert!(check_seeds(&[1, 2]).is_err());
        assert!(check_seeds(&[1, 2, 2]).is_err());
        assert!(check_seeds(&[1, 2, 3]).is_ok());
    }

    #[test]
    fn ablation_csv_round_trip() {
        let rows = vec![
            AblationRow {
                variant: "edl_only".into(),
                seed: "1".into(),
                overall_acc: 50.123456,
                avg_class_acc: 40.5,
                head_acc: 90.0,
                tail_acc: 10.25,
            },
            AblationRow {
                variant: "edl_only".into(),
                seed: "mean".into(),
                overall_acc: 50.0,
                avg_class_acc: 40.0,
                head_acc: 90.0,
                tail_acc: 10.0,
            },
        ];
        let mut buf = Vec::new();
        write_ablation_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_ablation_csv(buf.as_slice()).unwrap(), rows);
    }
}
