//! Seeded long-tailed Gaussian benchmark.
//!
//! Class `c` receives `round(n_max · IR^(−c/(k−1)))` training samples drawn
//! from an isotropic unit-variance Gaussian around its mean. Designated
//! class pairs `(a, b, m)` contribute ambiguous samples
//! `(1 − m)·x_a + m·x_b` labelled `a`, and a fraction of training labels
//! can be flipped uniformly to another class. The test split is balanced
//! and noise-free so per-class accuracy is measurable for the rarest
//! classes.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbiguousPair {
    pub class: usize,
    pub other: usize,
    /// Mixing weight `m` toward `other`.
    pub mix_fraction: f64,
}

/// Which training classes are exposed to label flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    All,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongTailSpec {
    pub k: usize,
    pub n_max: usize,
    pub imbalance_ratio: f64,
    pub feature_dim: usize,
    /// Pairwise distance between class means, in within-class standard
    /// deviations.
    pub class_separation: f64,
    pub ambiguous_class_pairs: Vec<AmbiguousPair>,
    /// Fraction of an ambiguous pair's first class drawn as mixtures.
    pub ambiguous_rate: f64,
    pub label_noise_rate: f64,
    pub noise_scope: NoiseScope,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for LongTailSpec {
    fn default() -> Self {
        Self {
            k: 10,
            n_max: 500,
            imbalance_ratio: 50.0,
            feature_dim: 16,
            class_separation: 5.0,
            ambiguous_class_pairs: vec![
                AmbiguousPair {
                    class: 6,
                    other: 7,
                    mix_fraction: 0.5,
                },
                AmbiguousPair {
                    class: 8,
                    other: 9,
                    mix_fraction: 0.5,
                },
            ],
            ambiguous_rate: 0.3,
            label_noise_rate: 0.1,
            noise_scope: NoiseScope::Tail,
            test_per_class: 200,
            seed: 0,
        }
    }
}

impl LongTailSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("data.k", "need at least 2 classes"));
        }
        if !self.imbalance_ratio.is_finite() || self.imbalance_ratio < 1.0 {
            return Err(Error::config("data.imbalance_ratio", "must be finite and >= 1"));
        }
        if (self.n_max as f64) < self.imbalance_ratio {
            return Err(Error::config(
                "data.n_max",
                "must be at least imbalance_ratio so the rarest class is non-empty",
            ));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("data.feature_dim", "must be positive"));
        }
        if !self.class_separation.is_finite() || self.class_separation <= 0.0 {
            return Err(Error::config("data.class_separation", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_noise_rate) {
            return Err(Error::config("data.label_noise_rate", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.ambiguous_rate) {
            return Err(Error::config("data.ambiguous_rate", "must lie in [0, 1]"));
        }
        if self.test_per_class == 0 {
            return Err(Error::config("data.test_per_class", "must be positive"));
        }
        for p in &self.ambiguous_class_pairs {
            if p.class >= self.k || p.other >= self.k || p.class == p.other {
                return Err(Error::config(
                    "data.ambiguous_class_pairs",
                    format!("invalid pair ({}, {})", p.class, p.other),
                ));
            }
            if !(0.0..=1.0).contains(&p.mix_fraction) {
                return Err(Error::config(
                    "data.ambiguous_class_pairs",
                    "mix_fraction must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
    /// Label before noise injection.
    pub clean_label: usize,
    pub is_ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadTailPartition {
    pub head_classes: Vec<usize>,
    pub tail_classes: Vec<usize>,
}

impl HeadTailPartition {
    pub fn is_head(&self, class: usize) -> bool {
        self.head_classes.contains(&class)
    }

    pub fn is_tail(&self, class: usize) -> bool {
        self.tail_classes.contains(&class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub partition: HeadTailPartition,
}

impl Dataset {
    /// Stable hash over every feature bit and label.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in self.train.iter().chain(&self.test) {
            for f in &s.features {
                f.to_bits().hash(&mut h);
            }
            (s.label, s.clean_label, s.is_ambiguous).hash(&mut h);
        }
        self.partition.hash(&mut h);
        h.finish()
    }

    pub fn feature_dim(&self) -> usize {
        self.train.first().map_or(0, |s| s.features.len())
    }

    pub fn train_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for s in &self.train {
            counts[s.clean_label] += 1;
        }
        counts
    }
}

impl Hash for HeadTailPartition {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.head_classes.hash(state);
        self.tail_classes.hash(state);
    }
}

pub fn class_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    if spec.k < 2 {
        return Err(Error::domain("class_counts needs k >= 2"));
    }
    if !spec.imbalance_ratio.is_finite() || spec.imbalance_ratio < 1.0 {
        return Err(Error::domain("imbalance ratio must be >= 1"));
    }
    let denom = (spec.k - 1) as f64;
    let counts: Vec<usize> = (0..spec.k)
        .map(|c| {
            let n = spec.n_max as f64 * spec.imbalance_ratio.powf(-(c as f64) / denom);
            n.round() as usize
        })
        .collect();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::domain(format!(
            "class {c} would have zero samples (n_max = {}, IR = {})",
            spec.n_max, spec.imbalance_ratio
        )));
    }
    Ok(counts)
}

/// Head = the ⌈k/3⌉ most frequent classes (ties to the lower index).
pub fn partition_classes(counts: &[usize]) -> Result<HeadTailPartition> {
    if counts.len() < 2 {
        return Err(Error::domain("partition needs at least two classes"));
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let n_head = counts.len().div_ceil(3);
    let mut head_classes = order[..n_head].to_vec();
    let mut tail_classes = order[n_head..].to_vec();
    head_classes.sort_unstable();
    tail_classes.sort_unstable();
    Ok(HeadTailPartition {
        head_classes,
        tail_classes,
    })
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Class means with every pairwise distance at least `separation`.
///
/// With `dim >= k` the means are the vertices of a regular simplex in a
/// random orthonormal frame (all distances equal `separation`); otherwise
/// they are rejection-sampled from a ball that grows until they fit.
fn class_means(rng: &mut ChaCha8Rng, k: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    if dim >= k {
        let radius = separation / std::f64::consts::SQRT_2;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        while basis.len() < k {
            let mut v = gaussian_vec(rng, dim);
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue;
            }
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
        return basis
            .into_iter()
            .map(|b| b.into_iter().map(|x| x * radius).collect())
            .collect();
    }
    let mut radius = separation;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut rejections = 0;
    while means.len() < k {
        let dir = gaussian_vec(rng, dim);
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
        let cand: Vec<f64> = dir.iter().map(|x| x / norm * r).collect();
        if means.iter().all(|m| distance(m, &cand) >= separation) {
            means.push(cand);
        } else {
            rejections += 1;
            if rejections % 200 == 0 {
                radius *= 1.05;
            }
        }
    }
    means
}

fn draw_point(rng: &mut ChaCha8Rng, mean: &[f64]) -> Vec<f64> {
    mean.iter()
        .map(|m| m + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn draw_class(
    rng: &mut ChaCha8Rng,
    spec: &LongTailSpec,
    means: &[Vec<f64>],
    class: usize,
    n: usize,
    out: &mut Vec<LabeledSample>,
) {
    let pair = spec.ambiguous_class_pairs.iter().find(|p| p.class == class);
    for _ in 0..n {
        let base = draw_point(rng, &means[class]);
        let (features, is_ambiguous) = match pair {
            Some(p) if rng.random::<f64>() < spec.ambiguous_rate => {
                let other = draw_point(rng, &means[p.other]);
                let m = p.mix_fraction;
                let mixed = base
                    .iter()
                    .zip(&other)
                    .map(|(a, b)| (1.0 - m) * a + m * b)
                    .collect();
                (mixed, true)
            }
            _ => (base, false),
        };
        out.push(LabeledSample {
            features,
            label: class,
            clean_label: class,
            is_ambiguous,
        });
    }
}

/// Generates the train split, balanced test split, and head/tail partition.
pub fn generate(spec: &LongTailSpec) -> Result<Dataset> {
    spec.validate()?;
    let counts = class_counts(spec)?;
    let partition = partition_classes(&counts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = class_means(&mut rng, spec.k, spec.feature_dim, spec.class_separation);

    let mut train = Vec::with_capacity(counts.iter().sum());
    for (class, &n) in counts.iter().enumerate() {
        draw_class(&mut rng, spec, &means, class, n, &mut train);
    }
    if spec.label_noise_rate > 0.0 {
        for s in &mut train {
            let exposed = match spec.noise_scope {
                NoiseScope::All => true,
                NoiseScope::Tail => partition.is_tail(s.clean_label),
            };
            if exposed && rng.random::<f64>() < spec.label_noise_rate {
                let shift = rng.random_range(1..spec.k);
                s.label = (s.clean_label + shift) % spec.k;
            }
        }
    }

    let mut test = Vec::with_capacity(spec.k * spec.test_per_class);
    for class in 0..spec.k {
        draw_class(&mut rng, spec, &means, class, spec.test_per_class, &mut test);
    }
    Ok(Dataset {
        train,
        test,
        partition,
    })
}

/// Realised max/min ratio of the given counts.
pub fn realized_imbalance(counts: &[usize]) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    let min = counts.iter().copied().min().unwrap_or(0) as f64;
    max / min
}

/// Sidecar written next to dataset CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: LongTailSpec,
    pub partition: HeadTailPartition,
    pub train_counts: Vec<usize>,
    pub realized_imbalance_ratio: f64,
}

fn format_feature(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_samples_csv<W: Write>(writer: W, samples: &[LabeledSample]) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    header.extend(["label", "clean_label", "is_ambiguous"].map(String::from));
    w.write_record(&header)?;
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.features.len(),
            });
        }
        let mut row: Vec<String> = s.features.iter().map(|&x| format_feature(x)).collect();
        row.push(s.label.to_string());
        row.push(s.clean_label.to_string());
        row.push(u8::from(s.is_ambiguous).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<LabeledSample>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let n = headers.len();
    if n < 3
        || &headers[n - 3] != "label"
        || &headers[n - 2] != "clean_label"
        || &headers[n - 1] != "is_ambiguous"
    {
        return Err(Error::Parse(format!("unexpected dataset header: {headers:?}")));
    }
    let dim = n - 3;
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let features = (0..dim)
            .map(|i| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad float {:?}: {e}", &rec[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        let is_ambiguous = match &rec[dim + 2] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse(format!("bad flag {other:?}"))),
        };
        out.push(LabeledSample {
            features,
            label: parse_usize(&rec[dim])?,
            clean_label: parse_usize(&rec[dim + 1])?,
            is_ambiguous,
        });
    }
    Ok(out)
}

/// Writes `train.csv`, `test.csv` and `dataset.json` into `dir`.
pub fn export_dataset(dir: &Path, spec: &LongTailSpec, data: &Dataset) -> Result<DatasetMeta> {
    std::fs::create_dir_all(dir)?;
    write_samples_csv(std::fs::File::create(dir.join("train.csv"))?, &data.train)?;
    write_samples_csv(std::fs::File::create(dir.join("test.csv"))?, &data.test)?;
    let train_counts = data.train_counts(spec.k);
    let meta = DatasetMeta {
        spec: spec.clone(),
        partition: data.partition.clone(),
        realized_imbalance_ratio: realized_imbalance(&train_counts),
        train_counts,
    };
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    std::fs::write(dir.join("dataset.json"), json)?;
    Ok(meta)
}

pub fn import_dataset(dir: &Path) -> Result<(DatasetMeta, Dataset)> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("dataset.json"))?)?;
    let train = read_samples_csv(std::fs::File::open(dir.join("train.csv"))?)?;
    let test = read_samples_csv(std::fs::File::open(dir.join("test.csv"))?)?;
    let data = Dataset {
        train,
        test,
        partition: meta.partition.clone(),
    };
    Ok((meta, data))
}
