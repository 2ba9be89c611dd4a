//! Accuracy rows, rank correlation, and the CSV tables emitted by
//! experiments. Every float column is written with six decimals.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 9] = [
    "epoch",
    "overall_acc",
    "avg_class_acc",
    "head_acc",
    "tail_acc",
    "mean_au_ambiguous",
    "mean_au_clean",
    "mean_eu_tail",
    "mean_eu_head",
];

pub const PAIRS_HEADER: [&str; 2] = ["vacuity", "entropy_eu"];

pub const ABLATION_HEADER: [&str; 6] = [
    "variant",
    "seed",
    "overall_acc",
    "avg_class_acc",
    "head_acc",
    "tail_acc",
];

/// Evaluation summary for one epoch. Accuracies in percent, uncertainties
/// in nats. Undefined means (no ambiguous samples, say) are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub overall_acc: f64,
    pub avg_class_acc: f64,
    pub head_acc: f64,
    pub tail_acc: f64,
    pub mean_au_ambiguous: f64,
    pub mean_au_clean: f64,
    pub mean_eu_tail: f64,
    pub mean_eu_head: f64,
}

impl MetricsRow {
    fn floats(&self) -> [f64; 8] {
        [
            self.overall_acc,
            self.avg_class_acc,
            self.head_acc,
            self.tail_acc,
            self.mean_au_ambiguous,
            self.mean_au_clean,
            self.mean_eu_tail,
            self.mean_eu_head,
        ]
    }

    fn from_floats(epoch: usize, f: [f64; 8]) -> Self {
        Self {
            epoch,
            overall_acc: f[0],
            avg_class_acc: f[1],
            head_acc: f[2],
            tail_acc: f[3],
            mean_au_ambiguous: f[4],
            mean_au_clean: f[5],
            mean_eu_tail: f[6],
            mean_eu_head: f[7],
        }
    }

    /// The row as it reads back from CSV.
    pub fn quantized(&self) -> Self {
        Self::from_floats(self.epoch, self.floats().map(quantize))
    }

    /// Bitwise equality, treating NaN fields as equal to each other.
    pub fn same_bits(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self
                .floats()
                .iter()
                .zip(other.floats())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Rounds through the six-decimal text representation.
pub fn quantize(x: f64) -> f64 {
    fmt6(x).parse().unwrap_or(x)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
}

fn check_header(r: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let h = r.headers()?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected header {expected:?}, found {h:?}"
        )));
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for row in rows {
        let mut rec = vec![row.epoch.to_string()];
        rec.extend(row.floats().iter().map(|&x| fmt6(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(&mut r, &METRICS_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let epoch = rec[0]
            .parse()
            .map_err(|e| Error::Parse(format!("bad epoch {:?}: {e}", &rec[0])))?;
        let mut f = [0.0; 8];
        for (i, slot) in f.iter_mut().enumerate() {
            *slot = parse_f64(&rec[i + 1])?;
        }
        rows.push(MetricsRow::from_floats(epoch, f));
    }
    Ok(rows)
}

pub fn write_pairs_csv<W: Write>(writer: W, pairs: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PAIRS_HEADER)?;
    for &(u, eu) in pairs {
        w.write_record([fmt6(u), fmt6(eu)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(&mut r, &PAIRS_HEADER)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((parse_f64(&rec[0])?, parse_f64(&rec[1])?))
        })
        .collect()
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::domain("spearman needs at least 3 pairs"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::domain("spearman input contains NaN"));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::domain("spearman undefined for a constant sequence"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let x = [1.0, 5.0, 2.0, 9.0, 3.3];
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rev: Vec<f64> = sorted.iter().rev().copied().collect();
        assert!((spearman(&sorted, &rev).unwrap() + 1.0).abs() < 1e-15);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn spearman_errors() {
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        // Ties reduce |ρ| below 1 but stay well-defined.
        let r = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let rows = vec![
            MetricsRow {
                epoch: 1,
                overall_acc: 51.234_567_8,
                avg_class_acc: 40.0,
                head_acc: 90.5,
                tail_acc: 12.25,
                mean_au_ambiguous: 1.234_567_891,
                mean_au_clean: 0.9,
                mean_eu_tail: 0.1,
                mean_eu_head: 0.05,
            },
            MetricsRow {
                epoch: 2,
                overall_acc: 60.0,
                avg_class_acc: 55.5,
                head_acc: 80.0,
                tail_acc: 33.3,
                mean_au_ambiguous: f64::NAN,
                mean_au_clean: f64::NAN,
                mean_eu_tail: 0.2,
                mean_eu_head: 0.01,
            },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&METRICS_HEADER.join(",")));
        assert!(text.contains("1,51.234568,40.000000"));
        let back = read_metrics_csv(buf.as_slice()).unwrap();
        for (a, b) in back.iter().zip(&rows) {
            assert!(a.same_bits(&b.quantized()));
        }
    }

    #[test]
    fn pairs_round_trip() {
        let pairs = vec![(0.5, 0.1), (0.25, 0.012_345_678)];
        let mut buf = Vec::new();
        write_pairs_csv(&mut buf, &pairs).unwrap();
        let back = read_pairs_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![(0.5, 0.1), (0.25, 0.012346)]);
    }

    #[test]
    fn header_mismatch_is_error() {
        assert!(read_pairs_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
