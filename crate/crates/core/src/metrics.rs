//! Confusion matrices and the rates derived from them.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) || class_names.len() != k {
            return Err(Error::Shape(format!("confusion matrix must be {k}×{k} with {k} names")));
        }
        Ok(ConfusionMatrix { counts, class_names })
    }

    /// Unnamed classes get names `0..k`.
    pub fn unnamed(counts: Vec<Vec<u64>>) -> Result<Self> {
        let names = (0..counts.len()).map(|i| i.to_string()).collect();
        ConfusionMatrix::from_counts(counts, names)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_total(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|c| self.counts[c][c]).sum()
    }
}

pub fn confusion(predictions: &[usize], truths: &[usize], class_names: &[&str]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    let k = class_names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= k || t >= k {
            return Err(Error::Range(format!("label {} out of range for {k} classes", p.max(t))));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts, class_names.iter().map(|s| s.to_string()).collect())
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRates {
    pub true_count: u64,
    pub recall: f64,
    /// Share of this class's samples assigned to some other class.
    pub within_class_fp: f64,
    /// Samples of other classes predicted as this one, over all samples
    /// of other classes. `None` when every sample belongs to this class.
    pub conventional_fpr: Option<f64>,
}

pub fn per_class_rates(cm: &ConfusionMatrix) -> Result<Vec<ClassRates>> {
    let total = cm.total();
    (0..cm.num_classes())
        .map(|c| {
            let row = cm.row_total(c);
            if row == 0 {
                return Err(Error::UndefinedRate(format!(
                    "class '{}' has no true samples",
                    cm.class_names[c]
                )));
            }
            let recall = cm.counts[c][c] as f64 / row as f64;
            let negatives = total - row;
            let false_alarms = cm.col_total(c) - cm.counts[c][c];
            Ok(ClassRates {
                true_count: row,
                recall,
                within_class_fp: 1.0 - recall,
                conventional_fpr: (negatives > 0).then(|| false_alarms as f64 / negatives as f64),
            })
        })
        .collect()
}

/// Overall accuracy from class shares and within-class misclassification
/// shares: `1 − Σ share·fp`.
pub fn accuracy_from_shares(shares: &[f64], within_class_fp: &[f64]) -> Result<f64> {
    if shares.len() != within_class_fp.len() || shares.is_empty() {
        return Err(Error::Shape("shares and rates must be equal-length and non-empty".into()));
    }
    Ok(1.0 - shares.iter().zip(within_class_fp).map(|(s, f)| s * f).sum::<f64>())
}

/// Sums rows and columns by group. `groups` must partition the classes;
/// each merged class is named by joining its members with `+`.
pub fn merge_classes(cm: &ConfusionMatrix, groups: &[Vec<usize>]) -> Result<ConfusionMatrix> {
    let k = cm.num_classes();
    let mut owner = vec![None; k];
    for (g, members) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Domain(format!("group {g} is empty")));
        }
        for &c in members {
            if c >= k || owner[c].is_some() {
                return Err(Error::Domain(format!("class {c} is out of range or in two groups")));
            }
            owner[c] = Some(g);
        }
    }
    if owner.iter().any(Option::is_none) {
        return Err(Error::Domain("groups do not cover every class".into()));
    }
    let mut counts = vec![vec![0u64; groups.len()]; groups.len()];
    for t in 0..k {
        for p in 0..k {
            counts[owner[t].unwrap()][owner[p].unwrap()] += cm.counts[t][p];
        }
    }
    let names = groups
        .iter()
        .map(|m| m.iter().map(|&c| cm.class_names[c].as_str()).collect::<Vec<_>>().join("+"))
        .collect();
    ConfusionMatrix::from_counts(counts, names)
}

/// `(median, q25, q75)` by linear interpolation at rank `(n−1)·p`.
pub fn box_stats(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("box statistics of an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let rank = (sorted.len() - 1) as f64 * p;
        let lo = rank.floor() as usize;
        let hi = rank.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
    };
    Ok((q(0.5), q(0.25), q(0.75)))
}

/// `class,true_count,recall,within_class_fp,conventional_fpr` per class,
/// then `overall,<total>,<accuracy>,,`. Classes without samples leave
/// their rates blank.
pub fn metrics_csv(cm: &ConfusionMatrix) -> Result<String> {
    let mut out = String::from("class,true_count,recall,within_class_fp,conventional_fpr\n");
    let total = cm.total();
    for c in 0..cm.num_classes() {
        let row = cm.row_total(c);
        let _ = write!(out, "{},{row},", cm.class_names[c]);
        if row == 0 {
            out.push_str(",,\n");
            continue;
        }
        let recall = cm.counts[c][c] as f64 / row as f64;
        let negatives = total - row;
        let fpr = if negatives > 0 {
            format!("{:.6}", (cm.col_total(c) - cm.counts[c][c]) as f64 / negatives as f64)
        } else {
            String::new()
        };
        let _ = writeln!(out, "{recall:.6},{:.6},{fpr}", 1.0 - recall);
    }
    let _ = writeln!(out, "overall,{total},{:.6},,", accuracy(cm)?);
    Ok(out)
}

/// Comma-separated grid with true classes as rows.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("true\\predicted");
    for name in &cm.class_names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (name, row) in cm.class_names.iter().zip(&cm.counts) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
