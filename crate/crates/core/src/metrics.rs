//! AUC-ROC, backward / forward transfer and gradient-sign fluctuation.

use serde::{Deserialize, Serialize};

use crate::error::{CctsError, Result};

/// Scores with binary labels (`true` = positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(CctsError::arg(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(CctsError::arg("NaN score"));
        }
        Ok(Self { scores, labels })
    }

    fn class_counts(&self) -> Result<(usize, usize)> {
        let pos = self.labels.iter().filter(|&&l| l).count();
        let neg = self.labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(CctsError::UndefinedMetric(format!(
                "AUC needs both classes ({pos} positive, {neg} negative)"
            )));
        }
        Ok((pos, neg))
    }

    /// Indices sorted by descending score.
    fn descending(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        order
    }
}

/// Mann-Whitney form: `P(s+ > s-) + ½ P(s+ = s-)`, from tie-grouped ranks.
pub fn auc_roc(set: &ScoredSet) -> Result<f64> {
    let (pos, neg) = set.class_counts()?;
    let order = set.descending();
    // Walk score groups from the top, counting positive-over-negative wins.
    let (mut wins, mut negatives_above) = (0.0, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0usize, 0usize);
        while j < order.len() && set.scores[order[j]] == set.scores[order[i]] {
            if set.labels[order[j]] {
                p += 1
            } else {
                n += 1
            }
            j += 1;
        }
        // positives in this group beat every negative below it
        wins += p as f64 * (neg - negatives_above - n) as f64 + 0.5 * (p * n) as f64;
        negatives_above += n;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Trapezoidal area under the empirical ROC curve, one vertex per distinct
/// score threshold.
pub fn auc_trapezoid(set: &ScoredSet) -> Result<f64> {
    let (pos, neg) = set.class_counts()?;
    let order = set.descending();
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = set.scores[order[i]];
        while i < order.len() && set.scores[order[i]] == threshold {
            if set.labels[order[i]] {
                tp += 1
            } else {
                fp += 1
            }
            i += 1;
        }
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

/// AUC for `class_count` classes from per-sample probability rows: the
/// positive-class AUC when binary, the one-vs-rest macro average otherwise
/// (classes absent from the labels are skipped).
pub fn multiclass_auc(probs: &[Vec<f64>], labels: &[usize], class_count: usize) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(CctsError::arg(
            "probability rows and labels differ in length",
        ));
    }
    if class_count == 2 {
        let set = ScoredSet::new(
            probs.iter().map(|p| p[1]).collect(),
            labels.iter().map(|&l| l == 1).collect(),
        )?;
        return auc_roc(&set);
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for class in 0..class_count {
        let set = ScoredSet::new(
            probs.iter().map(|p| p[class]).collect(),
            labels.iter().map(|&l| l == class).collect(),
        )?;
        match auc_roc(&set) {
            Ok(a) => {
                total += a;
                counted += 1;
            }
            Err(CctsError::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if counted == 0 {
        return Err(CctsError::UndefinedMetric(
            "no class has both positives and negatives".into(),
        ));
    }
    Ok(total / counted as f64)
}

fn check_square(r: &[Vec<f64>]) -> Result<usize> {
    let m = r.len();
    if m < 2 {
        return Err(CctsError::arg(format!(
            "transfer metrics need at least 2 tasks, got {m}"
        )));
    }
    if r.iter().any(|row| row.len() != m) {
        return Err(CctsError::arg("accuracy matrix is not square"));
    }
    Ok(m)
}

/// Backward transfer: mean of `R[M-1][i] - R[i][i]` over `i < M-1`
/// (0-based; `R[i][j]` is task `j` after training task `i`).
pub fn bwt(r: &[Vec<f64>]) -> Result<f64> {
    let m = check_square(r)?;
    Ok((0..m - 1).map(|i| r[m - 1][i] - r[i][i]).sum::<f64>() / (m - 1) as f64)
}

/// Forward transfer: mean of `R[i-1][i] - baseline[i]` over `i ≥ 1`.
pub fn fwt(r: &[Vec<f64>], baseline: &[f64]) -> Result<f64> {
    let m = check_square(r)?;
    if baseline.len() != m {
        return Err(CctsError::arg(format!(
            "baseline has {} entries for {m} tasks",
            baseline.len()
        )));
    }
    Ok((1..m).map(|i| r[i - 1][i] - baseline[i]).sum::<f64>() / (m - 1) as f64)
}

/// `(1/(n-1)) √(Σ (d_i - d_{i-1})²)` over gradient signs `d`, with sign(0) = +1.
pub fn gradient_fluctuation(history: &[f64]) -> Result<f64> {
    let n = history.len();
    if n < 2 {
        return Err(CctsError::arg(format!(
            "fluctuation needs at least 2 steps, got {n}"
        )));
    }
    let sign = |g: f64| if g < 0.0 { -1.0 } else { 1.0 };
    let sum_sq: f64 = history
        .windows(2)
        .map(|w| {
            let diff = sign(w[1]) - sign(w[0]);
            diff * diff
        })
        .sum();
    Ok(sum_sq.sqrt() / (n - 1) as f64)
}
