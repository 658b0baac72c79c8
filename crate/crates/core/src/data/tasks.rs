//! The prefix-task view of a dataset: task `k` of `K` holds, for every
//! series of length `M_n`, its prefix of length `ceil(k * M_n / K)`.

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{CctsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrder {
    #[default]
    Time,
    Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixTaskSequence {
    pub stage_count: usize,
    pub order: TaskOrder,
    /// Training order as 0-based stage indices.
    pub schedule: Vec<usize>,
    /// `lengths[stage][record]`: prefix length of each record in that stage.
    pub lengths: Vec<Vec<usize>>,
}

impl PrefixTaskSequence {
    pub fn len(&self) -> usize {
        self.schedule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedule.is_empty()
    }

    /// Stage trained at position `pos`.
    pub fn stage_at(&self, pos: usize) -> usize {
        self.schedule[pos]
    }

    /// Prefix length of `record` for the task trained at position `pos`.
    pub fn prefix_len(&self, pos: usize, record: usize) -> usize {
        self.lengths[self.schedule[pos]][record]
    }

    /// Fraction of the full series each stage covers, in stage order.
    pub fn stage_fractions(&self) -> Vec<f64> {
        (1..=self.stage_count)
            .map(|k| k as f64 / self.stage_count as f64)
            .collect()
    }
}

pub fn proportional_length(stage: usize, stage_count: usize, len: usize) -> usize {
    (stage * len).div_ceil(stage_count)
}

pub fn make_prefix_tasks(
    dataset: &Dataset,
    stage_count: usize,
    order: TaskOrder,
) -> Result<PrefixTaskSequence> {
    if stage_count < 2 {
        return Err(CctsError::arg(format!(
            "stage_count must be at least 2, got {stage_count}"
        )));
    }
    if dataset.is_empty() {
        return Err(CctsError::arg("cannot build tasks from an empty dataset"));
    }
    let shortest = dataset.min_length();
    if stage_count > shortest {
        return Err(CctsError::arg(format!(
            "stage_count {stage_count} exceeds the shortest series length {shortest}"
        )));
    }
    let lengths: Vec<Vec<usize>> = (1..=stage_count)
        .map(|k| {
            dataset
                .records
                .iter()
                .map(|r| proportional_length(k, stage_count, r.len()))
                .collect()
        })
        .collect();
    let schedule = match order {
        TaskOrder::Time => (0..stage_count).collect(),
        TaskOrder::Similarity => similarity_schedule(&stage_gaussians(dataset, &lengths)),
    };
    Ok(PrefixTaskSequence {
        stage_count,
        order,
        schedule,
        lengths,
    })
}

/// Pooled mean / std of all feature values observed inside each stage's
/// increment (the observations it adds over the previous stage).
fn stage_gaussians(dataset: &Dataset, lengths: &[Vec<usize>]) -> Vec<(f64, f64)> {
    (0..lengths.len())
        .map(|k| {
            let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
            for (r, record) in dataset.records.iter().enumerate() {
                let start = if k == 0 { 0 } else { lengths[k - 1][r] };
                for row in start..lengths[k][r] {
                    for &v in record.values.row(row) {
                        n += 1;
                        sum += v;
                        sq += v * v;
                    }
                }
            }
            let mean = sum / n.max(1) as f64;
            let var = (sq / n.max(1) as f64 - mean * mean).max(0.0);
            (mean, var.sqrt().max(1e-9))
        })
        .collect()
}

/// Greedy curriculum: start at the earliest stage, then repeatedly move to the
/// unvisited stage most similar to the current one. Ties go to the earlier stage.
fn similarity_schedule(stats: &[(f64, f64)]) -> Vec<usize> {
    let mut schedule = vec![0];
    let mut visited = vec![false; stats.len()];
    visited[0] = true;
    while schedule.len() < stats.len() {
        let cur = *schedule.last().expect("non-empty");
        let mut best: Option<(usize, f64)> = None;
        for k in (0..stats.len()).filter(|&k| !visited[k]) {
            let s =
                task_similarity(stats[cur].0, stats[cur].1, stats[k].0, stats[k].1).unwrap_or(0.0);
            if best.is_none_or(|(_, b)| s > b + 1e-12) {
                best = Some((k, s));
            }
        }
        let (next, _) = best.expect("unvisited stage remains");
        visited[next] = true;
        schedule.push(next);
    }
    schedule
}

/// Similarity of two Gaussian task summaries, in `[0, 1]`.
pub fn task_similarity(mu_i: f64, sigma_i: f64, mu_j: f64, sigma_j: f64) -> Result<f64> {
    if !(sigma_i > 0.0) || !(sigma_j > 0.0) {
        return Err(CctsError::arg(format!(
            "sigmas must be positive, got {sigma_i} and {sigma_j}"
        )));
    }
    let var_sum = sigma_i * sigma_i + sigma_j * sigma_j;
    let diff = mu_i - mu_j;
    let coefficient = (2.0 * sigma_i * sigma_j / var_sum) * (-diff * diff / (4.0 * var_sum)).exp();
    // coefficient <= 1 by AM-GM; clamp rounding so the radicand stays >= 0
    let inner = (1.0 - coefficient.sqrt()).max(0.0);
    Ok((1.0 - inner.sqrt()).clamp(0.0, 1.0))
}
