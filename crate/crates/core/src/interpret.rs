//! Importance-coefficient analysis: aggregation over inputs, gates and
//! neurons, stage segmentation of the importance trail, and stage time
//! consistency.

use serde::{Deserialize, Serialize};

use crate::data::PrefixTaskSequence;
use crate::error::{CctsError, Result};
use crate::model::{Gate, ParamLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSnapshot {
    /// Schedule position of the task after which it was taken.
    pub task: usize,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceTrail {
    pub snapshots: Vec<ImportanceSnapshot>,
}

impl ImportanceTrail {
    pub fn push(&mut self, task: usize, alpha: Vec<f64>) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if task <= last.task {
                return Err(CctsError::arg(format!(
                    "snapshot for task {task} after task {}",
                    last.task
                )));
            }
            if alpha.len() != last.alpha.len() {
                return Err(CctsError::arg("snapshot length differs from the trail"));
            }
        }
        self.snapshots.push(ImportanceSnapshot { task, alpha });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Same trail with every snapshot passed through `f`.
    pub fn map(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let snapshots = self
            .snapshots
            .iter()
            .map(|s| {
                Ok(ImportanceSnapshot {
                    task: s.task,
                    alpha: f(&s.alpha)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { snapshots })
    }
}

fn check_len(alpha: &[f64], layout: &ParamLayout) -> Result<()> {
    if alpha.len() != layout.len() {
        return Err(CctsError::arg(format!(
            "{} importance values for {} parameters",
            alpha.len(),
            layout.len()
        )));
    }
    Ok(())
}

fn sum_at(alpha: &[f64], indices: &[usize]) -> f64 {
    indices.iter().map(|&i| alpha[i]).sum()
}

/// Per input feature: summed importance of every input weight reading it.
pub fn input_importance(alpha: &[f64], layout: &ParamLayout) -> Result<Vec<f64>> {
    check_len(alpha, layout)?;
    (0..layout.input_dim)
        .map(|j| Ok(sum_at(alpha, &layout.feature_indices(j)?)))
        .collect()
}

/// Per gate (including the memory decomposition): summed importance of its parameters.
pub fn gate_importance(alpha: &[f64], layout: &ParamLayout) -> Result<Vec<(Gate, f64)>> {
    check_len(alpha, layout)?;
    Ok(Gate::ALL
        .iter()
        .map(|&g| (g, sum_at(alpha, &layout.gate_indices(g))))
        .collect())
}

/// Per neuron layer (T-LSTM hidden units, then each MLP hidden layer): summed
/// importance of each neuron's outgoing weights.
pub fn neuron_importance(alpha: &[f64], layout: &ParamLayout) -> Result<Vec<Vec<f64>>> {
    check_len(alpha, layout)?;
    (0..layout.neuron_layers())
        .map(|layer| {
            (0..layout.head_widths[layer])
                .map(|n| Ok(sum_at(alpha, &layout.neuron_indices(layer, n)?)))
                .collect()
        })
        .collect()
}

/// Indices ordered by decreasing value; ties keep index order.
pub fn ranking(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSegmentation {
    /// Trail position where each stage starts; the first is 0.
    pub starts: Vec<usize>,
    /// Task index (schedule position) where each stage starts.
    pub start_tasks: Vec<usize>,
    /// Mean normalized importance vector of each stage.
    pub centroids: Vec<Vec<f64>>,
    /// Optimal total cost for 1, 2, ... segments.
    pub cost_by_count: Vec<f64>,
}

impl StageSegmentation {
    pub fn stage_count(&self) -> usize {
        self.starts.len()
    }

    /// Stage containing trail position `position`.
    pub fn stage_of(&self, position: usize) -> usize {
        self.starts.partition_point(|&s| s <= position) - 1
    }
}

/// Fraction of `cost(1)` below which adding a segment no longer counts as an
/// improvement.
pub const ELBOW_FRACTION: f64 = 0.1;

pub(crate) fn unit_vectors(trail: &ImportanceTrail) -> Vec<Vec<f64>> {
    trail
        .snapshots
        .iter()
        .map(|s| {
            let n = s.alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n == 0.0 {
                s.alpha.clone()
            } else {
                s.alpha.iter().map(|a| a / n).collect()
            }
        })
        .collect()
}

/// Within-segment scatter `Σ ‖u_i - ū‖²` of unit vectors `units[start..end]`.
pub fn segment_cost(units: &[Vec<f64>], start: usize, end: usize) -> f64 {
    let n = (end - start) as f64;
    let dim = units[start].len();
    let mut mean = vec![0.0; dim];
    for u in &units[start..end] {
        mean.iter_mut().zip(u).for_each(|(m, v)| *m += v / n);
    }
    units[start..end]
        .iter()
        .map(|u| {
            u.iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

/// Picks the segment count from optimal costs: the first count whose next
/// split gains less than `fraction · cost(1)`.
pub fn elbow(costs: &[f64], fraction: f64) -> usize {
    let base = costs[0];
    if base <= 1e-12 {
        return 1;
    }
    (0..costs.len() - 1)
        .find(|&k| costs[k] - costs[k + 1] <= fraction * base)
        .map_or(costs.len(), |k| k + 1)
}

pub fn stage_detect(trail: &ImportanceTrail, max_stages: usize) -> Result<StageSegmentation> {
    stage_detect_with(trail, max_stages, ELBOW_FRACTION)
}

/// Optimal contiguous segmentation of the L2-normalized trail by dynamic
/// programming for every segment count up to `max_stages`, then the elbow
/// rule. Ties prefer earlier boundaries.
pub fn stage_detect_with(
    trail: &ImportanceTrail,
    max_stages: usize,
    fraction: f64,
) -> Result<StageSegmentation> {
    let t = trail.len();
    if t < 2 {
        return Err(CctsError::arg(format!(
            "stage detection needs at least 2 snapshots, got {t}"
        )));
    }
    if max_stages == 0 {
        return Err(CctsError::arg("max_stages must be at least 1"));
    }
    let units = unit_vectors(trail);
    let k_max = max_stages.min(t);
    let mut seg = vec![vec![0.0; t + 1]; t + 1];
    for (i, row) in seg.iter_mut().enumerate().take(t) {
        for (j, cell) in row.iter_mut().enumerate().skip(i + 1) {
            *cell = segment_cost(&units, i, j);
        }
    }
    // best[k][j]: optimal cost of the first j snapshots in k+1 segments
    let mut best = vec![vec![f64::INFINITY; t + 1]; k_max];
    let mut back = vec![vec![0usize; t + 1]; k_max];
    for j in 1..=t {
        best[0][j] = seg[0][j];
    }
    for k in 1..k_max {
        for j in k + 1..=t {
            for i in k..j {
                let c = best[k - 1][i] + seg[i][j];
                if c < best[k][j] {
                    best[k][j] = c;
                    back[k][j] = i;
                }
            }
        }
    }
    let cost_by_count: Vec<f64> = (0..k_max).map(|k| best[k][t]).collect();
    let chosen = elbow(&cost_by_count, fraction);

    let mut starts = vec![0usize; chosen];
    let mut end = t;
    for k in (1..chosen).rev() {
        let start = back[k][end];
        starts[k] = start;
        end = start;
    }
    let ends: Vec<usize> = starts.iter().skip(1).copied().chain([t]).collect();
    let centroids = starts
        .iter()
        .zip(&ends)
        .map(|(&s, &e)| {
            let mut c = vec![0.0; units[0].len()];
            for u in &units[s..e] {
                c.iter_mut()
                    .zip(u)
                    .for_each(|(a, v)| *a += v / (e - s) as f64);
            }
            c
        })
        .collect();
    Ok(StageSegmentation {
        start_tasks: starts.iter().map(|&s| trail.snapshots[s].task).collect(),
        starts,
        centroids,
        cost_by_count,
    })
}

/// Stage of every prefix length `1..=record_len` of one series: the prefix
/// belongs to the first task whose prefix covers it, and that task's
/// schedule position maps to a detected stage.
pub fn prefix_stage_assignments(
    segmentation: &StageSegmentation,
    tasks: &PrefixTaskSequence,
    record_len: usize,
) -> Vec<usize> {
    let k = tasks.stage_count;
    (1..=record_len)
        .map(|len| {
            let stage = (1..=k)
                .find(|&s| crate::data::tasks::proportional_length(s, k, record_len) >= len)
                .unwrap_or(k)
                - 1;
            let position = tasks
                .schedule
                .iter()
                .position(|&s| s == stage)
                .unwrap_or(stage);
            segmentation.stage_of(position)
        })
        .collect()
}

/// Percentage of samples whose stage sequence never decreases over time.
pub fn time_consistency(assignments: &[Vec<usize>]) -> Result<f64> {
    if assignments.is_empty() {
        return Err(CctsError::arg("time consistency of an empty cohort"));
    }
    if let Some(i) = assignments.iter().position(|a| a.len() < 2) {
        return Err(CctsError::arg(format!(
            "sample {i} has fewer than 2 stage assignments"
        )));
    }
    let monotone = assignments
        .iter()
        .filter(|a| a.windows(2).all(|w| w[0] <= w[1]))
        .count();
    Ok(100.0 * monotone as f64 / assignments.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn layout(d: usize, h: usize, mlp: Vec<usize>) -> ParamLayout {
        ParamLayout::new(&ModelConfig {
            input_dim: d,
            hidden_dim: h,
            mlp_hidden: mlp,
            class_count: 2,
            combine: Default::default(),
        })
    }

    fn trail(vectors: &[Vec<f64>]) -> ImportanceTrail {
        let mut t = ImportanceTrail::default();
        for (i, v) in vectors.iter().enumerate() {
            t.push(i, v.clone()).unwrap();
        }
        t
    }

    #[test]
    fn aggregation_counts_with_unit_alpha() {
        let (d, h) = (3, 4);
        let l = layout(d, h, vec![5]);
        let ones = vec![1.0; l.len()];
        assert_eq!(
            input_importance(&ones, &l).unwrap(),
            vec![(4 * h) as f64; d]
        );
        let gates = gate_importance(&ones, &l).unwrap();
        assert_eq!(gates[0], (Gate::Forget, (h * d + h * h + h) as f64));
        assert_eq!(gates[4], (Gate::Decomposition, (h * h + h) as f64));
        let neurons = neuron_importance(&ones, &l).unwrap();
        assert_eq!(neurons, vec![vec![5.0; 4], vec![2.0; 5]]);
        let zeros = vec![0.0; l.len()];
        assert!(input_importance(&zeros, &l)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(gate_importance(&zeros, &l)
            .unwrap()
            .iter()
            .all(|&(_, v)| v == 0.0));
        assert!(input_importance(&ones[1..], &l).is_err());
    }

    /// d = 2, H = 2: feature 1 reads column 1 of each 2×2 gate input matrix.
    #[test]
    fn hand_built_feature_sums() {
        let l = layout(2, 2, vec![]);
        let alpha: Vec<f64> = (0..l.len()).map(|i| i as f64).collect();
        let mut expected = 0.0;
        for gate in Gate::RECURRENT {
            let slot = l.slot(crate::model::SlotKind::GateInput { gate }).unwrap();
            expected += alpha[slot.offset + 1] + alpha[slot.offset + 3];
        }
        assert_eq!(input_importance(&alpha, &l).unwrap()[1], expected);
    }

    #[test]
    fn constant_trail_is_one_stage() {
        let seg = stage_detect(&trail(&vec![vec![1.0, 2.0, 3.0]; 6]), 4).unwrap();
        assert_eq!(seg.starts, vec![0]);
    }

    #[test]
    fn orthogonal_blocks_split_at_the_boundary() {
        let mut v = vec![vec![1.0, 0.0]; 3];
        v.extend(vec![vec![0.0, 5.0]; 4]);
        let seg = stage_detect(&trail(&v), 4).unwrap();
        assert_eq!(seg.starts, vec![0, 3]);
        assert_eq!(seg.stage_of(2), 0);
        assert_eq!(seg.stage_of(3), 1);
        assert!(stage_detect(&trail(&v[..1]), 3).is_err());
    }

    #[test]
    fn time_consistency_cases() {
        assert_eq!(
            time_consistency(&[vec![0, 0, 1], vec![0, 1, 2]]).unwrap(),
            100.0
        );
        assert_eq!(time_consistency(&[vec![0, 1], vec![1, 0]]).unwrap(), 50.0);
        assert!(time_consistency(&[]).is_err());
        assert!(time_consistency(&[vec![0]]).is_err());
    }

    #[test]
    fn ranking_is_stable() {
        assert_eq!(ranking(&[1.0, 3.0, 3.0, 0.5]), vec![1, 2, 0, 3]);
    }
}
