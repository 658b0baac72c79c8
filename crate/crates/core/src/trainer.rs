//! The continual training loop over prefix tasks, the accuracy matrix and
//! the per-run report.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PrefixTaskSequence, Sample, Splits};
use crate::error::{CctsError, Result};
use crate::interpret::ImportanceTrail;
use crate::metrics::{bwt, fwt, gradient_fluctuation, multiclass_auc};
use crate::model::{Checkpoint, ModelConfig, Network};
use crate::rng::substream;
use crate::strategy::{
    network_fisher, ru_step, RuState, StepDiagnostics, StrategyChoice, TaskAnchor,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Allows `epochs = 0`: nothing is trained, everything is evaluated.
    pub dry_run: bool,
    /// Also snapshot importance after every epoch, not only after each task.
    pub epoch_snapshots: bool,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            dry_run: false,
            epoch_snapshots: false,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 && !self.dry_run {
            return Err(CctsError::arg(
                "epochs must be at least 1 outside dry-run mode",
            ));
        }
        if self.batch_size == 0 {
            return Err(CctsError::arg("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// One optimizer step as written to the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub task: usize,
    pub epoch: usize,
    pub batch: usize,
    #[serde(flatten)]
    pub step: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    /// Schedule position.
    pub task: usize,
    /// 0-based stage index of the prefix task trained here.
    pub stage: usize,
    pub train_samples: usize,
    pub epoch_loss: Vec<f64>,
    /// Mean update gradient per optimizer step.
    pub gradient_means: Vec<f64>,
    pub fluctuation: Option<f64>,
    /// Average training loss over tasks seen so far under the current model
    /// minus the same average before this task (positive means degradation).
    pub non_degradation: Option<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub model: ModelConfig,
    pub strategy: StrategyChoice,
    pub options: TrainOptions,
    pub stage_count: usize,
    pub schedule: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: RunEcho,
    /// `accuracy[i][j]`: AUC after training position `i` on the test prefixes
    /// of the task at position `j`.
    pub accuracy: Vec<Vec<f64>>,
    /// AUC of the initial model on each task.
    pub baseline: Vec<f64>,
    pub bwt: f64,
    pub fwt: f64,
    /// Mean of the last accuracy row.
    pub final_auc: f64,
    /// Final-model AUC per stage in time order.
    pub per_time_auc: Vec<f64>,
    /// Final-model mean AUC over every task's validation prefixes.
    pub validation_auc: Option<f64>,
    pub tasks: Vec<TaskLog>,
    pub fluctuation: Option<f64>,
    /// Sum of minibatch losses over every step.
    pub cumulative_loss: f64,
    pub steps: usize,
    pub importance: ImportanceTrail,
    pub wall_clock_seconds: f64,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// One per training position.
    pub checkpoints: Vec<Checkpoint>,
    pub trace: Vec<TraceRecord>,
}

fn samples<'a>(
    dataset: &'a Dataset,
    indices: &[usize],
    tasks: &PrefixTaskSequence,
    pos: usize,
) -> Vec<Sample<'a>> {
    indices
        .iter()
        .map(|&i| dataset.records[i].prefix(tasks.prefix_len(pos, i)))
        .collect()
}

/// AUC of `network` on the prefixes of task `pos` for the given records.
pub fn task_auc(
    network: &Network,
    dataset: &Dataset,
    indices: &[usize],
    tasks: &PrefixTaskSequence,
    pos: usize,
) -> Result<f64> {
    let batch = samples(dataset, indices, tasks, pos);
    let probs: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|s| network.predict_proba(s))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    multiclass_auc(&probs, &labels, dataset.class_count)
}

fn accuracy_row(
    network: &Network,
    dataset: &Dataset,
    indices: &[usize],
    tasks: &PrefixTaskSequence,
) -> Result<Vec<f64>> {
    (0..tasks.len())
        .map(|j| task_auc(network, dataset, indices, tasks, j))
        .collect()
}

/// Rebuilds the accuracy matrix from one checkpoint per training position.
pub fn evaluate_matrix(
    checkpoints: &[Checkpoint],
    tasks: &PrefixTaskSequence,
    dataset: &Dataset,
    test: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let ordered: Vec<&Checkpoint> = (0..tasks.len())
        .map(|i| {
            checkpoints
                .iter()
                .find(|c| c.task_position == Some(i))
                .ok_or(CctsError::MissingCheckpoint(i))
        })
        .collect::<Result<_>>()?;
    ordered
        .par_iter()
        .map(|c| accuracy_row(&c.network()?, dataset, test, tasks))
        .collect()
}

fn check_splits(dataset: &Dataset, splits: &Splits) -> Result<()> {
    let mut seen = vec![false; dataset.len()];
    for &i in splits
        .train
        .iter()
        .chain(&splits.test)
        .chain(&splits.validation)
    {
        if i >= dataset.len() {
            return Err(CctsError::arg(format!("split index {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(CctsError::arg(format!(
                "record {i} appears in more than one split"
            )));
        }
    }
    if splits.test.is_empty() {
        return Err(CctsError::arg("test split is empty"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Trains one model through every prefix task in schedule order.
pub fn train_continual(
    dataset: &Dataset,
    splits: &Splits,
    tasks: &PrefixTaskSequence,
    model: &ModelConfig,
    strategy: &StrategyChoice,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    options.validate()?;
    model.validate()?;
    let config = strategy.resolved();
    config.validate()?;
    check_splits(dataset, splits)?;
    if model.input_dim != dataset.feature_count() || model.class_count != dataset.class_count {
        return Err(CctsError::arg(format!(
            "model expects {} features and {} classes, dataset has {} and {}",
            model.input_dim,
            model.class_count,
            dataset.feature_count(),
            dataset.class_count
        )));
    }

    let mut network = Network::init(model, &mut substream(options.seed, "init"))?;
    let mut batch_rng = substream(options.seed, "batches");
    let mut fisher_rng = substream(options.seed, "fisher");
    let mut state = RuState::new(&network, &config);

    let baseline = accuracy_row(&network, dataset, &splits.test, tasks)?;
    let mut accuracy = Vec::with_capacity(tasks.len());
    let mut checkpoints = Vec::with_capacity(tasks.len());
    let mut trace = Vec::new();
    let mut logs = Vec::with_capacity(tasks.len());
    let mut importance = ImportanceTrail::default();
    let mut cumulative_loss = 0.0;
    let mut all_gradient_means = Vec::new();
    let mut previous_average: Option<f64> = None;
    let mut snapshot_index = 0usize;

    for pos in 0..tasks.len() {
        let train = samples(dataset, &splits.train, tasks, pos);
        let mut log = TaskLog {
            task: pos,
            stage: tasks.stage_at(pos),
            train_samples: train.len(),
            epoch_loss: Vec::new(),
            gradient_means: Vec::new(),
            fluctuation: None,
            non_degradation: None,
            warning: None,
        };
        if train.is_empty() {
            let msg = format!("task {pos} has no training samples; skipped");
            log::warn!("{msg}");
            log.warning = Some(msg);
        } else {
            let mut order: Vec<usize> = (0..train.len()).collect();
            for epoch in 0..options.epochs {
                order.shuffle(&mut batch_rng);
                let mut losses = Vec::new();
                for (b, chunk) in order.chunks(options.batch_size).enumerate() {
                    let batch: Vec<Sample<'_>> = chunk.iter().map(|&i| train[i]).collect();
                    let before = network.to_flat();
                    let diag =
                        ru_step(&mut network, &batch, &mut state, &config).map_err(
                            |e| match e {
                                CctsError::Numeric { .. } => CctsError::Diverged {
                                    task: pos,
                                    epoch,
                                    reason: e.to_string(),
                                    last_finite: before.clone(),
                                },
                                other => other,
                            },
                        )?;
                    cumulative_loss += diag.loss;
                    losses.push(diag.loss);
                    log.gradient_means.push(diag.gradient_mean);
                    trace.push(TraceRecord {
                        schema_version: TRACE_SCHEMA_VERSION,
                        task: pos,
                        epoch,
                        batch: b,
                        step: diag,
                    });
                }
                log.epoch_loss.push(mean(&losses));
                if options.epoch_snapshots && epoch + 1 < options.epochs {
                    let fisher = fisher_on(
                        &network,
                        &train,
                        config.fisher_samples,
                        &mut fisher_rng,
                        pos,
                    )?;
                    importance.push(snapshot_index, fisher.values)?;
                    snapshot_index += 1;
                }
            }
        }
        log.fluctuation = gradient_fluctuation(&log.gradient_means).ok();
        all_gradient_means.extend_from_slice(&log.gradient_means);

        if !train.is_empty() {
            let fisher = fisher_on(
                &network,
                &train,
                config.fisher_samples,
                &mut fisher_rng,
                pos,
            )?;
            importance.push(snapshot_index, fisher.values.clone())?;
            snapshot_index += 1;
            if config.limitation {
                state.anchors.push(TaskAnchor {
                    fisher,
                    params: network.to_flat(),
                });
            }
            if config.projection {
                let take = config.gem_snapshot.min(train.len());
                let (_, g) = network.loss_and_grad(&train[..take])?;
                state.memory.record(pos, g)?;
            }
        }

        if !splits.train.is_empty() {
            let seen: Vec<f64> = (0..=pos)
                .map(|i| network.loss(&samples(dataset, &splits.train, tasks, i)))
                .collect::<Result<_>>()?;
            let average = mean(&seen);
            log.non_degradation = previous_average.map(|p| average - p);
            previous_average = Some(average);
        }

        checkpoints.push(Checkpoint::new(&network, Some(pos)));
        accuracy.push(accuracy_row(&network, dataset, &splits.test, tasks)?);
        logs.push(log);
    }

    let last = accuracy.last().cloned().unwrap_or_default();
    let mut per_time_auc = vec![0.0; tasks.stage_count];
    for (pos, &stage) in tasks.schedule.iter().enumerate() {
        per_time_auc[stage] = last[pos];
    }
    let validation_auc = if splits.validation.is_empty() {
        None
    } else {
        Some(mean(&accuracy_row(
            &network,
            dataset,
            &splits.validation,
            tasks,
        )?))
    };

    let report = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: options.seed,
        config: RunEcho {
            model: model.clone(),
            strategy: strategy.clone(),
            options: options.clone(),
            stage_count: tasks.stage_count,
            schedule: tasks.schedule.clone(),
        },
        bwt: bwt(&accuracy)?,
        fwt: fwt(&accuracy, &baseline)?,
        final_auc: mean(&last),
        per_time_auc,
        validation_auc,
        accuracy,
        baseline,
        tasks: logs,
        fluctuation: gradient_fluctuation(&all_gradient_means).ok(),
        cumulative_loss,
        steps: state.estimator.step,
        importance,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        checkpoints,
        trace,
    })
}

fn fisher_on(
    network: &Network,
    train: &[Sample<'_>],
    budget: usize,
    rng: &mut crate::rng::Rng,
    task: usize,
) -> Result<crate::strategy::FisherDiag> {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(rng);
    idx.truncate(budget.min(train.len()));
    idx.sort_unstable();
    let chosen: Vec<Sample<'_>> = idx.iter().map(|&i| train[i]).collect();
    network_fisher(network, &chosen, task)
}
