//! Shipped experiment settings and the data-to-report pipeline shared by the
//! command line and the benchmark suites.

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic_drift, make_prefix_tasks, normalize, ArSegment, Dataset, DriftSpec,
    PrefixTaskSequence, Splits, TaskOrder,
};
use crate::error::Result;
use crate::model::{MemoryCombine, ModelConfig};
use crate::rng::substream;
use crate::strategy::{RuConfig, StrategyChoice, StrategyKind};
use crate::trainer::{train_continual, TrainOptions, TrainOutcome};

/// Everything besides the data needed to run one continual experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub stage_count: usize,
    pub order: TaskOrder,
    pub hidden_dim: usize,
    pub mlp_hidden: Vec<usize>,
    pub combine: MemoryCombine,
    pub strategy: StrategyChoice,
    pub options: TrainOptions,
}

impl ExperimentSettings {
    pub fn model_for(&self, dataset: &Dataset) -> ModelConfig {
        ModelConfig {
            input_dim: dataset.feature_count(),
            hidden_dim: self.hidden_dim,
            mlp_hidden: self.mlp_hidden.clone(),
            class_count: dataset.class_count,
            combine: self.combine,
        }
    }

    pub fn with_kind(&self, kind: StrategyKind) -> Self {
        let mut s = self.clone();
        s.strategy.kind = kind;
        s
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.options.seed = seed;
        s
    }
}

/// Normalizes with training statistics and builds the prefix tasks.
pub fn prepare(
    dataset: &Dataset,
    splits: &Splits,
    settings: &ExperimentSettings,
) -> Result<(Dataset, PrefixTaskSequence)> {
    let normalized = normalize(dataset, &splits.train)?;
    let tasks = make_prefix_tasks(&normalized, settings.stage_count, settings.order)?;
    Ok((normalized, tasks))
}

pub fn run_experiment(
    dataset: &Dataset,
    splits: &Splits,
    settings: &ExperimentSettings,
) -> Result<TrainOutcome> {
    let (normalized, tasks) = prepare(dataset, splits, settings)?;
    let model = settings.model_for(&normalized);
    train_continual(
        &normalized,
        splits,
        &tasks,
        &model,
        &settings.strategy,
        &settings.options,
    )
}

/// Draws a synthetic dataset and a shuffled 6:2:2 split from one seed.
pub fn synthetic_with_splits(spec: &DriftSpec, seed: u64) -> Result<(Dataset, Splits)> {
    let dataset = generate_synthetic_drift(spec, seed)?;
    let splits = Splits::shuffled(dataset.len(), &mut substream(seed, "split"))?;
    Ok((dataset, splits))
}

/// Three-stage drift benchmark. Feature 0 carries the class signal, which
/// is weak early, absent in the middle and strong but reversed at the end,
/// so a model fitted to full series misreads short prefixes. Feature 1 is
/// class-independent noise.
pub fn drift_benchmark_spec() -> DriftSpec {
    let seg = |signal: f64| ArSegment {
        mean: vec![signal, 0.0],
        coefficient: 0.0,
        noise: 1.0,
    };
    let (early, late) = (0.5, 3.0);
    DriftSpec {
        class_count: 2,
        series_count: 200,
        length: 30,
        feature_count: 2,
        stage_ends: vec![10, 20, 30],
        segments: vec![
            vec![seg(-early), seg(0.0), seg(late)],
            vec![seg(early), seg(0.0), seg(-late)],
        ],
        gap_min: 0.5,
        gap_max: 3.0,
    }
}

pub fn drift_benchmark_settings() -> ExperimentSettings {
    ExperimentSettings {
        stage_count: 3,
        order: TaskOrder::Time,
        hidden_dim: 8,
        mlp_hidden: vec![],
        combine: MemoryCombine::Add,
        strategy: StrategyChoice::new(
            StrategyKind::Ru,
            RuConfig {
                lambda: 30.0,
                schedule_exponent: 0.5,
                radius: Some(6.0),
                learning_rate: 1.0,
                ..RuConfig::default()
            },
        ),
        options: TrainOptions {
            epochs: 10,
            batch_size: 16,
            ..TrainOptions::default()
        },
    }
}

pub const DRIFT_BENCHMARK_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// Settings for the UCR Earthquakes direction check (univariate, 512 steps,
/// five folds).
pub fn ucr_earthquakes_settings() -> ExperimentSettings {
    let mut s = drift_benchmark_settings();
    s.stage_count = 4;
    s.hidden_dim = 16;
    s.options.epochs = 5;
    s.options.batch_size = 32;
    s
}

pub const UCR_FOLDS: usize = 5;
