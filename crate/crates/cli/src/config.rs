//! The experiment config file (TOML) and its validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ccts_core::data::{load_csv, load_ucr_tsv, CsvSchema, Dataset, DriftSpec, Splits, TaskOrder};
use ccts_core::model::MemoryCombine;
use ccts_core::presets::{synthetic_with_splits, ExperimentSettings};
use ccts_core::rng::substream;
use ccts_core::strategy::{RuConfig, StrategyChoice, StrategyKind};
use ccts_core::trainer::TrainOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitConfig,
    pub tasks: TaskConfig,
    pub model: ModelSection,
    #[serde(default)]
    pub strategy: StrategyChoice,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub interpret: InterpretSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Regenerated for every seed from that seed.
    Synthetic(DriftSpec),
    Csv(CsvSource),
    Ucr(UcrSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default = "default_id")]
    pub id_column: String,
    #[serde(default = "default_time")]
    pub time_column: String,
    #[serde(default = "default_label")]
    pub label_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
    #[serde(default = "yes")]
    pub impute: bool,
}

fn default_id() -> String {
    "series_id".into()
}
fn default_time() -> String {
    "time".into()
}
fn default_label() -> String {
    "label".into()
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcrSource {
    /// Files are concatenated in order (e.g. TRAIN then TEST).
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitConfig {
    /// Shuffled 6:2:2 train/test/validation.
    #[default]
    Shuffled,
    CrossValidation {
        folds: usize,
        fold: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub stage_count: usize,
    #[serde(default)]
    pub order: TaskOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    #[serde(default)]
    pub mlp_hidden: Vec<usize>,
    #[serde(default)]
    pub combine: MemoryCombine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub dry_run: bool,
    pub epoch_snapshots: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let o = TrainOptions::default();
        Self {
            epochs: o.epochs,
            batch_size: o.batch_size,
            dry_run: o.dry_run,
            epoch_snapshots: o.epoch_snapshots,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretSection {
    pub max_stages: usize,
}

impl Default for InterpretSection {
    fn default() -> Self {
        Self { max_stages: 4 }
    }
}

impl ExperimentConfig {
    /// Reads and validates a config; relative data paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config =
            Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config
            .validate()
            .with_context(|| format!("invalid config {}", path.display()))?;
        config.absolutize()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "strategy" {
                if let Some(inner) = strategy_field_error(text) {
                    return inner;
                }
            }
            anyhow::anyhow!("at `{path}`: {}", e.into_inner())
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Csv(c) => fix(&mut c.path),
            DataSource::Ucr(u) => u.paths.iter_mut().for_each(fix),
            DataSource::Synthetic(_) => {}
        }
        if let Some(out) = &mut self.out {
            fix(out);
        }
    }

    /// Makes data paths absolute so the config echo works from anywhere.
    fn absolutize(&mut self) -> Result<()> {
        let abs = |p: &mut PathBuf| -> Result<()> {
            *p =
                std::fs::canonicalize(&*p).with_context(|| format!("resolving {}", p.display()))?;
            Ok(())
        };
        match &mut self.data {
            DataSource::Csv(c) => abs(&mut c.path),
            DataSource::Ucr(u) => u.paths.iter_mut().try_for_each(abs),
            DataSource::Synthetic(_) => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at `seeds`: at least one seed is required");
        }
        match &self.data {
            DataSource::Synthetic(spec) => spec.validate().context("at `data`")?,
            DataSource::Csv(c) => {
                if !c.path.is_file() {
                    bail!("at `data.path`: {} does not exist", c.path.display());
                }
            }
            DataSource::Ucr(u) => {
                if u.paths.is_empty() {
                    bail!("at `data.paths`: at least one file is required");
                }
                for (i, p) in u.paths.iter().enumerate() {
                    if !p.is_file() {
                        bail!("at `data.paths[{i}]`: {} does not exist", p.display());
                    }
                }
            }
        }
        if let SplitConfig::CrossValidation { folds, fold } = self.split {
            if folds < 3 || fold >= folds {
                bail!(
                    "at `split`: fold {fold} of {folds} is invalid (need folds >= 3, fold < folds)"
                );
            }
        }
        if self.tasks.stage_count < 2 {
            bail!("at `tasks.stage_count`: must be at least 2");
        }
        if self.model.hidden_dim == 0 || self.model.mlp_hidden.contains(&0) {
            bail!("at `model`: layer widths must be positive");
        }
        self.strategy
            .resolved()
            .validate()
            .context("at `strategy`")?;
        self.train_options(0).validate().context("at `training`")?;
        if self.interpret.max_stages == 0 {
            bail!("at `interpret.max_stages`: must be at least 1");
        }
        Ok(())
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            dry_run: self.training.dry_run,
            epoch_snapshots: self.training.epoch_snapshots,
            seed,
        }
    }

    pub fn settings(&self, seed: u64) -> ExperimentSettings {
        ExperimentSettings {
            stage_count: self.tasks.stage_count,
            order: self.tasks.order,
            hidden_dim: self.model.hidden_dim,
            mlp_hidden: self.model.mlp_hidden.clone(),
            combine: self.model.combine,
            strategy: self.strategy.clone(),
            options: self.train_options(seed),
        }
    }

    /// The raw (unnormalized) dataset and splits for one seed.
    pub fn dataset(&self, seed: u64) -> Result<(Dataset, Splits)> {
        let dataset = match &self.data {
            DataSource::Synthetic(spec) => {
                let (ds, splits) = synthetic_with_splits(spec, seed)?;
                if self.split == SplitConfig::Shuffled {
                    return Ok((ds, splits));
                }
                ds
            }
            DataSource::Csv(c) => load_csv(
                &c.path,
                &CsvSchema {
                    id_column: c.id_column.clone(),
                    time_column: c.time_column.clone(),
                    label_column: c.label_column.clone(),
                    feature_columns: c.feature_columns.clone(),
                    class_count: c.class_count,
                    impute: c.impute,
                },
            )?,
            DataSource::Ucr(u) => load_ucr_tsv(&u.paths)?,
        };
        let mut rng = substream(seed, "split");
        let splits = match self.split {
            SplitConfig::Shuffled => Splits::shuffled(dataset.len(), &mut rng)?,
            SplitConfig::CrossValidation { folds, fold } => {
                Splits::cross_validation(dataset.len(), folds, fold, &mut rng)?
            }
        };
        Ok((dataset, splits))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// The `[strategy]` table flattens its optimizer settings, which hides the
/// failing key from the path tracker; re-reading them alone recovers it.
fn strategy_field_error(text: &str) -> Option<anyhow::Error> {
    let mut table: toml::Table = text.parse().ok()?;
    let toml::Value::Table(mut strategy) = table.remove("strategy")? else {
        return None;
    };
    if let Some(kind) = strategy.remove("kind") {
        if let Err(e) = StrategyKind::deserialize(kind) {
            return Some(anyhow::anyhow!("at `strategy.kind`: {e}"));
        }
    }
    let err =
        serde_path_to_error::deserialize::<_, RuConfig>(toml::Value::Table(strategy)).err()?;
    let path = err.path().to_string();
    let path = if path == "." {
        "strategy".to_string()
    } else {
        format!("strategy.{path}")
    };
    Some(anyhow::anyhow!("at `{path}`: {}", err.into_inner()))
}
