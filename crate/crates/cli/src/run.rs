//! Run directories: training, artifact writing, and the commands that
//! re-derive artifacts from a finished run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ccts_core::data::{PrefixTaskSequence, Splits};
use ccts_core::interpret::{
    gate_importance, input_importance, neuron_importance, prefix_stage_assignments, ranking,
    stage_detect, time_consistency, StageSegmentation,
};
use ccts_core::model::{Checkpoint, Network, ParamLayout};
use ccts_core::presets::prepare;
use ccts_core::trainer::{evaluate_matrix, train_continual, TrainOutcome, TrainReport};
use ccts_core::CctsError;

use crate::config::ExperimentConfig;

pub const STAGES_SCHEMA_VERSION: u32 = 1;
pub const EVAL_SCHEMA_VERSION: u32 = 1;

/// Creates `dir`, refusing to reuse a non-empty directory.
pub fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        bail!(
            "output directory {} already exists and is not empty",
            dir.display()
        );
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn matrix_csv(path: &Path, r: &[Vec<f64>]) -> Result<()> {
    let mut header = vec!["after_task".to_string()];
    header.extend((0..r.len()).map(|j| format!("task_{j}")));
    write_rows(
        path,
        &header,
        r.iter().enumerate().map(|(i, row)| {
            let mut cells = vec![i.to_string()];
            cells.extend(row.iter().map(|v| v.to_string()));
            cells
        }),
    )
}

pub fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed-{seed}"))
}

/// Headline numbers of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub status: String,
    pub final_auc: Option<f64>,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub validation_auc: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Trains every seed of `config` into `run`. Returns the per-seed
/// summaries; a failed seed stops the run after its partial artifacts are
/// written.
pub fn train_run(config: &ExperimentConfig, run: &Path) -> Result<Vec<SeedSummary>> {
    fresh_dir(run)?;
    let mut echo = config.clone();
    echo.out = None;
    fs::write(run.join("config.toml"), echo.to_toml()?)?;
    let mut summaries = Vec::new();
    let mut failure = None;
    for &seed in &config.seeds {
        let dir = seed_dir(run, seed);
        fs::create_dir_all(dir.join("checkpoints"))?;
        match train_seed(config, seed, &dir) {
            Ok(report) => summaries.push(SeedSummary {
                seed,
                status: "ok".into(),
                final_auc: Some(report.final_auc),
                bwt: Some(report.bwt),
                fwt: Some(report.fwt),
                validation_auc: report.validation_auc,
            }),
            Err(e) => {
                summaries.push(SeedSummary {
                    seed,
                    status: "failed".into(),
                    final_auc: None,
                    bwt: None,
                    fwt: None,
                    validation_auc: None,
                });
                failure = Some(e.context(format!("seed {seed}")));
                break;
            }
        }
    }
    write_rows(
        &run.join("summary.csv"),
        &[
            "seed",
            "status",
            "final_auc",
            "bwt",
            "fwt",
            "validation_auc",
        ]
        .map(String::from),
        summaries.iter().map(|s| {
            vec![
                s.seed.to_string(),
                s.status.clone(),
                opt(s.final_auc),
                opt(s.bwt),
                opt(s.fwt),
                opt(s.validation_auc),
            ]
        }),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summaries),
    }
}

fn train_seed(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<TrainReport> {
    let settings = config.settings(seed);
    let (raw, splits) = config.dataset(seed)?;
    let (dataset, tasks) = prepare(&raw, &splits, &settings)?;
    write_json(&dir.join("splits.json"), &splits)?;
    write_json(&dir.join("tasks.json"), &tasks)?;
    let model = settings.model_for(&dataset);
    log::info!(
        "seed {seed}: {} series, {} tasks",
        dataset.len(),
        tasks.len()
    );
    let outcome = match train_continual(
        &dataset,
        &splits,
        &tasks,
        &model,
        &settings.strategy,
        &settings.options,
    ) {
        Ok(outcome) => outcome,
        Err(CctsError::Diverged {
            task,
            epoch,
            reason,
            last_finite,
        }) => {
            let net = Network::from_flat(&model, &last_finite)?;
            Checkpoint::new(&net, None).save(dir.join("checkpoints").join("last-finite.json"))?;
            let message = format!("training diverged on task {task} (epoch {epoch}): {reason}\n");
            fs::write(dir.join("FAILED"), &message)?;
            bail!("{}", message.trim_end());
        }
        Err(e) => {
            fs::write(dir.join("FAILED"), format!("{e}\n"))?;
            return Err(e.into());
        }
    };
    write_outcome(&outcome, dir)?;
    interpret_seed(dir, config.interpret.max_stages)?;
    Ok(outcome.report)
}

fn write_outcome(outcome: &TrainOutcome, dir: &Path) -> Result<()> {
    let report = &outcome.report;
    write_json(&dir.join("report.json"), report)?;
    matrix_csv(&dir.join("accuracy_matrix.csv"), &report.accuracy)?;
    write_rows(
        &dir.join("per_time_auc.csv"),
        &["stage".to_string(), "auc".to_string()],
        report
            .per_time_auc
            .iter()
            .enumerate()
            .map(|(s, v)| vec![s.to_string(), v.to_string()]),
    )?;
    let mut trace = String::new();
    for record in &outcome.trace {
        trace.push_str(&serde_json::to_string(record)?);
        trace.push('\n');
    }
    fs::write(dir.join("trace.jsonl"), trace)?;
    for c in &outcome.checkpoints {
        let name = match c.task_position {
            Some(i) => format!("task-{i}.json"),
            None => "initial.json".into(),
        };
        c.save(dir.join("checkpoints").join(name))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagesFile {
    pub schema_version: u32,
    pub segmentation: StageSegmentation,
    /// Percentage of test series whose prefix stages never go backwards.
    pub time_consistency: Option<f64>,
}

/// Writes the importance CSVs and `stages.json` of one seed directory from
/// its report and tasks.
pub fn interpret_seed(dir: &Path, max_stages: usize) -> Result<StagesFile> {
    let report: TrainReport = read_json(&dir.join("report.json"))?;
    let tasks: PrefixTaskSequence = read_json(&dir.join("tasks.json"))?;
    let splits: Splits = read_json(&dir.join("splits.json"))?;
    let layout = ParamLayout::new(&report.config.model);
    let trail = &report.importance;

    let mut features = Vec::new();
    let mut gates = Vec::new();
    let mut neurons = Vec::new();
    for snap in &trail.snapshots {
        let input = input_importance(&snap.alpha, &layout)?;
        let rank = ranking(&input);
        for (r, &f) in rank.iter().enumerate() {
            features.push(vec![
                snap.task.to_string(),
                f.to_string(),
                input[f].to_string(),
                (r + 1).to_string(),
            ]);
        }
        for (gate, v) in gate_importance(&snap.alpha, &layout)? {
            gates.push(vec![
                snap.task.to_string(),
                gate.name().to_string(),
                v.to_string(),
            ]);
        }
        for (layer, values) in neuron_importance(&snap.alpha, &layout)?.iter().enumerate() {
            for (n, v) in values.iter().enumerate() {
                neurons.push(vec![
                    snap.task.to_string(),
                    layer.to_string(),
                    n.to_string(),
                    v.to_string(),
                ]);
            }
        }
    }
    let h = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    write_rows(
        &dir.join("importance_features.csv"),
        &h(&["task", "feature", "importance", "rank"]),
        features,
    )?;
    write_rows(
        &dir.join("importance_gates.csv"),
        &h(&["task", "gate", "importance"]),
        gates,
    )?;
    write_rows(
        &dir.join("importance_neurons.csv"),
        &h(&["task", "layer", "neuron", "importance"]),
        neurons,
    )?;

    let segmentation = stage_detect(trail, max_stages.min(trail.len()))?;
    let full = &tasks.lengths[tasks.stage_count - 1];
    let cohort: Vec<Vec<usize>> = splits
        .test
        .iter()
        .filter(|&&i| full[i] >= 2)
        .map(|&i| prefix_stage_assignments(&segmentation, &tasks, full[i]))
        .collect();
    let time_consistency = if cohort.is_empty() {
        None
    } else {
        Some(time_consistency(&cohort)?)
    };
    let stages = StagesFile {
        schema_version: STAGES_SCHEMA_VERSION,
        segmentation,
        time_consistency,
    };
    write_json(&dir.join("stages.json"), &stages)?;
    Ok(stages)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub schema_version: u32,
    pub accuracy: Vec<Vec<f64>>,
    /// Largest absolute difference from the matrix in `report.json`.
    pub max_abs_diff: f64,
}

/// Recomputes the accuracy matrix of one seed from its checkpoints.
pub fn eval_seed(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<EvalFile> {
    let splits: Splits = read_json(&dir.join("splits.json"))?;
    let stored_tasks: PrefixTaskSequence = read_json(&dir.join("tasks.json"))?;
    let report: TrainReport = read_json(&dir.join("report.json"))?;
    let (raw, _) = config.dataset(seed)?;
    let (dataset, tasks) = prepare(&raw, &splits, &config.settings(seed))?;
    if tasks != stored_tasks {
        bail!(
            "{}: tasks rebuilt from the config differ from tasks.json",
            dir.display()
        );
    }
    let checkpoints = (0..tasks.len())
        .map(|i| Checkpoint::load(dir.join("checkpoints").join(format!("task-{i}.json"))))
        .collect::<Result<Vec<_>, _>>()?;
    let accuracy = evaluate_matrix(&checkpoints, &tasks, &dataset, &splits.test)?;
    let max_abs_diff = accuracy
        .iter()
        .flatten()
        .zip(report.accuracy.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let eval = EvalFile {
        schema_version: EVAL_SCHEMA_VERSION,
        accuracy,
        max_abs_diff,
    };
    write_json(&dir.join("eval.json"), &eval)?;
    Ok(eval)
}

/// Loads the config echo of a finished run.
pub fn run_config(run: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&run.join("config.toml"))
}
