//! Penalty-strength grid: one isolated run directory per λ and a summary
//! ranked by mean validation AUC.

use std::path::Path;

use anyhow::{bail, Result};

use crate::config::ExperimentConfig;
use crate::run::{fresh_dir, train_run, SeedSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub lambda: f64,
    pub status: String,
    pub validation_auc: Option<f64>,
    pub final_auc: Option<f64>,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
}

/// Sorted, deduplicated λ values; rejects an empty or invalid list.
pub fn dedup_lambdas(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        bail!("at least one lambda value is required");
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        bail!("lambda must be finite and >= 0, got {v}");
    }
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

pub fn cell_name(lambda: f64) -> String {
    format!("lambda-{lambda}")
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<_>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn row(lambda: f64, seeds: &[SeedSummary]) -> GridRow {
    GridRow {
        lambda,
        status: "ok".into(),
        validation_auc: mean(seeds.iter().map(|s| s.validation_auc)),
        final_auc: mean(seeds.iter().map(|s| s.final_auc)),
        bwt: mean(seeds.iter().map(|s| s.bwt)),
        fwt: mean(seeds.iter().map(|s| s.fwt)),
    }
}

/// Best validation AUC first, ties to the smaller λ, failed cells last.
pub fn rank(rows: &mut [GridRow]) {
    rows.sort_by(|a, b| {
        let key = |r: &GridRow| r.validation_auc.filter(|v| v.is_finite());
        match (key(a), key(b)) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then(a.lambda.total_cmp(&b.lambda))
    });
}

pub fn run_grid(config: &ExperimentConfig, lambdas: &[f64], out: &Path) -> Result<Vec<GridRow>> {
    let lambdas = dedup_lambdas(lambdas)?;
    fresh_dir(out)?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for &lambda in &lambdas {
        let mut cell = config.clone();
        cell.strategy.config.lambda = lambda;
        log::info!("grid cell lambda={lambda}");
        match train_run(&cell, &out.join(cell_name(lambda))) {
            Ok(seeds) => rows.push(row(lambda, &seeds)),
            Err(e) => {
                log::error!("lambda={lambda} failed: {e:#}");
                failed += 1;
                rows.push(GridRow {
                    lambda,
                    status: "failed".into(),
                    validation_auc: None,
                    final_auc: None,
                    bwt: None,
                    fwt: None,
                });
            }
        }
    }
    rank(&mut rows);
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record([
        "lambda",
        "status",
        "validation_auc",
        "final_auc",
        "bwt",
        "fwt",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.lambda.to_string(),
            r.status.clone(),
            opt(r.validation_auc),
            opt(r.final_auc),
            opt(r.bwt),
            opt(r.fwt),
        ])?;
    }
    w.flush()?;
    if failed > 0 {
        bail!(
            "{failed} of {} grid cells failed; see summary.csv",
            lambdas.len()
        );
    }
    Ok(rows)
}
