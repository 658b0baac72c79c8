//! Runs every strategy on the shipped drift benchmark over the fixed seed
//! set and prints median BWT, FWT and final AUC.

use ccts_core::presets::{
    drift_benchmark_settings, drift_benchmark_spec, run_experiment, synthetic_with_splits,
    DRIFT_BENCHMARK_SEEDS,
};
use ccts_core::strategy::StrategyKind;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    (v[(n - 1) / 2] + v[n / 2]) / 2.0
}

fn main() -> ccts_core::Result<()> {
    let spec = drift_benchmark_spec();
    let settings = drift_benchmark_settings();
    println!(
        "{:<8} {:>8} {:>8} {:>9}",
        "strategy", "bwt", "fwt", "final_auc"
    );
    for kind in [
        StrategyKind::Ru,
        StrategyKind::LmOnly,
        StrategyKind::PmOnly,
        StrategyKind::Plain,
    ] {
        let (mut b, mut f, mut a) = (Vec::new(), Vec::new(), Vec::new());
        for seed in DRIFT_BENCHMARK_SEEDS {
            let (dataset, splits) = synthetic_with_splits(&spec, seed)?;
            let report =
                run_experiment(&dataset, &splits, &settings.with_kind(kind).with_seed(seed))?
                    .report;
            b.push(report.bwt);
            f.push(report.fwt);
            a.push(report.final_auc);
        }
        println!(
            "{:<8} {:>8.3} {:>8.3} {:>9.3}",
            kind.name(),
            median(b),
            median(f),
            median(a)
        );
    }
    Ok(())
}
