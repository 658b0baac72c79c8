mod config;
mod grid;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccts_core::data::write_csv;
use ccts_core::presets::synthetic_with_splits;

use config::{DataSource, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "ccts",
    version,
    about = "Continual classification of time series by prefix stages"
)]
struct Cli {
    /// Worker threads for gradient evaluation (results do not depend on it).
    #[arg(long, global = true, env = "CCTS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Runs this single seed instead of the config's list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the synthetic dataset of each seed as CSV.
    Synth(RunArgs),
    /// Trains every seed and writes the full run directory.
    Train(RunArgs),
    /// One run per penalty strength, ranked by validation AUC.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// Penalty strengths (repeat or comma-separate).
        #[arg(long = "lambda", required = true, value_delimiter = ',', num_args = 1..)]
        lambdas: Vec<f64>,
    },
    /// Recomputes the accuracy matrix of a run from its checkpoints.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
    },
    /// Rewrites importance CSVs and stages of a run from its report.
    Interpret {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        max_stages: Option<usize>,
    },
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    let out = match (&args.out, &config.out) {
        (Some(o), _) | (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set `out` in the config"),
    };
    Ok((config, out))
}

fn seeds_in(run: &Path, config: &ExperimentConfig) -> Vec<(u64, PathBuf)> {
    config
        .seeds
        .iter()
        .map(|&s| (s, run::seed_dir(run, s)))
        .filter(|(_, d)| d.join("report.json").is_file())
        .collect()
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Synth(args) => {
            let (config, out) = load(&args)?;
            let DataSource::Synthetic(spec) = &config.data else {
                bail!("synth needs a config with data.kind = \"synthetic\"");
            };
            run::fresh_dir(&out)?;
            for &seed in &config.seeds {
                let (ds, _) = synthetic_with_splits(spec, seed)?;
                let path = out.join(format!("synthetic-seed-{seed}.csv"));
                write_csv(&ds, &path)?;
                println!("{}", path.display());
            }
        }
        Command::Train(args) => {
            let (config, out) = load(&args)?;
            for s in run::train_run(&config, &out)? {
                println!(
                    "seed {}: final_auc {:.4} bwt {:.4} fwt {:.4}",
                    s.seed,
                    s.final_auc.unwrap_or(f64::NAN),
                    s.bwt.unwrap_or(f64::NAN),
                    s.fwt.unwrap_or(f64::NAN)
                );
            }
            println!("{}", out.display());
        }
        Command::Grid { run, lambdas } => {
            let (config, out) = load(&run)?;
            let rows = grid::run_grid(&config, &lambdas, &out)?;
            println!(
                "best lambda {} (validation AUC {:?})",
                rows[0].lambda, rows[0].validation_auc
            );
            println!("{}", out.join("summary.csv").display());
        }
        Command::Eval { run } => {
            let config = run::run_config(&run)?;
            let seeds = seeds_in(&run, &config);
            if seeds.is_empty() {
                bail!("{} holds no finished seeds", run.display());
            }
            for (seed, dir) in seeds {
                let e = run::eval_seed(&config, seed, &dir)?;
                println!("seed {seed}: max |R - R_report| = {}", e.max_abs_diff);
            }
        }
        Command::Interpret { run, max_stages } => {
            let config = run::run_config(&run)?;
            let seeds = seeds_in(&run, &config);
            if seeds.is_empty() {
                bail!("{} holds no finished seeds", run.display());
            }
            for (seed, dir) in seeds {
                let s =
                    run::interpret_seed(&dir, max_stages.unwrap_or(config.interpret.max_stages))?;
                println!(
                    "seed {seed}: {} stages starting at tasks {:?}, time consistency {:?}",
                    s.segmentation.stage_count(),
                    s.segmentation.start_tasks,
                    s.time_consistency
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
