//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use ccts_core::data::{
    load_ucr_tsv, make_prefix_tasks, Dataset, Sample, Splits, TaskOrder, TimeSeriesRecord,
};
use ccts_core::interpret::{
    elbow, gate_importance, input_importance, neuron_importance, prefix_stage_assignments, ranking,
    segment_cost, stage_detect, time_consistency, ImportanceTrail, ELBOW_FRACTION,
};
use ccts_core::metrics::{auc_roc, auc_trapezoid, bwt, fwt, gradient_fluctuation, ScoredSet};
use ccts_core::model::{MemoryCombine, ModelConfig, Network, SlotKind};
use ccts_core::presets::{
    drift_benchmark_settings, drift_benchmark_spec, run_experiment, synthetic_with_splits,
    ucr_earthquakes_settings, DRIFT_BENCHMARK_SEEDS, UCR_FOLDS,
};
use ccts_core::rng::{substream, Rng};
use ccts_core::strategy::{
    fw_step, gem_project, regularized_loss_and_grad, ru_step, schedule, FisherDiag, GradientMemory,
    RuConfig, RuState, StrategyChoice, StrategyKind, TaskAnchor,
};
use ccts_core::trainer::{train_continual, TrainOptions};

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_record(rng: &mut Rng, d: usize, len: usize, label: usize) -> TimeSeriesRecord {
    let mut t = 0.0;
    let timestamps = (0..len)
        .map(|m| {
            if m > 0 {
                t += rng.random_range(0.0..3.0);
            }
            t
        })
        .collect();
    let values = Array2::from_shape_fn((len, d), |_| rng.sample::<f64, _>(StandardNormal));
    TimeSeriesRecord::new("r", timestamps, values, label).unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = substream(101, "gradient-check");
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for instance in 0..50 {
        let d = rng.random_range(1..=4);
        let h = rng.random_range(1..=6);
        let m = rng.random_range(1..=6);
        let classes = rng.random_range(2..=3);
        let mlp_hidden = if rng.random_bool(0.5) {
            vec![rng.random_range(1..=4)]
        } else {
            vec![]
        };
        let config = ModelConfig {
            input_dim: d,
            hidden_dim: h,
            mlp_hidden,
            class_count: classes,
            combine: if rng.random_bool(0.5) {
                MemoryCombine::Add
            } else {
                MemoryCombine::Subtract
            },
        };
        let mut net = Network::init(&config, &mut rng).unwrap();
        let theta: Vec<f64> = net
            .to_flat()
            .iter()
            .map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        net.set_flat(&theta).unwrap();
        let label = rng.random_range(0..classes);
        let record = random_record(&mut rng, d, m, label);
        let sample = record.prefix(m);
        let (_, exact) = net.sample_loss_and_grad(&sample).unwrap();
        let step = 1e-5;
        for k in 0..theta.len() {
            let mut probe = theta.clone();
            probe[k] = theta[k] + step;
            net.set_flat(&probe).unwrap();
            let up = net.loss(std::slice::from_ref(&sample)).unwrap();
            probe[k] = theta[k] - step;
            net.set_flat(&probe).unwrap();
            let down = net.loss(std::slice::from_ref(&sample)).unwrap();
            let numeric = (up - down) / (2.0 * step);
            let err = (numeric - exact[k]).abs();
            let tol = (1e-4 * exact[k].abs().max(numeric.abs())).max(1e-8);
            if err > tol {
                return Outcome::Fail(format!(
                    "instance {instance} coordinate {k}: analytic {} vs numeric {numeric}",
                    exact[k]
                ));
            }
            worst = worst.max(err / tol);
            checked += 1;
        }
        net.set_flat(&theta).unwrap();
    }
    Outcome::Pass(format!(
        "50 instances, {checked} coordinates, worst error/tolerance {worst:.3}"
    ))
}

fn toy_dataset(seed: u64) -> Dataset {
    let mut rng = substream(seed, "toy");
    let records = (0..30)
        .map(|n| {
            let mut r = random_record(&mut rng, 2, 8, n % 2);
            let shift = if n % 2 == 0 { -0.7 } else { 0.7 };
            r.values.column_mut(0).mapv_inplace(|v| v + shift);
            r
        })
        .collect();
    Dataset::new(records, vec!["a".into(), "b".into()], 2).unwrap()
}

fn toy_model() -> ModelConfig {
    ModelConfig {
        input_dim: 2,
        hidden_dim: 4,
        mlp_hidden: vec![3],
        class_count: 2,
        combine: MemoryCombine::Add,
    }
}

/// Training with rho fixed to 1 against a loop that feeds the raw penalized
/// gradient straight into the Frank-Wolfe step.
fn rho_one_matches_raw_gradient() -> Result<(), String> {
    let ds = toy_dataset(5);
    let samples: Vec<Sample<'_>> = ds.records.iter().map(|r| r.prefix(6)).collect();
    let config = RuConfig {
        fixed_rho: Some(1.0),
        projection: false,
        lambda: 0.5,
        radius: Some(3.0),
        ..RuConfig::default()
    };
    let mut net = Network::init(&toy_model(), &mut substream(5, "init")).unwrap();
    let mut state = RuState::new(&net, &config);
    let anchor_params: Vec<f64> = net.to_flat().iter().map(|v| v + 0.1).collect();
    let fisher = FisherDiag {
        values: (0..anchor_params.len())
            .map(|i| (i % 7) as f64 * 0.1)
            .collect(),
        task: 0,
        samples: 1,
    };
    state.anchors.push(TaskAnchor {
        fisher: fisher.clone(),
        params: anchor_params.clone(),
    });
    let mut theta = net.to_flat();
    let (center, radius) = (state.center.clone(), state.radius);
    let mut reference = net.clone();
    for t in 0..20 {
        let batch = &samples[(t * 7) % 24..(t * 7) % 24 + 6];
        ru_step(&mut net, batch, &mut state, &config).map_err(|e| e.to_string())?;
        let (loss, grad) = reference.loss_and_grad(batch).unwrap();
        let (_, grad) =
            regularized_loss_and_grad(loss, &grad, &theta, &anchor_params, &fisher, config.lambda)
                .unwrap();
        let (_, eta) = schedule(t, config.schedule_exponent);
        theta = fw_step(&theta, &grad, eta, &center, radius).unwrap();
        reference.set_flat(&theta).unwrap();
        if net.to_flat() != theta {
            return Err(format!("trajectories differ at step {t}"));
        }
    }
    Ok(())
}

/// Plain training against an independently written minibatch SGD loop.
fn plain_matches_sgd() -> Result<(), String> {
    let ds = toy_dataset(9);
    let splits = Splits::shuffled(ds.len(), &mut substream(9, "split")).unwrap();
    let tasks = make_prefix_tasks(&ds, 3, TaskOrder::Time).unwrap();
    let options = TrainOptions {
        epochs: 3,
        batch_size: 5,
        seed: 9,
        ..TrainOptions::default()
    };
    let strategy = StrategyChoice::new(
        StrategyKind::Plain,
        RuConfig {
            learning_rate: 0.5,
            schedule_exponent: 0.5,
            ..RuConfig::default()
        },
    );
    let out = train_continual(&ds, &splits, &tasks, &toy_model(), &strategy, &options)
        .map_err(|e| e.to_string())?;

    let mut net = Network::init(&toy_model(), &mut substream(9, "init")).unwrap();
    let mut rng = substream(9, "batches");
    let mut t = 0usize;
    for pos in 0..tasks.len() {
        let train: Vec<Sample<'_>> = splits
            .train
            .iter()
            .map(|&i| ds.records[i].prefix(tasks.prefix_len(pos, i)))
            .collect();
        let mut order: Vec<usize> = (0..train.len()).collect();
        for _ in 0..options.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(options.batch_size) {
                let batch: Vec<Sample<'_>> = chunk.iter().map(|&i| train[i]).collect();
                let (_, grad) = net.loss_and_grad(&batch).unwrap();
                let lr = 0.5 / ((t + 1) as f64).sqrt();
                let theta: Vec<f64> = net
                    .to_flat()
                    .iter()
                    .zip(&grad)
                    .map(|(p, g)| p - lr * g)
                    .collect();
                net.set_flat(&theta).unwrap();
                t += 1;
            }
        }
        if out.checkpoints[pos].params != net.to_flat() {
            return Err(format!("parameters differ after task {pos}"));
        }
    }
    Ok(())
}

/// LM-only with lambda 0 reproduces plain training exactly.
fn zero_lambda_removes_penalty() -> Result<(), String> {
    let ds = toy_dataset(11);
    let splits = Splits::shuffled(ds.len(), &mut substream(11, "split")).unwrap();
    let tasks = make_prefix_tasks(&ds, 2, TaskOrder::Time).unwrap();
    let options = TrainOptions {
        epochs: 2,
        batch_size: 6,
        seed: 11,
        ..TrainOptions::default()
    };
    let run = |kind, lambda| {
        let strategy = StrategyChoice::new(
            kind,
            RuConfig {
                lambda,
                ..RuConfig::default()
            },
        );
        train_continual(&ds, &splits, &tasks, &toy_model(), &strategy, &options).unwrap()
    };
    let lm = run(StrategyKind::LmOnly, 0.0);
    let plain = run(StrategyKind::Plain, 0.0);
    if lm.checkpoints.last().unwrap().params != plain.checkpoints.last().unwrap().params {
        return Err("lambda = 0 changed the trajectory".into());
    }
    let theta = vec![1.0, -2.0, 0.5];
    let fisher = FisherDiag {
        values: vec![3.0, 1.0, 2.0],
        task: 0,
        samples: 1,
    };
    let grad = vec![0.1, 0.2, 0.3];
    let (l, g) = regularized_loss_and_grad(0.7, &grad, &theta, &[0.0; 3], &fisher, 0.0).unwrap();
    if l != 0.7 || g != grad {
        return Err("lambda = 0 changed the objective".into());
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let results = [
        ("rho=1", rho_one_matches_raw_gradient()),
        ("lambda=0", zero_lambda_removes_penalty()),
        ("plain=sgd", plain_matches_sgd()),
    ];
    let failures: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "3 identities bitwise".into()
        } else {
            failures.join("; ")
        },
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact projection by enumerating every active set: for each subset S,
/// solve the equality-constrained projection and keep the closest feasible
/// point.
#[allow(clippy::needless_range_loop)]
fn brute_force_projection(g: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let n = active.len();
        // G_SS u = -b_S
        let mut a: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| {
                let mut row: Vec<f64> = active.iter().map(|&j| dot(&rows[i], &rows[j])).collect();
                row.push(-dot(&rows[i], g));
                row
            })
            .collect();
        let mut singular = false;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                .unwrap();
            if a[p][c].abs() < 1e-12 {
                singular = true;
                break;
            }
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for q in c..=n {
                        a[r][q] -= f * a[c][q];
                    }
                }
            }
        }
        if singular {
            continue;
        }
        let u: Vec<f64> = (0..n).map(|r| a[r][n] / a[r][r]).collect();
        let mut x = g.to_vec();
        for (&i, &ui) in active.iter().zip(&u) {
            x.iter_mut()
                .zip(&rows[i])
                .for_each(|(xv, rv)| *xv += ui * rv);
        }
        if rows.iter().all(|r| dot(r, &x) >= -1e-10) {
            let dist: f64 = x.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, x));
            }
        }
    }
    best.expect("the origin side always has a feasible active set")
        .1
}

fn criterion_3() -> Outcome {
    let mut rng = substream(303, "projection");
    let mut worst = 0.0f64;
    let mut min_cos = f64::INFINITY;
    for instance in 0..100 {
        let dim = rng.random_range(1..=4);
        let k = rng.random_range(1..=3);
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let mut memory = GradientMemory::new(3);
        for (t, r) in rows.iter().enumerate() {
            memory.record(t, r.clone()).unwrap();
        }
        let projected = gem_project(&g, &memory).unwrap();
        let oracle = brute_force_projection(&g, &rows);
        let err = projected
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err > 1e-6 {
            return Outcome::Fail(format!(
                "instance {instance}: projection differs from oracle by {err:e}"
            ));
        }
        worst = worst.max(err);
        let pn = dot(&projected, &projected).sqrt();
        if pn > 0.0 {
            for r in &rows {
                min_cos = min_cos.min(dot(r, &projected) / (pn * dot(r, r).sqrt()));
            }
        }
    }
    if min_cos < -1e-8 {
        return Outcome::Fail(format!("post-projection cosine {min_cos:e}"));
    }

    let dim = 6;
    let center: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let radius = 2.5;
    let mut theta = center.clone();
    let mut max_dist = 0.0f64;
    for _ in 0..10_000 {
        let d: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let eta = rng.random_range(0.0..=1.0);
        theta = fw_step(&theta, &d, eta, &center, radius).unwrap();
        let dist = theta
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_dist = max_dist.max(dist);
    }
    check(
        max_dist <= radius * (1.0 + 1e-12),
        format!("100 projections, max error {worst:.1e}, min cosine {min_cos:.2e}; 10000 FW steps, max distance {max_dist:.6} <= {radius}"),
    )
}

fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

/// Every split of `0..n` into `k` contiguous non-empty segments.
fn partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for last in (k - 1)..n {
        for mut p in partitions(last, k - 1) {
            p.push(last);
            out.push(p);
        }
    }
    out
}

fn normalized(trail: &ImportanceTrail) -> Vec<Vec<f64>> {
    trail
        .snapshots
        .iter()
        .map(|s| {
            let n = s.alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
            s.alpha.iter().map(|a| a / n).collect()
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = substream(404, "metrics");
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..40);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let coarse = rng.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(0..5) as f64 / 4.0
                } else {
                    rng.random()
                }
            })
            .collect();
        let set = ScoredSet::new(scores.clone(), labels.clone()).unwrap();
        let (a, b) = (auc_roc(&set).unwrap(), auc_trapezoid(&set).unwrap());
        let c = pair_count_auc(&scores, &labels);
        worst = worst.max((a - b).abs()).max((a - c).abs());
    }
    if worst > 1e-12 {
        return Outcome::Fail(format!(
            "AUC pair counting vs trapezoid differ by {worst:e}"
        ));
    }

    let hand = [
        bwt(&[vec![0.8, 0.0], vec![0.7, 0.9]]).unwrap() == 0.7 - 0.8,
        bwt(&[vec![0.6; 3], vec![0.6; 3], vec![0.6; 3]]).unwrap() == 0.0,
        (bwt(&[
            vec![0.8, 0.0, 0.0],
            vec![0.0, 0.9, 0.0],
            vec![0.9, 0.7, 0.5],
        ])
        .unwrap()
            - (-0.05))
            .abs()
            < 1e-15,
        fwt(&[vec![0.0, 0.6], vec![0.0, 0.0]], &[0.0, 0.5]).unwrap() == 0.6 - 0.5,
        (fwt(
            &[vec![0.0, 0.7, 0.0], vec![0.0, 0.0, 0.8], vec![0.0; 3]],
            &[0.0, 0.5, 0.6],
        )
        .unwrap()
            - 0.2)
            .abs()
            < 1e-15,
        bwt(&[vec![0.5]]).is_err(),
        gradient_fluctuation(&[0.3, 0.1, 2.0]).unwrap() == 0.0,
        gradient_fluctuation(&[1.0, -1.0, 1.0]).unwrap() == 0.5 * 8f64.sqrt(),
        gradient_fluctuation(&[0.0, -1.0]).unwrap() == 2.0,
        gradient_fluctuation(&[1.0]).is_err(),
    ];
    if let Some(i) = hand.iter().position(|ok| !ok) {
        return Outcome::Fail(format!("hand-evaluated metric case {i} failed"));
    }

    let mut trails = 0;
    for len in 2..=8 {
        for _ in 0..25 {
            let dim = rng.random_range(2..5);
            let blocks = rng.random_range(1..=3);
            let bases: Vec<Vec<f64>> = (0..blocks)
                .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                .collect();
            let mut trail = ImportanceTrail::default();
            for m in 0..len {
                let base = &bases[m * blocks / len];
                let alpha = base.iter().map(|b| b + 0.2 * rng.random::<f64>()).collect();
                trail.push(m, alpha).unwrap();
            }
            let max_stages = rng.random_range(1..=len);
            let seg = stage_detect(&trail, max_stages).unwrap();
            let units = normalized(&trail);
            let mut costs = Vec::new();
            let mut best_parts = Vec::new();
            for k in 1..=max_stages {
                let (cost, part) = partitions(len, k)
                    .into_iter()
                    .map(|p| {
                        let ends: Vec<usize> = p.iter().skip(1).copied().chain([len]).collect();
                        let c: f64 = p
                            .iter()
                            .zip(&ends)
                            .map(|(&s, &e)| segment_cost(&units, s, e))
                            .sum();
                        (c, p)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .unwrap();
                costs.push(cost);
                best_parts.push(part);
            }
            let chosen = elbow(&costs, ELBOW_FRACTION);
            let cost_err = costs
                .iter()
                .zip(&seg.cost_by_count)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if cost_err > 1e-12 || seg.starts != best_parts[chosen - 1] {
                return Outcome::Fail(format!(
                    "stage_detect {:?} vs brute force {:?} (cost error {cost_err:e})",
                    seg.starts,
                    best_parts[chosen - 1]
                ));
            }
            trails += 1;
        }
    }
    Outcome::Pass(format!(
        "1000 AUC sets (max diff {worst:.1e}), {} hand cases, {trails} stage trails vs brute force",
        hand.len()
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    (v[(n - 1) / 2] + v[n / 2]) / 2.0
}

fn criterion_5() -> Outcome {
    let spec = drift_benchmark_spec();
    let settings = drift_benchmark_settings();
    let med = |kind: StrategyKind| -> Result<(f64, f64), String> {
        let (mut b, mut a) = (Vec::new(), Vec::new());
        for seed in DRIFT_BENCHMARK_SEEDS {
            let (dataset, splits) =
                synthetic_with_splits(&spec, seed).map_err(|e| e.to_string())?;
            let report =
                run_experiment(&dataset, &splits, &settings.with_kind(kind).with_seed(seed))
                    .map_err(|e| format!("{} seed {seed}: {e}", kind.name()))?
                    .report;
            b.push(report.bwt);
            a.push(report.final_auc);
        }
        Ok((median(b), median(a)))
    };
    let results = (
        med(StrategyKind::Ru),
        med(StrategyKind::LmOnly),
        med(StrategyKind::Plain),
    );
    let ((ru_b, ru_a), (lm_b, _), (pl_b, pl_a)) = match results {
        (Ok(r), Ok(l), Ok(p)) => (r, l, p),
        (r, l, p) => {
            let errs: Vec<String> = [r, l, p].into_iter().filter_map(|x| x.err()).collect();
            return Outcome::Fail(errs.join("; "));
        }
    };
    check(
        ru_b - pl_b >= 0.05 && ru_a >= pl_a && ru_b >= lm_b && lm_b >= pl_b,
        format!(
            "median BWT RU {ru_b:.3}, LM_only {lm_b:.3}, Plain {pl_b:.3} (RU - Plain {:.3} >= 0.05); final AUC RU {ru_a:.3} vs Plain {pl_a:.3}",
            ru_b - pl_b
        ),
    )
}

const UCR_ENV: &str = "CCTS_UCR_EARTHQUAKES";

fn criterion_6() -> Outcome {
    let Some(dir) = std::env::var_os(UCR_ENV).map(PathBuf::from) else {
        return Outcome::NotRun(format!(
            "UCR Earthquakes not available; set {UCR_ENV} to a directory with Earthquakes_TRAIN.tsv and Earthquakes_TEST.tsv"
        ));
    };
    let paths = [
        dir.join("Earthquakes_TRAIN.tsv"),
        dir.join("Earthquakes_TEST.tsv"),
    ];
    let dataset = match load_ucr_tsv(&paths) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("loading {}: {e}", dir.display())),
    };
    let settings = ucr_earthquakes_settings();
    let (mut ru_auc, mut pl_auc, mut ru_bwt, mut pl_bwt) = (0.0, 0.0, 0.0, 0.0);
    for fold in 0..UCR_FOLDS {
        let splits =
            Splits::cross_validation(dataset.len(), UCR_FOLDS, fold, &mut substream(0, "cv"))
                .unwrap();
        for (kind, auc, b) in [
            (StrategyKind::Ru, &mut ru_auc, &mut ru_bwt),
            (StrategyKind::Plain, &mut pl_auc, &mut pl_bwt),
        ] {
            match run_experiment(
                &dataset,
                &splits,
                &settings.with_kind(kind).with_seed(fold as u64),
            ) {
                Ok(o) => {
                    *auc += o.report.final_auc / UCR_FOLDS as f64;
                    *b += o.report.bwt / UCR_FOLDS as f64;
                }
                Err(e) => return Outcome::Fail(format!("fold {fold} {}: {e}", kind.name())),
            }
        }
    }
    check(
        ru_auc - pl_auc >= 0.02 && ru_bwt > pl_bwt,
        format!(
            "mean AUC RU {ru_auc:.3} vs Plain {pl_auc:.3} (needs +0.02); BWT RU {ru_bwt:.3} vs Plain {pl_bwt:.3}; RU vs 0.931 reference: {:+.3}",
            ru_auc - 0.931
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = substream(707, "interpret");
    let config = ModelConfig {
        input_dim: 3,
        hidden_dim: 5,
        mlp_hidden: vec![4, 3],
        class_count: 3,
        combine: MemoryCombine::Add,
    };
    let net = Network::zeros(&config).unwrap();
    let layout = net.layout();
    // integer-valued importances keep every sum exact
    let alpha: Vec<f64> = (0..layout.len())
        .map(|_| rng.random_range(0..1000) as f64)
        .collect();
    let slot_sum = |pred: &dyn Fn(&SlotKind) -> bool| -> f64 {
        layout
            .slots
            .iter()
            .filter(|s| pred(&s.kind))
            .map(|s| alpha[s.range()].iter().sum::<f64>())
            .sum()
    };
    let features = input_importance(&alpha, &layout).unwrap();
    let gates = gate_importance(&alpha, &layout).unwrap();
    let neurons = neuron_importance(&alpha, &layout).unwrap();
    let mut identities = vec![
        features.iter().sum::<f64>() == slot_sum(&|k| matches!(k, SlotKind::GateInput { .. })),
        gates.iter().map(|g| g.1).sum::<f64>()
            == slot_sum(&|k| !matches!(k, SlotKind::HeadWeight { .. } | SlotKind::HeadBias { .. })),
    ];
    for (layer, values) in neurons.iter().enumerate() {
        identities.push(
            values.iter().sum::<f64>() == slot_sum(&|k| *k == SlotKind::HeadWeight { layer }),
        );
    }
    if let Some(i) = identities.iter().position(|ok| !ok) {
        return Outcome::Fail(format!("aggregation identity {i} does not hold"));
    }

    let mut trail = ImportanceTrail::default();
    for m in 0..9 {
        let block = m / 3;
        let a: Vec<f64> = (0..layout.len())
            .map(|i| if i % 3 == block { 5.0 } else { 1.0 } + rng.random::<f64>())
            .collect();
        trail.push(m, a).unwrap();
    }
    let seg = stage_detect(&trail, 5).unwrap();
    for c in [0.001, 0.37, 2.0, 1234.5] {
        let scaled: Vec<f64> = alpha.iter().map(|a| a * c).collect();
        let same = ranking(&input_importance(&scaled, &layout).unwrap()) == ranking(&features)
            && ranking(
                &gate_importance(&scaled, &layout)
                    .unwrap()
                    .iter()
                    .map(|g| g.1)
                    .collect::<Vec<_>>(),
            ) == ranking(&gates.iter().map(|g| g.1).collect::<Vec<_>>())
            && neuron_importance(&scaled, &layout)
                .unwrap()
                .iter()
                .zip(&neurons)
                .all(|(a, b)| ranking(a) == ranking(b));
        let scaled_trail = trail
            .map(|a| Ok(a.iter().map(|v| v * c).collect()))
            .unwrap();
        if !same || stage_detect(&scaled_trail, 5).unwrap().starts != seg.starts {
            return Outcome::Fail(format!(
                "rescaling by {c} changed a ranking or stage boundary"
            ));
        }
    }

    // a cohort whose stages follow the time order
    let mut records = Vec::new();
    for n in 0..12 {
        records.push(random_record(&mut rng, 3, 9 + n % 4, n % 3));
    }
    let dataset = Dataset::new(records, vec!["a".into(), "b".into(), "c".into()], 3).unwrap();
    let tasks = make_prefix_tasks(&dataset, 9, TaskOrder::Time).unwrap();
    let assignments: Vec<Vec<usize>> = dataset
        .records
        .iter()
        .map(|r| prefix_stage_assignments(&seg, &tasks, r.len()))
        .collect();
    let tc = time_consistency(&assignments).unwrap();
    check(
        tc == 100.0 && seg.starts == vec![0, 3, 6],
        format!("aggregation identities exact; rankings and stages {:?} invariant under 4 rescalings; time consistency {tc}%", seg.starts),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 gradient correctness", criterion_1),
        ("2 reduction identities", criterion_2),
        ("3 projection oracles", criterion_3),
        ("4 metric oracles", criterion_4),
        ("5 synthetic CCTS benchmark", criterion_5),
        ("6 UCR Earthquakes direction check", criterion_6),
        ("7 interpretability plumbing", criterion_7),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("criterion {name}: PASS ({secs:.1}s) {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({secs:.1}s) {d}");
            }
            Outcome::NotRun(d) => println!("criterion {name}: NOT RUN {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
