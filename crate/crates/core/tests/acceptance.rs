//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use icboost::boost::{delta_scaling_check, mean_loss};
use icboost::cir::{max_cir_distribution, simulate_cir_path, CirConfig, MaxLawForm, TauGrid};
use icboost::data::build_sorted_index;
use icboost::loss::compute_derivatives;
use icboost::par::{with_threads, Execution};
use icboost::persist::{model_from_str, model_to_string};
use icboost::rng::substream;
use icboost::simlab::{
    bound_tightness_study, linear_case_experiment, root_stump_study, DgpKind, DgpSpec, Estimator,
    LinearCaseResult,
};
use icboost::tree::{best_split_for_feature, Node, NodeKind};
use icboost::{train, BoostConfig, Dataset, LossKind};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Gamma};

const SEED: u64 = 20_240_601;
const REPLICAS: usize = 1000;
const TEST_MC: usize = 1000;
const RUNTIME_BUDGET: Duration = Duration::from_secs(120);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = DgpSpec::new(DgpKind::Noise, 100, None);
    let study = root_stump_study(&spec, REPLICAS, TEST_MC, &CirConfig::default(), SEED).unwrap();
    let p = study.summary(Estimator::Adjusted).p_positive;
    let p_r = study.summary(Estimator::Training).p_positive;
    let t = start.elapsed();
    check(
        (p - 0.048).abs() <= 0.03 && t < RUNTIME_BUDGET,
        format!("null P(R_adj>0) = {p:.3} (target 0.048 +- 0.03), P(R>0) = {p_r}, {:.1}s", t.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let spec = DgpSpec::new(DgpKind::Step, 100, Some(10));
    let study = root_stump_study(&spec, REPLICAS, TEST_MC, &CirConfig::default(), SEED + 1).unwrap();
    let p = study.summary(Estimator::Adjusted).p_positive;
    let t = start.elapsed();
    check(
        p >= 0.97 && t < RUNTIME_BUDGET,
        format!("step P(R_adj>0) = {p:.3} (need >= 0.97), {:.1}s", t.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let spec = DgpSpec::new(DgpKind::Noise, 100, Some(2));
    let study = root_stump_study(&spec, REPLICAS, TEST_MC, &CirConfig::default(), SEED + 2).unwrap();
    let adj = study.summary(Estimator::Adjusted).mean;
    let oracle = study.summary(Estimator::Oracle).mean;
    let (diff, se) = study.paired_difference(Estimator::Adjusted, Estimator::Oracle);
    let se = se.unwrap();
    check(
        diff.abs() <= 3.0 * se,
        format!(
            "binary mean R_adj = {:.4}, mean R0 = {:.4} (x100), paired diff {:.4} +- {:.4} (x100)",
            100.0 * adj,
            100.0 * oracle,
            100.0 * diff,
            100.0 * se
        ),
    )
}

fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn criterion_4() -> Outcome {
    let cfg = CirConfig::default();
    // value after a run of exact transitions from a stationary start
    let grid = TauGrid::new((0..50).map(|k| 0.1 * k as f64).collect()).unwrap();
    let samples: Vec<f64> = (0..100_000u64)
        .map(|p| *simulate_cir_path(&grid, &mut substream(SEED, p)).last().unwrap())
        .collect();
    let reference = Gamma::new(0.5, 0.5).unwrap();
    let ks = ks_distance(samples, |x| reference.cdf(x));

    let dense = max_cir_distribution(&TauGrid::dense_full_range(1000, cfg.epsilon).unwrap(), &cfg).unwrap();
    let single = max_cir_distribution(&TauGrid::new(vec![3.0]).unwrap(), &cfg).unwrap();
    check(
        ks < 0.02
            && (7.0..=8.0).contains(&dense.mean())
            && single.form == MaxLawForm::ExactGammaSinglePoint
            && single.mean() == 1.0,
        format!(
            "KS = {ks:.4} (< 0.02), dense-grid E max = {:.3} (in [7, 8]), one-point mean = {}",
            dense.mean(),
            single.mean()
        ),
    )
}

fn criterion_5() -> Outcome {
    let a_list = [1, 4, 9, 49, 99];
    let points = bound_tightness_study(100, &a_list, REPLICAS, &CirConfig::default(), SEED + 5).unwrap();
    let within = points.iter().all(|p| p.z_score().abs() <= 3.0);
    let monotone = points.windows(2).all(|w| w[1].c_stump >= w[0].c_stump);
    let table: Vec<String> = points
        .iter()
        .map(|p| format!("a={}: mc {:.4} vs {:.4} (z {:+.2})", p.a, p.mc_optimism, p.c_stump, p.z_score()))
        .collect();
    check(within && monotone, format!("{}; nondecreasing: {monotone}", table.join(", ")))
}

fn case_1_runs() -> (Vec<LinearCaseResult>, Duration) {
    let start = Instant::now();
    let runs = (1..=5)
        .map(|seed| linear_case_experiment(1, seed, &BoostConfig::default(), None).unwrap())
        .collect();
    (runs, start.elapsed())
}

fn criterion_6(runs: &[LinearCaseResult], elapsed: Duration) -> Outcome {
    let k = runs.len() as f64;
    let mse = runs.iter().map(|r| r.test_mse).sum::<f64>() / k;
    let constant = runs.iter().map(|r| r.constant_mse).sum::<f64>() / k;
    let trees: Vec<usize> = runs.iter().map(|r| r.n_trained).collect();
    let terminated = runs
        .iter()
        .all(|r| r.stop_reason != Some(icboost::StopReason::IterationCap));
    check(
        (0.95..=1.12).contains(&mse)
            && trees.iter().all(|t| (150..=800).contains(t))
            && terminated
            && (constant - 2.34).abs() <= 0.25
            && elapsed < RUNTIME_BUDGET,
        format!(
            "test MSE {mse:.3} (in [0.95, 1.12]), trees {trees:?} (in [150, 800]), constant MSE {constant:.3} \
             (2.34 +- 0.25), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn criterion_7(runs: &[LinearCaseResult]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        let leaves = &r.leaf_counts;
        let k = leaves.len().min(10);
        let first = median(leaves[..k].to_vec());
        let last = median(leaves[leaves.len() - k..].to_vec());
        let final_leaves = leaves.last().copied().unwrap_or(0);
        pass &= first > last && final_leaves <= 3;
        parts.push(format!("seed {}: {first} > {last}, final {final_leaves}", seed + 1));
    }
    check(pass, parts.join("; "))
}

/// Largest exact squared-error training-loss decrease over all thresholds of
/// feature 0, computed from fitted leaf means.
fn brute_force_best_decrease(x: &[f64], y: &[f64], base: f64) -> f64 {
    let n = y.len() as f64;
    let loss = |rows: &[usize]| -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let m = rows.iter().map(|&i| y[i] - base).sum::<f64>() / rows.len() as f64;
        rows.iter().map(|&i| (y[i] - base - m).powi(2)).sum()
    };
    let all: Vec<usize> = (0..y.len()).collect();
    let root = loss(&all);
    let mut values = x.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values[..values.len() - 1]
        .iter()
        .map(|&t| {
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i] <= t);
            (root - loss(&l) - loss(&r)) / n
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn collect_reports(node: &Node, out: &mut Vec<icboost::OptimismReport>) {
    out.extend(node.report);
    if let NodeKind::Internal { left, right, .. } = &node.kind {
        collect_reports(left, out);
        collect_reports(right, out);
    }
}

fn small_data(seed: u64, n: usize) -> Dataset {
    let mut rng = substream(seed, 0);
    let x0: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).floor()).collect();
    let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y = x0
        .iter()
        .map(|&v| (v / 5.0).sin() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    Dataset::from_columns(vec![x0, x1], y).unwrap()
}

fn criterion_8(case_1: &LinearCaseResult) -> Outcome {
    let cfg = CirConfig {
        n_paths: 300,
        ..CirConfig::default()
    };
    let mut failures = Vec::new();

    // split gain against the exact loss difference
    let mut worst_gain = 0.0f64;
    for seed in 0..30 {
        let d = small_data(seed, 60);
        let base = 0.3;
        let derivs = compute_derivatives(LossKind::SquaredError, d.response(), &vec![base; d.n()]).unwrap();
        let index = build_sorted_index(&d);
        let rows: Vec<usize> = (0..d.n()).collect();
        let r = best_split_for_feature(&rows, 0, &derivs, &d, &index).unwrap().reduction;
        worst_gain = worst_gain.max((r - brute_force_best_decrease(d.column(0), d.response(), base)).abs());
    }
    if worst_gain > 1e-10 {
        failures.push(format!("gain error {worst_gain:e}"));
    }

    // learning-rate scaling, adjusted-gain identity, monotone training loss
    let mut worst_scale = 0.0f64;
    let mut worst_identity = 0.0f64;
    let mut monotone = true;
    for seed in 0..5 {
        let d = small_data(100 + seed, 150);
        let model = train(&d, &BoostConfig { learning_rate: 0.2, cir: cfg, seed, ..BoostConfig::default() }).unwrap();
        let mut prev = model.trace.initial_loss;
        for rec in &model.trace.iterations {
            monotone &= rec.train_loss <= prev;
            prev = rec.train_loss;
        }
        let derivs =
            compute_derivatives(LossKind::SquaredError, d.response(), &vec![model.initial_prediction; d.n()]).unwrap();
        if let Some(tree) = model.trees.first() {
            for delta in [1.0, 0.5, 0.2, 0.01] {
                let (lhs, rhs) = delta_scaling_check(tree, d.features(), &derivs, delta);
                worst_scale = worst_scale.max((lhs - rhs).abs());
            }
        }
        let mut reports = Vec::new();
        for tree in &model.trees {
            collect_reports(tree, &mut reports);
        }
        for r in reports.iter().filter(|r| r.best_feature.is_some()) {
            worst_identity = worst_identity.max((r.adjusted_gain - (r.reduction + r.c_root - r.c_stump)).abs());
        }
    }
    if worst_scale > 1e-10 {
        failures.push(format!("scaling error {worst_scale:e}"));
    }
    if worst_identity != 0.0 {
        failures.push(format!("adjusted-gain identity off by {worst_identity:e}"));
    }
    if !monotone || case_1.test_loss_path.is_empty() {
        failures.push("training loss increased".into());
    }

    // serialization round trip on a trained model
    let d = small_data(7, 200);
    let model = train(&d, &BoostConfig { learning_rate: 0.1, cir: cfg, ..BoostConfig::default() }).unwrap();
    let text = model_to_string(&model);
    let back = model_from_str(&text).unwrap();
    let before = model.predict(d.features()).unwrap();
    let after = back.predict(d.features()).unwrap();
    if !before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()) || model_to_string(&back) != text {
        failures.push("round trip not bit-exact".into());
    }

    // determinism across execution modes and thread counts
    let seq_cfg = BoostConfig {
        learning_rate: 0.1,
        cir: CirConfig { execution: Execution::Sequential, ..cfg },
        ..BoostConfig::default()
    };
    let par_cfg = BoostConfig { cir: cfg, ..seq_cfg };
    let seq = train(&d, &seq_cfg).unwrap();
    let one = with_threads(1, || train(&d, &par_cfg).unwrap());
    let many = with_threads(4, || train(&d, &par_cfg).unwrap());
    if seq != one || one != many || model_to_string(&seq) != text {
        failures.push("thread count changed the model".into());
    }
    let study_one = with_threads(1, || {
        root_stump_study(&DgpSpec::new(DgpKind::Noise, 50, None), 20, 50, &cfg, 3).unwrap()
    });
    let study_many = with_threads(4, || {
        root_stump_study(&DgpSpec::new(DgpKind::Noise, 50, None), 20, 50, &cfg, 3).unwrap()
    });
    if study_one != study_many {
        failures.push("thread count changed a study".into());
    }

    let train_loss = mean_loss(LossKind::SquaredError, d.response(), &before).unwrap();
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "gain err {worst_gain:.1e}, scaling err {worst_scale:.1e}, identity exact, round trip exact, \
                 1 = 4 threads (train loss {train_loss:.4})"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |k: usize, o: Outcome| {
        println!("criterion {k}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    let (runs, elapsed) = case_1_runs();
    report(6, criterion_6(&runs, elapsed));
    report(7, criterion_7(&runs));
    report(8, criterion_8(&runs[0]));

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
