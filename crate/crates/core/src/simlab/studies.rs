use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::boost::{mean_loss, train, BoostConfig, StopReason};
use crate::cir::{CirConfig, LawCache};
use crate::data::{build_sorted_index, Dataset};
use crate::error::{Error, Result};
use crate::loss::{compute_derivatives, LossKind};
use crate::par::map_indexed;
use crate::rng::{derive_seed, substream};
use crate::tree::{best_split_for_feature, OptimismReport, TreeBuilder};

use super::dgp::{generate_dgp, Dependence, DgpKind, DgpSpec};

/// Root and best stump fitted by squared error from a zero start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedStump {
    pub root_weight: f64,
    pub feature: usize,
    pub threshold: f64,
    pub left_weight: f64,
    pub right_weight: f64,
}

impl FittedStump {
    #[inline]
    pub fn predict(&self, x: f64) -> f64 {
        if x <= self.threshold {
            self.left_weight
        } else {
            self.right_weight
        }
    }
}

/// Evaluates the root of `data` and fits the stump on the best split.
pub fn fit_root_stump(data: &Dataset, cfg: &CirConfig) -> Result<(OptimismReport, FittedStump)> {
    let y = data.response();
    let derivs = compute_derivatives(LossKind::SquaredError, y, &vec![0.0; y.len()])?;
    let index = build_sorted_index(data);
    let cache = cfg.cache_laws.then(LawCache::new);
    let report = TreeBuilder::new(data, &index, &derivs, cfg)
        .with_cache(cache.as_ref())
        .evaluate_node(&(0..data.n()).collect::<Vec<_>>(), 1)?;
    let feature = report
        .best_feature
        .ok_or_else(|| Error::domain("no feature takes two distinct values"))?;
    let rows: Vec<usize> = (0..data.n()).collect();
    let split = best_split_for_feature(&rows, feature, &derivs, data, &index).expect("splittable feature");
    let stump = FittedStump {
        root_weight: y.iter().sum::<f64>() / y.len() as f64,
        feature,
        threshold: split.threshold,
        left_weight: -split.left.g_sum / split.left.h_sum,
        right_weight: -split.right.g_sum / split.right.h_sum,
    };
    Ok((report, stump))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaOutcome {
    /// Training-loss reduction `R` of the best stump.
    pub reduction: f64,
    /// `R + C_root - C_stump`.
    pub adjusted_gain: f64,
    /// Monte-Carlo test-loss reduction of the fitted stump over the root.
    pub oracle: f64,
    pub c_root: f64,
    pub c_stump: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Training reduction `R`.
    Training,
    /// Oracle test reduction `R0`.
    Oracle,
    /// Adjusted gain `R~0`.
    Adjusted,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Training, Estimator::Oracle, Estimator::Adjusted];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Training => "R",
            Estimator::Oracle => "R0",
            Estimator::Adjusted => "R_adj",
        }
    }

    fn of(self, o: &ReplicaOutcome) -> f64 {
        match self {
            Estimator::Training => o.reduction,
            Estimator::Oracle => o.oracle,
            Estimator::Adjusted => o.adjusted_gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// Mean reduction `E`, unscaled.
    pub mean: f64,
    /// Fraction of replicas with a positive reduction.
    pub p_positive: f64,
    /// Standard error of `mean`; `None` with a single replica.
    pub stderr: Option<f64>,
    pub replicas: usize,
}

/// Mean and standard error (`None` below two values).
pub fn mean_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub outcomes: Vec<ReplicaOutcome>,
}

impl StudyResult {
    pub fn replicas(&self) -> usize {
        self.outcomes.len()
    }

    pub fn values(&self, e: Estimator) -> Vec<f64> {
        self.outcomes.iter().map(|o| e.of(o)).collect()
    }

    pub fn summary(&self, e: Estimator) -> EstimatorSummary {
        let values = self.values(e);
        let (mean, stderr) = mean_stderr(&values);
        EstimatorSummary {
            estimator: e,
            mean,
            p_positive: values.iter().filter(|&&v| v > 0.0).count() as f64 / values.len() as f64,
            stderr,
            replicas: values.len(),
        }
    }

    pub fn summaries(&self) -> Vec<EstimatorSummary> {
        Estimator::ALL.iter().map(|&e| self.summary(e)).collect()
    }

    /// Mean of `a - b` per replica with its standard error.
    pub fn paired_difference(&self, a: Estimator, b: Estimator) -> (f64, Option<f64>) {
        let diffs: Vec<f64> = self.outcomes.iter().map(|o| a.of(o) - b.of(o)).collect();
        mean_stderr(&diffs)
    }

    /// Columns `estimator,E,P,stderr,replicas`; the stderr column is dropped
    /// for a single replica.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let with_se = self.replicas() >= 2;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["estimator", "E", "P"];
        if with_se {
            header.push("stderr");
        }
        header.push("replicas");
        w.write_record(&header).map_err(csv_error)?;
        for s in self.summaries() {
            let mut row = vec![s.estimator.name().to_string(), s.mean.to_string(), s.p_positive.to_string()];
            if let Some(se) = s.stderr.filter(|_| with_se) {
                row.push(se.to_string());
            }
            row.push(s.replicas.to_string());
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::domain(format!("csv: {other:?}")),
    }
}

fn check_study_spec(spec: &DgpSpec, replicas: usize) -> Result<()> {
    spec.validate()?;
    if replicas < 1 {
        return Err(Error::Config("need at least one replica".into()));
    }
    if spec.dependence != Dependence::Independent {
        return Err(Error::Config("studies need independent features".into()));
    }
    Ok(())
}

fn replica_cfg(cfg: &CirConfig, seed: u64, r: usize) -> CirConfig {
    CirConfig {
        seed: derive_seed(seed, &[r as u64, 1]),
        ..*cfg
    }
}

fn run_replica(spec: &DgpSpec, test_mc: usize, cfg: &CirConfig, seed: u64, r: usize) -> Result<ReplicaOutcome> {
    let data_seed = derive_seed(seed, &[r as u64, 0]);
    let data = generate_dgp(spec, data_seed)?;
    let (report, stump) = fit_root_stump(&data, &replica_cfg(cfg, seed, r))?;

    let mut rng = substream(data_seed, 2);
    let mut diff = 0.0;
    for _ in 0..test_mc {
        let x0 = spec.draw_feature(&mut rng);
        let xj = if stump.feature == 0 { x0 } else { spec.draw_feature(&mut rng) };
        let y0 = spec.draw_response(x0, &mut rng);
        diff += (y0 - stump.root_weight).powi(2) - (y0 - stump.predict(xj)).powi(2);
    }
    Ok(ReplicaOutcome {
        reduction: report.reduction,
        adjusted_gain: report.adjusted_gain,
        oracle: diff / test_mc as f64,
        c_root: report.c_root,
        c_stump: report.c_stump,
    })
}

/// Root-versus-stump decision study: per replica, simulate data, evaluate the
/// root, and estimate the true test-loss reduction with `test_mc` fresh draws.
pub fn root_stump_study(
    spec: &DgpSpec,
    replicas: usize,
    test_mc: usize,
    cfg: &CirConfig,
    seed: u64,
) -> Result<StudyResult> {
    check_study_spec(spec, replicas)?;
    if test_mc < 1 {
        return Err(Error::Config("need at least one test draw".into()));
    }
    let outcomes = map_indexed(cfg.execution, replicas, |r| run_replica(spec, test_mc, cfg, seed, r))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyResult { outcomes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub m: usize,
    pub reduction: (f64, f64),
    pub adjusted: (f64, f64),
    pub oracle: (f64, f64),
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let (mean, se) = mean_stderr(values);
    (mean, se.map_or(0.0, |se| se * (values.len() as f64).sqrt()))
}

/// Root-versus-stump reductions as the number of uninformative features
/// grows; each entry is `(mean, sd)` over replicas.
pub fn multi_feature_bias_curve(
    m_list: &[usize],
    a_plus_1: Option<usize>,
    n: usize,
    replicas: usize,
    test_mc: usize,
    cfg: &CirConfig,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    m_list
        .iter()
        .map(|&m| {
            if m < 1 {
                return Err(Error::Config("feature counts must be at least 1".into()));
            }
            let spec = DgpSpec {
                m_noise: m - 1,
                ..DgpSpec::new(DgpKind::Noise, n, a_plus_1)
            };
            let study = root_stump_study(&spec, replicas, test_mc, cfg, seed)?;
            Ok(CurvePoint {
                m,
                reduction: mean_sd(&study.values(Estimator::Training)),
                adjusted: mean_sd(&study.values(Estimator::Adjusted)),
                oracle: mean_sd(&study.values(Estimator::Oracle)),
            })
        })
        .collect()
}

/// Long format: `m,series,mean,sd`.
pub fn write_curve_csv(points: &[CurvePoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "series", "mean", "sd"]).map_err(csv_error)?;
    for p in points {
        for (name, (mean, sd)) in [("R", p.reduction), ("R0", p.oracle), ("R_adj", p.adjusted)] {
            w.write_record([p.m.to_string(), name.to_string(), mean.to_string(), sd.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightnessPoint {
    /// Number of split points.
    pub a: usize,
    /// Monte-Carlo stump optimism: mean of test minus training loss.
    pub mc_optimism: f64,
    pub mc_stderr: f64,
    /// Mean approximate stump optimism `C_root (1 + E max S)`.
    pub c_stump: f64,
    pub c_stump_stderr: f64,
    /// Mean of `C_stump / C_root`.
    pub ratio: f64,
}

impl TightnessPoint {
    /// Distance between the two optimisms in combined standard errors.
    pub fn z_score(&self) -> f64 {
        (self.mc_optimism - self.c_stump) / self.mc_stderr.hypot(self.c_stump_stderr)
    }
}

/// Stump optimism on pure noise with one feature of `a + 1` levels, against
/// its approximation. The test loss of each fitted stump is its exact
/// expectation over a fresh `(x, y)` draw, `sigma^2 + sum_leaf p_leaf
/// w_leaf^2`; the training loss is corrected by the zero-mean control variate
/// `mean(y^2) - sigma^2`.
pub fn bound_tightness_study(
    n: usize,
    a_list: &[usize],
    replicas: usize,
    cfg: &CirConfig,
    seed: u64,
) -> Result<Vec<TightnessPoint>> {
    a_list
        .iter()
        .map(|&a| {
            let spec = DgpSpec::new(DgpKind::Noise, n, Some(a + 1));
            check_study_spec(&spec, replicas)?;
            let levels = a + 1;
            let per_replica = map_indexed(cfg.execution, replicas, |r| -> Result<(f64, f64, f64)> {
                let data = generate_dgp(&spec, derive_seed(seed, &[r as u64, 0]))?;
                let (report, stump) = fit_root_stump(&data, &replica_cfg(cfg, seed, r))?;
                let x = data.column(0);
                let y = data.response();
                let train_loss =
                    x.iter().zip(y).map(|(&xi, &yi)| (yi - stump.predict(xi)).powi(2)).sum::<f64>() / n as f64;
                // levels at or below the threshold are routed left
                let left_levels = (0..levels).filter(|&k| (k as f64 + 0.5) / levels as f64 <= stump.threshold).count();
                let p_left = left_levels as f64 / levels as f64;
                let test_loss = spec.sigma * spec.sigma
                    + p_left * stump.left_weight.powi(2)
                    + (1.0 - p_left) * stump.right_weight.powi(2);
                // control variate: the mean square response has known
                // expectation sigma^2 and carries most of the training-loss noise
                let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
                let optimism = test_loss - train_loss + (mean_sq - spec.sigma * spec.sigma);
                Ok((optimism, report.c_stump, report.c_stump / report.c_root))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let (mc, mc_se) = mean_stderr(&per_replica.iter().map(|t| t.0).collect::<Vec<_>>());
            let (c, c_se) = mean_stderr(&per_replica.iter().map(|t| t.1).collect::<Vec<_>>());
            let ratio = per_replica.iter().map(|t| t.2).sum::<f64>() / replicas as f64;
            Ok(TightnessPoint {
                a,
                mc_optimism: mc,
                mc_stderr: mc_se.unwrap_or(0.0),
                c_stump: c,
                c_stump_stderr: c_se.unwrap_or(0.0),
                ratio,
            })
        })
        .collect()
}

/// Long format: `a,series,mean,stderr`.
pub fn write_tightness_csv(points: &[TightnessPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a", "series", "mean", "stderr"]).map_err(csv_error)?;
    for p in points {
        for (name, mean, se) in [
            ("mc_optimism", p.mc_optimism, p.mc_stderr),
            ("c_stump", p.c_stump, p.c_stump_stderr),
        ] {
            w.write_record([p.a.to_string(), name.to_string(), mean.to_string(), se.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCaseResult {
    pub case: u8,
    pub features: usize,
    pub test_mse: f64,
    /// Test loss of the training-mean constant.
    pub constant_mse: f64,
    pub n_trained: usize,
    pub stop_reason: Option<StopReason>,
    pub leaf_counts: Vec<usize>,
    /// Test loss after each accepted tree.
    pub test_loss_path: Vec<f64>,
    pub runtime: Duration,
}

/// Feature count used by a case unless overridden.
pub fn default_case_features(case: u8) -> usize {
    if case == 1 {
        1
    } else {
        10_000
    }
}

/// Linear-signal experiment: `y ~ N(x_1, 1)`, `x_1 ~ U(0, 4)`, 1000 training
/// and 1000 test rows. Case 1 has the one feature; case 2 adds independent
/// `U(0, 4)` noise features, case 3 autoregressive ones (`m` features in
/// total).
pub fn linear_case_experiment(case: u8, seed: u64, cfg: &BoostConfig, m: Option<usize>) -> Result<LinearCaseResult> {
    let m = m.unwrap_or_else(|| default_case_features(case));
    let dependence = match case {
        1 => {
            if m != 1 {
                return Err(Error::Config("case 1 has exactly one feature".into()));
            }
            Dependence::Independent
        }
        2 => Dependence::Independent,
        3 => Dependence::Autoregressive,
        other => return Err(Error::Config(format!("unknown case {other}"))),
    };
    if m < 1 {
        return Err(Error::Config("need at least one feature".into()));
    }
    let spec = DgpSpec {
        m_noise: m - 1,
        dependence,
        ..DgpSpec::new(DgpKind::LinearU04, 1000, None)
    };
    let train_data = generate_dgp(&spec, derive_seed(seed, &[0]))?;
    let test_data = generate_dgp(&spec, derive_seed(seed, &[1]))?;
    let cfg = BoostConfig { seed, ..*cfg };

    let start = Instant::now();
    let model = train(&train_data, &cfg)?;
    let runtime = start.elapsed();

    let y_test = test_data.response();
    let train_mean = train_data.response().iter().sum::<f64>() / train_data.n() as f64;
    let constant_mse = mean_loss(LossKind::SquaredError, y_test, &vec![train_mean; y_test.len()])?;

    let x = test_data.features();
    let mut preds = vec![model.initial_prediction; y_test.len()];
    let mut test_loss_path = Vec::with_capacity(model.n_trained());
    for tree in &model.trees {
        for (i, p) in preds.iter_mut().enumerate() {
            *p += model.learning_rate * tree.predict_with(|j| x.get(i, j));
        }
        test_loss_path.push(mean_loss(LossKind::SquaredError, y_test, &preds)?);
    }
    let test_mse = mean_loss(LossKind::SquaredError, y_test, &preds)?;
    Ok(LinearCaseResult {
        case,
        features: m,
        test_mse,
        constant_mse,
        n_trained: model.n_trained(),
        stop_reason: model.trace.stop_reason,
        leaf_counts: model.trace.leaf_counts(),
        test_loss_path,
        runtime,
    })
}

pub fn write_linear_case_csv(results: &[(u64, LinearCaseResult)], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "seed", "features", "test_mse", "constant_mse", "n_trained", "runtime_s"])
        .map_err(csv_error)?;
    for (seed, r) in results {
        w.write_record([
            r.case.to_string(),
            seed.to_string(),
            r.features.to_string(),
            r.test_mse.to_string(),
            r.constant_mse.to_string(),
            r.n_trained.to_string(),
            format!("{:.3}", r.runtime.as_secs_f64()),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Writes to a file, mapping failures to I/O errors naming the path.
pub fn write_to_path(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
