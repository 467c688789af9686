//! The boosting loop: fit a tree to the current derivatives, keep it while the
//! learning-rate-scaled root criterion predicts a lower generalization loss,
//! and stop at the first tree that fails.

use log::warn;

use crate::cir::{CirConfig, LawCache};
use crate::data::{build_sorted_index, Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::loss::{compute_derivatives, initial_prediction, loss_value, sigmoid, validate_response, DerivativeBuffers, LossKind};
use crate::tree::{Node, OptimismReport, TreeBuilder};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    pub loss: LossKind,
    /// Shrinkage applied to every tree, in `(0, 1]`.
    pub learning_rate: f64,
    /// Hard cap on boosting iterations.
    pub max_iterations: usize,
    pub cir: CirConfig,
    /// Base seed of all Monte-Carlo work; overrides `cir.seed`.
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            loss: LossKind::SquaredError,
            learning_rate: 0.01,
            max_iterations: 50_000,
            cir: CirConfig::default(),
            seed: 1,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning rate {} must lie in (0, 1]",
                self.learning_rate
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        self.cir.validate()
    }
}

/// Left-hand side of the boosting stop rule for a tree whose root report is
/// `root`: `delta (2 - delta) R_1 + delta (C_root,1 - C_stump,1)`.
pub fn scaled_root_gain(root: &OptimismReport, learning_rate: f64) -> f64 {
    let d = learning_rate;
    d * (2.0 - d) * root.reduction + d * (root.c_root - root.c_stump)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The next tree failed the scaled root criterion.
    CriterionFailed,
    /// The next tree's root did not split, so it would only add a constant.
    RootNotSplit,
    IterationCap,
}

/// Per-iteration record of an accepted tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub root: OptimismReport,
    pub scaled_gain: f64,
    pub leaves: usize,
    /// Mean training loss after adding the tree.
    pub train_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub initial_loss: f64,
    pub iterations: Vec<IterationRecord>,
    /// Root report of the rejected tree, if training stopped on the criterion.
    pub rejected_root: Option<OptimismReport>,
    pub stop_reason: Option<StopReason>,
}

impl TrainingTrace {
    pub fn leaf_counts(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.leaves).collect()
    }

    pub fn hit_iteration_cap(&self) -> bool {
        self.stop_reason == Some(StopReason::IterationCap)
    }

    pub fn final_train_loss(&self) -> f64 {
        self.iterations.last().map_or(self.initial_loss, |r| r.train_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub initial_prediction: f64,
    pub feature_count: usize,
    /// Unscaled trees; each contributes `learning_rate * leaf weight`.
    pub trees: Vec<Node>,
    pub trace: TrainingTrace,
}

impl Ensemble {
    pub fn n_trained(&self) -> usize {
        self.trees.len()
    }

    #[inline]
    fn predict_with(&self, value: impl Fn(usize) -> f64 + Copy) -> f64 {
        let mut p = self.initial_prediction;
        for tree in &self.trees {
            p += self.learning_rate * tree.predict_with(value);
        }
        p
    }

    /// Raw scores (log-odds for log loss).
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.n_cols() != self.feature_count {
            return Err(Error::Shape {
                expected: self.feature_count,
                got: features.n_cols(),
            });
        }
        Ok((0..features.n_rows())
            .map(|i| self.predict_with(|j| features.get(i, j)))
            .collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_count {
            return Err(Error::Shape {
                expected: self.feature_count,
                got: row.len(),
            });
        }
        Ok(self.predict_with(|j| row[j]))
    }

    /// Class-1 probabilities for log-loss models; raw scores otherwise.
    pub fn predict_probability(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        let raw = self.predict(features)?;
        Ok(match self.loss {
            LossKind::LogLoss => raw.into_iter().map(sigmoid).collect(),
            LossKind::SquaredError => raw,
        })
    }
}

pub fn mean_loss(kind: LossKind, y: &[f64], yhat: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&a, &b) in y.iter().zip(yhat) {
        total += loss_value(kind, a, b)?;
    }
    Ok(total / y.len() as f64)
}

pub fn train(data: &Dataset, cfg: &BoostConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let y = data.response();
    validate_response(cfg.loss, y)?;
    let eta = initial_prediction(cfg.loss, y)?;
    let index = build_sorted_index(data);
    let cir = CirConfig {
        seed: cfg.seed,
        ..cfg.cir
    };
    let cache = cir.cache_laws.then(LawCache::new);
    let delta = cfg.learning_rate;

    let mut preds = vec![eta; data.n()];
    let mut trees = Vec::new();
    let mut trace = TrainingTrace {
        initial_loss: mean_loss(cfg.loss, y, &preds)?,
        ..TrainingTrace::default()
    };

    for k in 0..cfg.max_iterations {
        let derivs = compute_derivatives(cfg.loss, y, &preds)?;
        let tree = TreeBuilder::new(data, &index, &derivs, &cir)
            .with_cache(cache.as_ref())
            .with_tree_index(k as u64)
            .build()?;
        let root = tree.report.expect("built nodes carry reports");
        let scaled_gain = scaled_root_gain(&root, delta);
        if tree.is_leaf() {
            trace.stop_reason = Some(StopReason::RootNotSplit);
            trace.rejected_root = Some(root);
            break;
        }
        if !(scaled_gain > 0.0) {
            trace.stop_reason = Some(StopReason::CriterionFailed);
            trace.rejected_root = Some(root);
            break;
        }
        let features = data.features();
        for (i, p) in preds.iter_mut().enumerate() {
            *p += delta * tree.predict_with(|j| features.get(i, j));
        }
        trace.iterations.push(IterationRecord {
            root,
            scaled_gain,
            leaves: tree.leaf_count(),
            train_loss: mean_loss(cfg.loss, y, &preds)?,
        });
        trees.push(tree);
    }
    if trace.stop_reason.is_none() {
        warn!(
            "boosting stopped at the iteration cap ({}) before the stop rule fired",
            cfg.max_iterations
        );
        trace.stop_reason = Some(StopReason::IterationCap);
    }

    Ok(Ensemble {
        loss: cfg.loss,
        learning_rate: delta,
        initial_prediction: eta,
        feature_count: data.m(),
        trees,
        trace,
    })
}

/// Training-loss reduction of `tree` scaled by `learning_rate`, computed two
/// ways: directly from the per-row quadratic loss of the scaled tree (`lhs`),
/// and as `delta (2 - delta)` times the unscaled tree's reduction `(1/2n)
/// sum_t G_t^2 / H_t` (`rhs`).
pub fn delta_scaling_check(
    tree: &Node,
    features: &FeatureMatrix,
    derivs: &DerivativeBuffers,
    learning_rate: f64,
) -> (f64, f64) {
    let n = derivs.len();
    let leaves = tree.leaves();
    let mut sums = vec![(0.0, 0.0); leaves.len()];
    let mut direct = 0.0;
    for i in 0..n {
        let leaf = tree.find_leaf(|j| features.get(i, j));
        let k = leaves
            .iter()
            .position(|l| std::ptr::eq(*l, leaf))
            .expect("leaf belongs to tree");
        sums[k].0 += derivs.g[i];
        sums[k].1 += derivs.h[i];
        let step = learning_rate * leaf.weight;
        direct -= derivs.g[i] * step + 0.5 * derivs.h[i] * step * step;
    }
    let lhs = direct / n as f64;
    let unscaled: f64 = sums
        .iter()
        .filter(|(_, h)| *h > 0.0)
        .map(|(g, h)| g * g / h)
        .sum::<f64>()
        / (2.0 * n as f64);
    (lhs, learning_rate * (2.0 - learning_rate) * unscaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Execution;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn linear_data(seed: u64, n: usize) -> Dataset {
        let mut rng = substream(seed, 0);
        let x: Vec<f64> = (0..n).map(|_| 4.0 * rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|&v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        Dataset::from_columns(vec![x], y).unwrap()
    }

    fn fast_cfg(delta: f64) -> BoostConfig {
        BoostConfig {
            learning_rate: delta,
            cir: CirConfig {
                n_paths: 200,
                ..CirConfig::default()
            },
            ..BoostConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(BoostConfig { learning_rate: 0.0, ..BoostConfig::default() }.validate().is_err());
        assert!(BoostConfig { learning_rate: 1.5, ..BoostConfig::default() }.validate().is_err());
        assert!(BoostConfig { max_iterations: 0, ..BoostConfig::default() }.validate().is_err());
        assert!(BoostConfig::default().validate().is_ok());
    }

    #[test]
    fn unit_rate_reduces_to_split_criterion() {
        let r = OptimismReport {
            reduction: 0.5,
            c_root: 0.1,
            c_stump: 0.3,
            adjusted_gain: 0.3,
            best_feature: Some(0),
            best_threshold: 0.0,
            conditional_stump: 0.0,
            splittable_features: 1,
        };
        assert!((scaled_root_gain(&r, 1.0) - r.adjusted_gain).abs() < 1e-15);
    }

    #[test]
    fn empty_ensemble_predicts_constant() {
        let e = Ensemble {
            loss: LossKind::SquaredError,
            learning_rate: 0.1,
            initial_prediction: 2.5,
            feature_count: 2,
            trees: vec![],
            trace: TrainingTrace::default(),
        };
        let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![5.0, -3.0]]).unwrap();
        assert_eq!(e.predict(&x).unwrap(), vec![2.5, 2.5]);
        assert!(matches!(e.predict_row(&[1.0]), Err(Error::Shape { .. })));
        let single = Ensemble { trees: vec![Node::leaf(4.0)], ..e };
        assert_eq!(single.predict(&x).unwrap(), vec![2.5 + 0.1 * 4.0; 2]);
    }

    #[test]
    fn training_is_reproducible_and_consistent() {
        let data = linear_data(4, 300);
        let cfg = fast_cfg(0.1);
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.n_trained() > 0);
        assert!(!a.trace.hit_iteration_cap());

        // the driver's cached predictions replayed through predict
        let mut cached = vec![a.initial_prediction; data.n()];
        for tree in &a.trees {
            for (i, p) in cached.iter_mut().enumerate() {
                *p += a.learning_rate * tree.predict_with(|j| data.features().get(i, j));
            }
        }
        let replay = a.predict(data.features()).unwrap();
        assert!(cached.iter().zip(&replay).all(|(x, y)| x.to_bits() == y.to_bits()));
        let final_loss = mean_loss(LossKind::SquaredError, data.response(), &replay).unwrap();
        assert_eq!(final_loss, a.trace.final_train_loss());

        // training loss never increases
        let mut prev = a.trace.initial_loss;
        for rec in &a.trace.iterations {
            assert!(rec.train_loss <= prev);
            prev = rec.train_loss;
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let data = linear_data(6, 200);
        let seq = BoostConfig {
            cir: CirConfig { execution: Execution::Sequential, ..fast_cfg(0.2).cir },
            ..fast_cfg(0.2)
        };
        let a = train(&data, &seq).unwrap();
        let b = crate::par::with_threads(3, || train(&data, &fast_cfg(0.2)).unwrap());
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn cap_is_reported() {
        let data = linear_data(5, 200);
        let cfg = BoostConfig { max_iterations: 2, ..fast_cfg(0.01) };
        let e = train(&data, &cfg).unwrap();
        assert_eq!(e.n_trained(), 2);
        assert!(e.trace.hit_iteration_cap());
    }

    #[test]
    fn degenerate_logloss_response() {
        let data = Dataset::from_columns(vec![vec![0.0, 1.0, 2.0]], vec![1.0; 3]).unwrap();
        let cfg = BoostConfig { loss: LossKind::LogLoss, ..fast_cfg(0.1) };
        assert!(matches!(train(&data, &cfg), Err(Error::DegenerateResponse(_))));
        let data = Dataset::from_columns(vec![vec![0.0, 1.0, 2.0]], vec![1.0, 0.5, 0.0]).unwrap();
        assert!(matches!(train(&data, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn logloss_training_runs() {
        let mut rng = substream(12, 0);
        let n = 400;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if rng.random::<f64>() < 0.2 + 0.6 * v { 1.0 } else { 0.0 })
            .collect();
        let data = Dataset::from_columns(vec![x], y).unwrap();
        let cfg = BoostConfig { loss: LossKind::LogLoss, ..fast_cfg(0.3) };
        let e = train(&data, &cfg).unwrap();
        assert!(e.n_trained() >= 1);
        let p = e.predict_probability(data.features()).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    proptest! {
        #[test]
        fn scaling_identity(seed in 0u64..50, delta in 0.01..1.0f64) {
            let data = linear_data(seed, 120);
            let cfg = fast_cfg(1.0);
            let y = data.response();
            let derivs = compute_derivatives(LossKind::SquaredError, y, &vec![0.5; y.len()]).unwrap();
            let index = build_sorted_index(&data);
            let tree = TreeBuilder::new(&data, &index, &derivs, &cfg.cir).build().unwrap();
            let (lhs, rhs) = delta_scaling_check(&tree, data.features(), &derivs, delta);
            prop_assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
            let (l1, r1) = delta_scaling_check(&tree, data.features(), &derivs, 1.0);
            prop_assert!((l1 - r1).abs() <= 1e-10);
            let (lh, _) = delta_scaling_check(&tree, data.features(), &derivs, 0.5);
            prop_assert!((lh - 0.75 * r1).abs() <= 1e-10);
            let tiny = 1e-6;
            let (lt, _) = delta_scaling_check(&tree, data.features(), &derivs, tiny);
            prop_assert!((lt / tiny - 2.0 * r1).abs() <= 1e-4 * r1.abs().max(1e-12));

            // true squared-error loss decrease equals the quadratic form
            let before = mean_loss(LossKind::SquaredError, y, &vec![0.5; y.len()]).unwrap();
            let after_preds: Vec<f64> = (0..y.len())
                .map(|i| 0.5 + delta * tree.predict_with(|j| data.features().get(i, j)))
                .collect();
            let after = mean_loss(LossKind::SquaredError, y, &after_preds).unwrap();
            prop_assert!(((before - after) - lhs).abs() <= 1e-10);
        }

        #[test]
        fn acceptance_is_monotone_in_rate(reduction in 0.0..1.0f64, c_root in 0.0..1.0f64, extra in 0.0..1.0f64,
                                          d1 in 0.001..1.0f64, frac in 0.001..1.0f64) {
            let r = OptimismReport {
                reduction, c_root, c_stump: c_root + extra,
                adjusted_gain: reduction - extra,
                best_feature: Some(0), best_threshold: 0.0, conditional_stump: 0.0, splittable_features: 1,
            };
            let d2 = d1 * frac;
            if scaled_root_gain(&r, d1) > 0.0 {
                prop_assert!(scaled_root_gain(&r, d2) > 0.0);
            }
        }
    }
}
