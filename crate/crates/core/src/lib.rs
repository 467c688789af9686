//! Gradient tree boosting in which both tree depth and ensemble size are
//! chosen by an information criterion instead of cross validation.
//!
//! A leaf is split only when the training-loss reduction of the best stump
//! exceeds the extra optimism that split search buys, estimated from the
//! maximum of a Cox-Ingersoll-Ross process over the feature's split points.
//! Boosting stops at the first tree whose root fails the same test, scaled by
//! the learning rate.
//!
//! ```no_run
//! use icboost::{load_csv, train, BoostConfig};
//!
//! let data = load_csv("train.csv", "y")?;
//! let model = train(&data, &BoostConfig::default())?;
//! println!("{} trees", model.n_trained());
//! # Ok::<(), icboost::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boost;
pub mod cir;
pub mod data;
pub mod error;
pub mod loss;
pub mod par;
pub mod persist;
pub mod rng;
pub mod simlab;
pub mod tree;

pub use boost::{train, BoostConfig, Ensemble, StopReason, TrainingTrace};
pub use cir::CirConfig;
pub use data::{load_csv, load_feature_csv, Dataset, FeatureMatrix};
pub use error::{Error, Result};
pub use loss::LossKind;
pub use par::Execution;
pub use persist::{load_model, save_model};
pub use tree::{Node, OptimismReport};
