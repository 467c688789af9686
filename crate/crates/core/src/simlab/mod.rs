//! Simulation studies: data-generating processes, root-versus-stump decision
//! tables with a Monte-Carlo test-loss oracle, and boosting experiments on a
//! linear signal.

mod dgp;
mod studies;

pub use dgp::{generate_dgp, Dependence, DgpKind, DgpSpec};
pub use studies::{
    bound_tightness_study, default_case_features, fit_root_stump, linear_case_experiment, mean_stderr,
    multi_feature_bias_curve, root_stump_study, write_curve_csv, write_linear_case_csv, write_tightness_csv,
    write_to_path, CurvePoint, Estimator, EstimatorSummary, FittedStump, LinearCaseResult, ReplicaOutcome,
    StudyResult, TightnessPoint,
};
