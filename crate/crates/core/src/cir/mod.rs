//! Maximum of the Cox-Ingersoll-Ross limit process over a feature's split
//! points, and the multi-feature stump-optimism integral built from it.

mod gumbel;
mod integral;
mod law;
mod sim;
mod tau;

pub use gumbel::{fit_gumbel, Gumbel, EULER_GAMMA};
pub use integral::{multi_feature_stump_optimism, stump_optimism_quadrature};
pub use law::{max_cir_distribution, max_cir_distribution_seeded, CirMaxDistribution, LawCache, MaxLawForm};
pub use sim::{simulate_bridge_ratio_max, simulate_cir_path, simulate_cir_path_max, simulate_maxima};
pub use tau::{node_tau_grid, tau_horizon, tau_transform, TauGrid};

pub(crate) use tau::boundary_counts;

use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirConfig {
    /// Quantile clamp for the time transform.
    pub epsilon: f64,
    /// Monte-Carlo paths per fitted law.
    pub n_paths: usize,
    pub seed: u64,
    /// Trapezoidal nodes for the multi-feature integral.
    pub integral_grid_points: usize,
    /// Reuse fitted laws across nodes and features with identical grids.
    pub cache_laws: bool,
    pub execution: Execution,
}

impl Default for CirConfig {
    fn default() -> Self {
        CirConfig {
            epsilon: 1e-7,
            n_paths: 1000,
            seed: 1,
            integral_grid_points: 1000,
            cache_laws: false,
            execution: Execution::Parallel,
        }
    }
}

impl CirConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!("epsilon {} must lie in (0, 0.5)", self.epsilon)));
        }
        if self.n_paths < 2 {
            return Err(Error::Config(format!("need at least 2 paths, got {}", self.n_paths)));
        }
        if self.integral_grid_points < 10 {
            return Err(Error::Config(format!(
                "need at least 10 integration points, got {}",
                self.integral_grid_points
            )));
        }
        Ok(())
    }
}
