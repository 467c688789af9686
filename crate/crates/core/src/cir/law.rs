use std::collections::HashMap;
use std::sync::Mutex;

use statrs::function::erf::{erf, erf_inv};

use crate::error::Result;
use crate::rng::{derive_seed, splitmix64};

use super::gumbel::{fit_gumbel, Gumbel};
use super::sim::simulate_maxima;
use super::{CirConfig, TauGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxLawForm {
    /// One split point: the maximum is the stationary Gamma(1/2, 2) law itself.
    ExactGammaSinglePoint,
    /// Several split points: a Gumbel law fitted to simulated maxima.
    Gumbel,
}

/// Law of `max_k S(tau_k)` over one feature's split grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirMaxDistribution {
    pub form: MaxLawForm,
    pub location: f64,
    pub scale: f64,
}

impl CirMaxDistribution {
    pub const EXACT_GAMMA: CirMaxDistribution = CirMaxDistribution {
        form: MaxLawForm::ExactGammaSinglePoint,
        location: 0.0,
        scale: 2.0,
    };

    pub fn gumbel(g: Gumbel) -> Self {
        CirMaxDistribution {
            form: MaxLawForm::Gumbel,
            location: g.location,
            scale: g.scale,
        }
    }

    fn as_gumbel(&self) -> Gumbel {
        Gumbel {
            location: self.location,
            scale: self.scale,
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self.form {
            MaxLawForm::ExactGammaSinglePoint => {
                if z <= 0.0 {
                    0.0
                } else {
                    erf((z / 2.0).sqrt())
                }
            }
            MaxLawForm::Gumbel => self.as_gumbel().cdf(z),
        }
    }

    /// `ln cdf(z)`; `-inf` below the support.
    pub fn ln_cdf(&self, z: f64) -> f64 {
        match self.form {
            MaxLawForm::ExactGammaSinglePoint => self.cdf(z).ln(),
            MaxLawForm::Gumbel => self.as_gumbel().ln_cdf(z),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self.form {
            MaxLawForm::ExactGammaSinglePoint => {
                let r = erf_inv(p);
                2.0 * r * r
            }
            MaxLawForm::Gumbel => self.as_gumbel().quantile(p),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.form {
            MaxLawForm::ExactGammaSinglePoint => 1.0,
            MaxLawForm::Gumbel => self.as_gumbel().mean(),
        }
    }
}

/// Law of the CIR maximum on `grid`, simulated with `cfg.seed`.
pub fn max_cir_distribution(grid: &TauGrid, cfg: &CirConfig) -> Result<CirMaxDistribution> {
    max_cir_distribution_seeded(grid, cfg, cfg.seed)
}

pub fn max_cir_distribution_seeded(grid: &TauGrid, cfg: &CirConfig, seed: u64) -> Result<CirMaxDistribution> {
    cfg.validate()?;
    if grid.len() == 1 {
        return Ok(CirMaxDistribution::EXACT_GAMMA);
    }
    let maxima = simulate_maxima(grid, cfg.n_paths, seed, cfg.execution);
    Ok(CirMaxDistribution::gumbel(fit_gumbel(&maxima)?))
}

/// Memo of fitted laws keyed by the exact grid. Cached laws are simulated
/// with a seed derived from the grid itself, so a lookup returns the same law
/// no matter which node or feature asked first.
#[derive(Debug, Default)]
pub struct LawCache {
    laws: Mutex<HashMap<Vec<u64>, CirMaxDistribution>>,
}

impl LawCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.laws.lock().expect("law cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_fit(&self, grid: &TauGrid, cfg: &CirConfig) -> Result<CirMaxDistribution> {
        let key: Vec<u64> = grid.taus().iter().map(|t| t.to_bits()).collect();
        if let Some(law) = self.laws.lock().expect("law cache poisoned").get(&key) {
            return Ok(*law);
        }
        let grid_hash = key.iter().fold(key.len() as u64, |acc, &b| splitmix64(acc ^ b));
        let law = max_cir_distribution_seeded(grid, cfg, derive_seed(cfg.seed, &[grid_hash]))?;
        self.laws
            .lock()
            .expect("law cache poisoned")
            .entry(key)
            .or_insert(law);
        Ok(law)
    }
}
