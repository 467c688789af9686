use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Gumbel (maximum) law with location `mu` and scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gumbel {
    pub location: f64,
    pub scale: f64,
}

impl Gumbel {
    pub fn cdf(&self, z: f64) -> f64 {
        (-(-(z - self.location) / self.scale).exp()).exp()
    }

    /// `ln cdf(z)`, finite except far in the lower tail.
    pub fn ln_cdf(&self, z: f64) -> f64 {
        -(-(z - self.location) / self.scale).exp()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.location - self.scale * (-p.ln()).ln()
    }

    pub fn mean(&self) -> f64 {
        self.location + EULER_GAMMA * self.scale
    }
}

/// Method-of-moments fit: `beta = sd * sqrt(6) / pi`, `mu = mean - gamma * beta`.
pub fn fit_gumbel(samples: &[f64]) -> Result<Gumbel> {
    if samples.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateFit("samples have zero spread".into()));
    }
    let scale = sd * 6f64.sqrt() / std::f64::consts::PI;
    Ok(Gumbel {
        location: mean - EULER_GAMMA * scale,
        scale,
    })
}
