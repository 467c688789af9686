use crate::error::{Error, Result};

use super::{CirConfig, CirMaxDistribution};

/// Upper-tail mass left out of the quadrature range.
const TAIL_MASS: f64 = 1e-6;

/// Expected maximum over features of `B_j = c_root (1 + max S_j)`, treating
/// the `B_j` as independent:
///
/// `int_0^inf 1 - prod_j P(B_j <= z) dz`, with `P(B_j <= z) = F_j(z / c_root - 1)`.
///
/// A single law has the closed form `c_root (1 + E[max S])`; several laws are
/// integrated numerically with the trapezoidal rule.
pub fn multi_feature_stump_optimism(
    c_root: f64,
    laws: &[CirMaxDistribution],
    cfg: &CirConfig,
) -> Result<f64> {
    if !(c_root >= 0.0) || !c_root.is_finite() {
        return Err(Error::domain(format!("root optimism {c_root} must be finite and non-negative")));
    }
    if laws.is_empty() {
        return Err(Error::domain("stump optimism needs at least one feature law"));
    }
    if c_root == 0.0 {
        return Ok(0.0);
    }
    if let [law] = laws {
        return Ok(c_root * (1.0 + law.mean()));
    }
    Ok(stump_optimism_quadrature(c_root, laws, cfg.integral_grid_points))
}

/// Trapezoidal evaluation of the independence integral on `points` nodes
/// from 0 to `c_root (1 + max_j q_j(1 - 1e-6))`.
pub fn stump_optimism_quadrature(c_root: f64, laws: &[CirMaxDistribution], points: usize) -> f64 {
    if c_root == 0.0 || laws.is_empty() {
        return 0.0;
    }
    // identical laws enter the product as powers
    let mut groups: Vec<(CirMaxDistribution, f64)> = Vec::new();
    for law in laws {
        match groups.iter_mut().find(|(l, _)| {
            l.form == law.form
                && l.location.to_bits() == law.location.to_bits()
                && l.scale.to_bits() == law.scale.to_bits()
        }) {
            Some((_, count)) => *count += 1.0,
            None => groups.push((*law, 1.0)),
        }
    }
    let top = groups
        .iter()
        .map(|(l, _)| l.quantile(1.0 - TAIL_MASS))
        .fold(f64::NEG_INFINITY, f64::max);
    let z_max = c_root * (1.0 + top.max(0.0));
    let points = points.max(2);
    let h = z_max / (points - 1) as f64;
    let integrand = |z: f64| {
        let s = z / c_root - 1.0;
        let ln_prod: f64 = groups.iter().map(|(l, count)| count * l.ln_cdf(s)).sum();
        if ln_prod == f64::NEG_INFINITY {
            1.0
        } else {
            -ln_prod.exp_m1()
        }
    };
    let interior: f64 = (1..points - 1).map(|k| integrand(k as f64 * h)).sum();
    h * (0.5 * (integrand(0.0) + integrand(z_max)) + interior)
}
