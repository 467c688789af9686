use crate::data::{row_mask, Dataset, SortedIndex};
use crate::error::{Error, Result};

use super::CirConfig;

/// Maps a split quantile `u` to the stationary time axis of the CIR limit.
///
/// `u` is first clamped to `[epsilon, 1 - epsilon]`, so `u = epsilon` lands at
/// time zero and `u = 1 - epsilon` at the far end of the horizon.
pub fn tau_transform(u: f64, epsilon: f64) -> Result<f64> {
    if !(u.is_finite() && (0.0..=1.0).contains(&u)) {
        return Err(Error::domain(format!("quantile {u} lies outside [0, 1]")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Config(format!("epsilon {epsilon} must lie in (0, 0.5)")));
    }
    let u = u.clamp(epsilon, 1.0 - epsilon);
    let tau = 0.5 * ((u * (1.0 - epsilon)) / (epsilon * (1.0 - u))).ln();
    Ok(tau.max(0.0))
}

/// Largest time reachable under `epsilon`, `tau(1 - epsilon)`.
pub fn tau_horizon(epsilon: f64) -> f64 {
    0.5 * ((1.0 - epsilon) * (1.0 - epsilon) / (epsilon * epsilon)).ln()
}

/// Strictly increasing, non-negative observation times of a CIR path.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid {
    taus: Vec<f64>,
}

impl TauGrid {
    /// Sorts and deduplicates `taus`; fails on negative or non-finite input.
    pub fn new(mut taus: Vec<f64>) -> Result<Self> {
        if taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::domain("tau values must be finite and non-negative"));
        }
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        if taus.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(TauGrid { taus })
    }

    pub fn from_quantiles(us: &[f64], epsilon: f64) -> Result<Self> {
        let taus = us
            .iter()
            .map(|&u| tau_transform(u, epsilon))
            .collect::<Result<Vec<_>>>()?;
        Self::new(taus)
    }

    /// Grid for `splits` cut points between `splits + 1` equally likely groups.
    pub fn equal_groups(splits: usize, epsilon: f64) -> Result<Self> {
        let groups = (splits + 1) as f64;
        let us: Vec<f64> = (1..=splits).map(|k| k as f64 / groups).collect();
        Self::from_quantiles(&us, epsilon)
    }

    /// Evenly spaced times covering the whole horizon `[0, tau(1 - epsilon)]`.
    pub fn dense_full_range(points: usize, epsilon: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config("a dense grid needs at least two points".into()));
        }
        let end = tau_horizon(epsilon);
        let step = end / (points - 1) as f64;
        Self::new((0..points).map(|k| k as f64 * step).collect())
    }

    pub(crate) fn from_boundary_counts(counts: &[usize], n_node: usize, epsilon: f64) -> Result<Self> {
        let taus = counts
            .iter()
            .map(|&c| tau_transform(c as f64 / n_node as f64, epsilon))
            .collect::<Result<Vec<_>>>()?;
        Self::new(taus)
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// Cumulative counts `#{rows with x_j <= boundary}` at every boundary between
/// consecutive distinct values of feature `j` within the node.
pub(crate) fn boundary_counts(col: &[f64], order: &[u32], mask: &[bool]) -> Vec<usize> {
    let mut counts = Vec::new();
    let mut seen = 0usize;
    let mut prev: Option<f64> = None;
    for &r in order {
        let r = r as usize;
        if !mask[r] {
            continue;
        }
        let v = col[r];
        if let Some(p) = prev {
            if v != p {
                counts.push(seen);
            }
        }
        prev = Some(v);
        seen += 1;
    }
    counts
}

/// The transformed split-point times of feature `j` inside a node.
pub fn node_tau_grid(
    node_rows: &[usize],
    j: usize,
    data: &Dataset,
    index: &SortedIndex,
    cfg: &CirConfig,
) -> Result<TauGrid> {
    let mask = row_mask(data.n(), node_rows);
    let counts = boundary_counts(data.column(j), index.order(j), &mask);
    if counts.is_empty() {
        return Err(Error::EmptyGrid);
    }
    TauGrid::from_boundary_counts(&counts, node_rows.len(), cfg.epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_sorted_index;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const EPS: f64 = 1e-7;

    #[test]
    fn transform_examples() {
        assert_eq!(tau_transform(EPS, EPS).unwrap(), 0.0);
        // direct evaluation of 0.5 * ln(0.5 (1 - eps) / (eps 0.5))
        let mid = 0.5 * ((0.5 * (1.0 - EPS)) / (EPS * 0.5)).ln();
        assert_abs_diff_eq!(tau_transform(0.5, EPS).unwrap(), mid, epsilon = 1e-12);
        assert_abs_diff_eq!(mid, 8.0590, epsilon = 1e-4);
        let top = tau_transform(1.0 - EPS, EPS).unwrap();
        assert_abs_diff_eq!(top, 0.5 * ((1.0 - EPS) * (1.0 - EPS) / (EPS * EPS)).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(top, 16.1181, epsilon = 1e-4);
        assert_eq!(tau_transform(0.0, EPS).unwrap(), 0.0);
        assert!(tau_transform(1.5, EPS).is_err());
        assert!(tau_transform(-0.1, EPS).is_err());
    }

    #[test]
    fn node_grids() {
        let cfg = CirConfig::default();
        let d = Dataset::from_columns(vec![vec![0.0, 1.0]], vec![0.0; 2]).unwrap();
        let idx = build_sorted_index(&d);
        let g = node_tau_grid(&[0, 1], 0, &d, &idx, &cfg).unwrap();
        assert_eq!(g.taus(), &[tau_transform(0.5, EPS).unwrap()]);

        let d = Dataset::from_columns(vec![vec![0.0, 1.0, 0.0, 1.0]], vec![0.0; 4]).unwrap();
        let idx = build_sorted_index(&d);
        let g = node_tau_grid(&[0, 1, 2, 3], 0, &d, &idx, &cfg).unwrap();
        assert_eq!(g.taus(), &[tau_transform(0.5, EPS).unwrap()]);
        assert!(matches!(node_tau_grid(&[0, 2], 0, &d, &idx, &cfg), Err(Error::EmptyGrid)));

        let col: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let d = Dataset::from_columns(vec![col], vec![0.0; 100]).unwrap();
        let idx = build_sorted_index(&d);
        let rows: Vec<usize> = (0..100).collect();
        let g = node_tau_grid(&rows, 0, &d, &idx, &cfg).unwrap();
        assert_eq!(g.len(), 99);
        assert_eq!(g.taus()[0], tau_transform(0.01, EPS).unwrap());
        assert_eq!(g.taus()[98], tau_transform(0.99, EPS).unwrap());
    }

    #[test]
    fn dense_grid_spans_horizon() {
        let g = TauGrid::dense_full_range(1000, EPS).unwrap();
        assert_eq!(g.taus()[0], 0.0);
        assert_abs_diff_eq!(*g.taus().last().unwrap(), tau_horizon(EPS), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn monotone_and_symmetric(u in 1e-7..(1.0 - 1e-7f64), v in 1e-7..(1.0 - 1e-7f64)) {
            let (lo, hi) = if u < v { (u, v) } else { (v, u) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(tau_transform(lo, EPS).unwrap() < tau_transform(hi, EPS).unwrap());
            let lhs = tau_transform(u, EPS).unwrap() + tau_transform(1.0 - u, EPS).unwrap();
            let rhs = tau_transform(1.0 - EPS, EPS).unwrap() + tau_transform(EPS, EPS).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}
