//! Exact simulation of the CIR process `dS = 2(1 - S) dt + 2 sqrt(2 S) dW`.
//!
//! The Feller condition fails for these parameters (`2ab = 4 < sigma^2 = 8`),
//! so paths are advanced with the exact noncentral chi-square transition. With
//! one degree of freedom the transition is `c (Z + sqrt(lambda))^2`, where
//! `c = 1 - e^{-2 dt}` and `lambda = e^{-2 dt} S / c`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::{substream, StreamRng};

use super::TauGrid;

/// Per-step transition coefficients: `S' = (shock * Z + carry * sqrt(S))^2`.
#[derive(Debug, Clone)]
pub(crate) struct Transitions {
    carry: Vec<f64>,
    shock: Vec<f64>,
}

impl Transitions {
    pub(crate) fn new(grid: &TauGrid) -> Self {
        let (carry, shock) = grid
            .taus()
            .windows(2)
            .map(|w| {
                let dt = w[1] - w[0];
                let decay = (-dt).exp();
                // 1 - e^{-2dt}, accurate for small steps
                let c = -(-2.0 * dt).exp_m1();
                (decay, c.sqrt())
            })
            .unzip();
        Transitions { carry, shock }
    }

    #[inline]
    fn run<R: Rng + ?Sized>(&self, rng: &mut R, mut visit: impl FnMut(f64)) {
        // S(tau_1) ~ Gamma(1/2, 2), i.e. the square of a standard normal
        let z: f64 = rng.sample(StandardNormal);
        let mut s = z * z;
        visit(s);
        for (&carry, &shock) in self.carry.iter().zip(&self.shock) {
            let z: f64 = rng.sample(StandardNormal);
            let x = shock * z + carry * s.sqrt();
            s = x * x;
            visit(s);
        }
    }

    #[inline]
    pub(crate) fn path_max<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut max = 0.0f64;
        self.run(rng, |s| max = max.max(s));
        max
    }
}

/// One stationary CIR path observed on `grid`.
pub fn simulate_cir_path<R: Rng + ?Sized>(grid: &TauGrid, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    Transitions::new(grid).run(rng, |s| out.push(s));
    out
}

/// One draw of `max_k S(tau_k)` for a stationary CIR path.
pub fn simulate_cir_path_max<R: Rng + ?Sized>(grid: &TauGrid, rng: &mut R) -> f64 {
    Transitions::new(grid).path_max(rng)
}

/// `n_paths` independent path maxima; path `p` uses substream `p` of `seed`.
pub fn simulate_maxima(grid: &TauGrid, n_paths: usize, seed: u64, exec: Execution) -> Vec<f64> {
    let transitions = Transitions::new(grid);
    map_indexed(exec, n_paths, |p| {
        let mut rng: StreamRng = substream(seed, p as u64);
        transitions.path_max(&mut rng)
    })
}

/// Maxima over `u_grid` of `B(u)^2 / (u (1 - u))` for a standard Brownian
/// bridge `B(u) = W(u) - u W(1)`. The Wiener path is sampled exactly at the
/// grid points and at `u = 1`.
pub fn simulate_bridge_ratio_max(
    u_grid: &[f64],
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    if u_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut us = u_grid.to_vec();
    us.sort_by(f64::total_cmp);
    us.dedup();
    if us.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::domain("bridge grid must lie strictly inside (0, 1)"));
    }
    let mut sd = Vec::with_capacity(us.len() + 1);
    let mut prev = 0.0;
    for &u in &us {
        sd.push((u - prev).sqrt());
        prev = u;
    }
    let tail = (1.0 - prev).sqrt();
    Ok(map_indexed(exec, n_paths, |p| {
        let mut rng = substream(seed, p as u64);
        let mut w = Vec::with_capacity(us.len());
        let mut acc = 0.0;
        for &s in &sd {
            acc += s * rng.sample::<f64, _>(StandardNormal);
            w.push(acc);
        }
        let w1 = acc + tail * rng.sample::<f64, _>(StandardNormal);
        us.iter()
            .zip(&w)
            .map(|(&u, &wu)| {
                let b = wu - u * w1;
                b * b / (u * (1.0 - u))
            })
            .fold(0.0, f64::max)
    }))
}
