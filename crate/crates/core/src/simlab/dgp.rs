use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpKind {
    /// `y ~ N(0, sigma^2)`, feature on (0, 1).
    Noise,
    /// `y ~ N(round(x), sigma^2)`, feature on (0, 1).
    Step,
    /// `y ~ N(x, sigma^2)`, feature on (0, 1).
    Linear,
    /// `y ~ N(x, sigma^2)`, feature on (0, 4).
    LinearU04,
}

impl DgpKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "noise" => Ok(DgpKind::Noise),
            "step" => Ok(DgpKind::Step),
            "linear" => Ok(DgpKind::Linear),
            "linear_u04" | "linear-u04" => Ok(DgpKind::LinearU04),
            other => Err(Error::Config(format!("unknown dgp `{other}`"))),
        }
    }

    fn upper(self) -> f64 {
        match self {
            DgpKind::LinearU04 => 4.0,
            _ => 1.0,
        }
    }

    fn mean(self, x: f64) -> f64 {
        match self {
            DgpKind::Noise => 0.0,
            DgpKind::Step => x.round_ties_even(),
            DgpKind::Linear | DgpKind::LinearU04 => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dependence {
    Independent,
    /// `x_k = ((m - k) / m) x_{k-1} + N(0, (k / m)^2)` for `k = 2..m`.
    Autoregressive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub sigma: f64,
    pub n: usize,
    /// Number of distinct feature values; `None` for a continuous feature.
    pub a_plus_1: Option<usize>,
    /// Features besides the one driving the response.
    pub m_noise: usize,
    pub dependence: Dependence,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, a_plus_1: Option<usize>) -> Self {
        DgpSpec {
            kind,
            sigma: 1.0,
            n,
            a_plus_1,
            m_noise: 0,
            dependence: Dependence::Independent,
        }
    }

    pub fn m(&self) -> usize {
        1 + self.m_noise
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("need n >= 2, got {}", self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma {} must be positive", self.sigma)));
        }
        match self.a_plus_1 {
            Some(l) if l < 2 => Err(Error::Config(format!("need at least 2 feature values, got {l}"))),
            Some(l) if l > self.n => Err(Error::Infeasible(format!(
                "{l} distinct feature values cannot all occur among {} observations",
                self.n
            ))),
            _ => Ok(()),
        }
    }

    /// Value of level `k` out of `a + 1`: the midpoint of the `k`-th of `a + 1`
    /// equal cells.
    fn level(&self, k: usize, levels: usize) -> f64 {
        self.kind.upper() * (k as f64 + 0.5) / levels as f64
    }

    /// One draw from the marginal law of an independent feature.
    pub(crate) fn draw_feature(&self, rng: &mut StreamRng) -> f64 {
        match self.a_plus_1 {
            Some(levels) => self.level(rng.random_range(0..levels), levels),
            None => self.kind.upper() * rng.random::<f64>(),
        }
    }

    pub(crate) fn draw_response(&self, x: f64, rng: &mut StreamRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.kind.mean(x) + self.sigma * z
    }

    /// Column of `n` feature values; with finitely many levels, the first
    /// `a + 1` observations take each level once.
    fn feature_column(&self, n: usize, rng: &mut StreamRng) -> Vec<f64> {
        match self.a_plus_1 {
            Some(levels) => (0..n)
                .map(|i| {
                    if i < levels {
                        self.level(i, levels)
                    } else {
                        self.draw_feature(rng)
                    }
                })
                .collect(),
            None => (0..n).map(|_| self.draw_feature(rng)).collect(),
        }
    }
}

pub fn generate_dgp(spec: &DgpSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n;
    let m = spec.m();
    let mut feature_rng = substream(seed, 0);
    let mut response_rng = substream(seed, 1);
    let mut columns = Vec::with_capacity(m);
    columns.push(spec.feature_column(n, &mut feature_rng));
    for k in 2..=m {
        let col = match spec.dependence {
            Dependence::Independent => spec.feature_column(n, &mut feature_rng),
            Dependence::Autoregressive => {
                let carry = (m - k) as f64 / m as f64;
                let sd = k as f64 / m as f64;
                let prev = &columns[k - 2];
                prev.iter()
                    .map(|&x| {
                        let z: f64 = feature_rng.sample(StandardNormal);
                        carry * x + sd * z
                    })
                    .collect()
            }
        };
        columns.push(col);
    }
    let response = columns[0].iter().map(|&x| spec.draw_response(x, &mut response_rng)).collect();
    Dataset::new(
        FeatureMatrix::from_columns(columns)?,
        response,
        (0..m).map(|j| format!("x{j}")).collect(),
    )
}
