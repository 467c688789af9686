//! Loss functions with their first and second derivatives in the raw score.
//!
//! Log loss is parameterized on the log-odds scale so that leaf weights add
//! up across trees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are kept inside `[P_CLAMP, 1 - P_CLAMP]` so the log-loss
/// hessian never vanishes.
pub const P_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    LogLoss,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared_error",
            LossKind::LogLoss => "log_loss",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "squared_error" | "mse" => Ok(LossKind::SquaredError),
            "log_loss" | "logloss" => Ok(LossKind::LogLoss),
            other => Err(Error::domain(format!("unknown loss `{other}`"))),
        }
    }
}

/// Per-observation gradients and hessians at the current predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBuffers {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl DerivativeBuffers {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

fn check_finite(y: f64, yhat: f64) -> Result<()> {
    if !y.is_finite() || !yhat.is_finite() {
        return Err(Error::domain(format!(
            "non-finite loss input (y = {y}, yhat = {yhat})"
        )));
    }
    Ok(())
}

fn check_label(y: f64) -> Result<()> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::domain(format!(
            "log loss requires labels in {{0, 1}}, got {y}"
        )));
    }
    Ok(())
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn loss_value(kind: LossKind, y: f64, yhat: f64) -> Result<f64> {
    check_finite(y, yhat)?;
    match kind {
        LossKind::SquaredError => Ok((y - yhat) * (y - yhat)),
        LossKind::LogLoss => {
            check_label(y)?;
            Ok(softplus(yhat) - y * yhat)
        }
    }
}

#[inline]
fn derivative_pair(kind: LossKind, y: f64, yhat: f64) -> (f64, f64) {
    match kind {
        LossKind::SquaredError => (2.0 * (yhat - y), 2.0),
        LossKind::LogLoss => {
            let p = sigmoid(yhat);
            (p - y, p * (1.0 - p))
        }
    }
}

pub fn compute_derivatives(kind: LossKind, y: &[f64], yhat: &[f64]) -> Result<DerivativeBuffers> {
    if y.is_empty() {
        return Err(Error::domain("cannot differentiate an empty response"));
    }
    if y.len() != yhat.len() {
        return Err(Error::domain(format!(
            "response length {} differs from prediction length {}",
            y.len(),
            yhat.len()
        )));
    }
    let mut g = Vec::with_capacity(y.len());
    let mut h = Vec::with_capacity(y.len());
    for (&yi, &pi) in y.iter().zip(yhat) {
        check_finite(yi, pi)?;
        if kind == LossKind::LogLoss {
            check_label(yi)?;
        }
        let (gi, hi) = derivative_pair(kind, yi, pi);
        g.push(gi);
        h.push(hi);
    }
    Ok(DerivativeBuffers { g, h })
}

/// The constant that minimizes the summed loss over `y`.
pub fn initial_prediction(kind: LossKind, y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::domain("cannot initialize from an empty response"));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite response value {bad}")));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    match kind {
        LossKind::SquaredError => Ok(mean),
        LossKind::LogLoss => {
            for &v in y {
                check_label(v)?;
            }
            if mean <= 0.0 || mean >= 1.0 {
                return Err(Error::DegenerateResponse(format!(
                    "all labels equal {mean}; log-odds are unbounded"
                )));
            }
            Ok((mean / (1.0 - mean)).ln())
        }
    }
}

/// Validates that every response value is admissible for `kind`.
pub fn validate_response(kind: LossKind, y: &[f64]) -> Result<()> {
    if kind == LossKind::LogLoss {
        for &v in y {
            check_label(v)?;
        }
    }
    Ok(())
}
