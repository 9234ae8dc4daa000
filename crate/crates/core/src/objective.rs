//! Loss functions and evaluation metrics.

use crate::error::{check_len, Error, Result};
use crate::graph::KnnGraph;
use crate::numeric::sum;

/// A quantile level strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::Parameter(format!(
                "quantile level must lie in (0, 1), got {tau}"
            )))
        }
    }

    pub const MEDIAN: QuantileLevel = QuantileLevel(0.5);

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;

    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

/// Check loss `(tau - 1{t <= 0}) * t`.
#[inline]
pub fn pinball(t: f64, tau: QuantileLevel) -> f64 {
    let tau = tau.value();
    if t <= 0.0 {
        (tau - 1.0) * t
    } else {
        tau * t
    }
}

/// Sum of check losses of the residuals `y - theta`.
pub fn pinball_sum(y: &[f64], theta: &[f64], tau: QuantileLevel) -> Result<f64> {
    check_len("theta vs y", y.len(), theta.len())?;
    Ok(sum(y.iter().zip(theta).map(|(a, b)| pinball(a - b, tau))))
}

/// Penalized objective `sum_i rho_tau(y_i - theta_i) + lambda * ||grad theta||_1`.
pub fn quantile_objective(
    y: &[f64],
    theta: &[f64],
    tau: QuantileLevel,
    lambda: f64,
    graph: &KnnGraph,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    check_len("y vs vertex count", graph.n(), y.len())?;
    let loss = pinball_sum(y, theta, tau)?;
    Ok(loss + lambda * graph.total_variation(theta)?)
}

/// Normalization of the Huber-like discrepancy `sum_i min(|d_i|, d_i^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dn2Scale {
    /// Divide by `n`.
    #[default]
    Mean,
    /// Plain sum over coordinates.
    Sum,
}

/// `(1/n) sum_i min(|d_i|, d_i^2)`, or the unnormalized sum with [`Dn2Scale::Sum`].
pub fn dn2_loss(delta: &[f64], scale: Dn2Scale) -> f64 {
    if delta.is_empty() {
        return 0.0;
    }
    let total = sum(delta.iter().map(|d| d.abs().min(d * d)));
    match scale {
        Dn2Scale::Mean => total / delta.len() as f64,
        Dn2Scale::Sum => total,
    }
}

/// Mean squared error between an estimate and the truth.
pub fn mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_len("estimate vs truth", truth.len(), estimate.len())?;
    if truth.is_empty() {
        return Err(Error::Input("mse of empty vectors".into()));
    }
    Ok(sum(estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b))) / truth.len() as f64)
}
