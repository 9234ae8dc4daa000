//! Majorize-minimize for the median.
//!
//! At `tau = 0.5` the penalized objective is `1/2 (sum_i |y_i - theta_i| + 2 lambda ||D theta||_1)`.
//! Each absolute value is majorized at the current iterate by a quadratic,
//! `|a| <= (a^2 / (|a_k| + eps) + (|a_k| + eps)) / 2`, so every step is a
//! weighted least-squares problem
//!
//! ```text
//! (W + 2 lambda D^T Wt^2 D) theta = W y,
//! W = diag(1 / (|y - theta_k| + eps)),   Wt^2 = diag(1 / (|D theta_k| + eps)).
//! ```
//!
//! The start `theta_0 = median(y)` has every edge difference at zero, and
//! with a tiny `eps` those edges would keep weight `1/eps` and never split.
//! So `eps` starts at `max |y_i - median(y)|` and halves every iteration
//! until it reaches its floor. The majorizer overshoots each term by at most
//! `eps / 2`, so while `eps` is above the floor a step that raises the
//! objective is rejected and retried with the smaller `eps`. At the floor a
//! rising step means the reweighting has reached its resolution, and the
//! iteration stops at the current point.

use crate::error::{Error, Result};
use crate::graph::{Dataset, KnnGraph};
use crate::numeric::{median, norm2, norm_inf};
use crate::objective::quantile_objective;
use crate::tv_prox::LaplacianSystem;

use super::{check_problem, FitConfig, FitResult};

const DEFAULT_MAX_ITER: usize = 100;
const EPS_SHRINK: f64 = 0.5;

/// Median K-NN fused lasso by majorize-minimize. Rejects `tau != 0.5`.
pub fn fit_mm(data: &Dataset, graph: &KnnGraph, cfg: &FitConfig) -> Result<FitResult> {
    check_problem(data, graph, cfg)?;
    if cfg.tau.value() != 0.5 {
        return Err(Error::Unsupported(format!(
            "majorize-minimize handles only median regression (tau = 0.5), got tau = {}",
            cfg.tau.value()
        )));
    }
    let y = data.y();
    let n = y.len();
    let max_iter = cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let eps_final = cfg.eps_mm.unwrap_or_else(|| 1e-8 * (1.0 + norm_inf(y)));
    let center = median(y);
    let spread = y.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let mut eps = spread.max(eps_final);
    let edge_penalty = 2.0 * cfg.lambda;

    let mut theta = vec![center; n];
    let mut current = quantile_objective(y, &theta, cfg.tau, cfg.lambda, graph)?;
    let mut w = vec![0.0; n];
    let mut wt = vec![0.0; graph.m()];
    let mut dtheta = vec![0.0; graph.m()];
    let mut rhs = vec![0.0; n];
    let mut objective_trace = Vec::new();
    let mut primal_residual_trace = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        for i in 0..n {
            w[i] = 1.0 / ((y[i] - theta[i]).abs() + eps);
            rhs[i] = w[i] * y[i];
        }
        graph.apply_into(&theta, &mut dtheta);
        for (wp, d) in wt.iter_mut().zip(&dtheta) {
            *wp = 1.0 / (d.abs() + eps).sqrt();
        }
        let next = LaplacianSystem::new(graph, &w, &wt, edge_penalty)?.solve(&rhs, Some(&theta))?;
        let value = quantile_objective(y, &next, cfg.tau, cfg.lambda, graph)?;
        let at_floor = eps <= eps_final;
        eps = (eps * EPS_SHRINK).max(eps_final);
        if value > current {
            primal_residual_trace.push(0.0);
            objective_trace.push(current);
            if at_floor {
                // the smoothing cannot shrink further; keep the best iterate
                converged = true;
                break;
            }
            // the majorizer gap grows with eps; retry from the same point
            continue;
        }
        let step: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let primal_res = norm2(&step);
        theta = next;
        current = value;
        primal_residual_trace.push(primal_res);
        objective_trace.push(current);
        if primal_res <= cfg.tol && at_floor {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        theta,
        iterations: objective_trace.len(),
        converged,
        objective_trace,
        primal_residual_trace,
    })
}
