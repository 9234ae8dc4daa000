use crate::error::Result;
use crate::graph::{Dataset, KnnGraph};
use crate::numeric::{norm2, norm_inf};
use crate::objective::{quantile_objective, QuantileLevel};
use crate::tv_prox::FusedLassoProx;

use super::{check_problem, FitConfig, FitResult};

const DEFAULT_MAX_ITER: usize = 500;
/// Inner tolerance is at most this times the last primal residual per coordinate.
const INEXACT_FACTOR: f64 = 0.1;

/// Exact minimizer over `theta` of `rho_tau(y - theta) + (r/2) (theta - z + u)^2`.
#[inline]
pub fn admm_primal_update(y: f64, z: f64, u: f64, tau: QuantileLevel, r: f64) -> f64 {
    let tau = tau.value();
    let gap = y - z + u;
    if gap > tau / r {
        z - u + tau / r
    } else if gap < (tau - 1.0) / r {
        z - u + (tau - 1.0) / r
    } else {
        y
    }
}

/// Iterates carried between ADMM runs, used to warm start a fit at a nearby
/// penalty level.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    /// Scaled dual variable of the consensus constraint `theta = z`.
    pub u: Vec<f64>,
    /// Dual of the last proximal solve, one entry per edge.
    pub prox_dual: Vec<f64>,
    /// Penalty level of the last proximal solve (`lambda / step`).
    pub prox_gamma: f64,
}

impl AdmmState {
    fn cold(y: &[f64], m: usize) -> Self {
        Self {
            theta: y.to_vec(),
            z: y.to_vec(),
            u: vec![0.0; y.len()],
            prox_dual: vec![0.0; m],
            prox_gamma: 0.0,
        }
    }
}

/// Quantile K-NN fused lasso by ADMM.
///
/// Starts from `theta = z = y`, `u = 0` and returns the penalized iterate `z`.
pub fn fit_admm(data: &Dataset, graph: &KnnGraph, cfg: &FitConfig) -> Result<FitResult> {
    fit_admm_warm(data, graph, cfg, None).map(|(r, _)| r)
}

/// [`fit_admm`] starting from a previous run's iterates.
pub fn fit_admm_warm(
    data: &Dataset,
    graph: &KnnGraph,
    cfg: &FitConfig,
    warm: Option<&AdmmState>,
) -> Result<(FitResult, AdmmState)> {
    check_problem(data, graph, cfg)?;
    let tau = cfg.tau;
    run(
        data.y(),
        graph,
        cfg,
        warm,
        |y, z, u, r| admm_primal_update(y, z, u, tau, r),
        |theta| quantile_objective(data.y(), theta, tau, cfg.lambda, graph),
    )
}

/// Shared ADMM loop: `primal` is the coordinatewise loss-proximal step,
/// `objective` evaluates the full objective at the penalized iterate.
pub(super) fn run(
    y: &[f64],
    graph: &KnnGraph,
    cfg: &FitConfig,
    warm: Option<&AdmmState>,
    primal: impl Fn(f64, f64, f64, f64) -> f64,
    objective: impl Fn(&[f64]) -> Result<f64>,
) -> Result<(FitResult, AdmmState)> {
    let n = y.len();
    let max_iter = cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let gamma = cfg.lambda / cfg.step;
    let mut state = warm
        .cloned()
        .unwrap_or_else(|| AdmmState::cold(y, graph.m()));
    // the previous prox dual lives in a box of the old radius
    if state.prox_gamma > 0.0 && gamma != state.prox_gamma {
        let scale = gamma / state.prox_gamma;
        state.prox_dual.iter_mut().for_each(|w| *w *= scale);
    }
    state.prox_gamma = gamma;

    let mut prox = FusedLassoProx::new(graph);
    let mut theta_prev = state.theta.clone();
    let mut v = vec![0.0; n];
    let mut diff = vec![0.0; n];
    let mut objective_trace = Vec::new();
    let mut primal_residual_trace = Vec::new();
    let mut converged = false;
    let mut last_res = 0.0_f64;

    for _ in 0..max_iter {
        for i in 0..n {
            state.theta[i] = primal(y[i], state.z[i], state.u[i], cfg.step);
            v[i] = state.theta[i] + state.u[i];
        }
        // far from convergence the prox only needs to be accurate relative
        // to the current outer progress
        let floor_tol = cfg.prox_tol * norm_inf(&v).max(1.0);
        let inner_tol = floor_tol.max(INEXACT_FACTOR * last_res / (n as f64).sqrt());
        prox.solve(
            &v,
            gamma,
            inner_tol,
            cfg.prox_max_iter,
            &mut state.prox_dual,
            &mut state.z,
        );
        for i in 0..n {
            state.u[i] += state.theta[i] - state.z[i];
        }

        diff.iter_mut()
            .zip(state.theta.iter().zip(&theta_prev))
            .for_each(|(d, (a, b))| *d = a - b);
        let primal_res = norm2(&diff);
        diff.iter_mut()
            .zip(state.theta.iter().zip(&state.z))
            .for_each(|(d, (a, b))| *d = a - b);
        let consensus = norm2(&diff);
        primal_residual_trace.push(primal_res);
        last_res = if primal_res > 0.0 {
            primal_res
        } else {
            consensus
        };
        objective_trace.push(objective(&state.z)?);
        theta_prev.copy_from_slice(&state.theta);

        if primal_res <= cfg.tol && consensus <= 10.0 * cfg.tol {
            converged = true;
            break;
        }
    }

    // final z from a prox at the configured accuracy
    if let Some(last) = objective_trace.last_mut() {
        let floor_tol = cfg.prox_tol * norm_inf(&v).max(1.0);
        prox.solve(
            &v,
            gamma,
            floor_tol,
            cfg.prox_max_iter,
            &mut state.prox_dual,
            &mut state.z,
        );
        *last = objective(&state.z)?;
    }
    let result = FitResult {
        theta: state.z.clone(),
        iterations: objective_trace.len(),
        converged,
        objective_trace,
        primal_residual_trace,
    };
    Ok((result, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn primal_update_examples() {
        assert_eq!(admm_primal_update(3.0, 0.0, 0.0, q(0.5), 0.5), 1.0);
        assert_eq!(admm_primal_update(0.5, 0.0, 0.0, q(0.5), 0.5), 0.5);
        assert_eq!(admm_primal_update(-3.0, 0.0, 0.0, q(0.5), 0.5), -1.0);
    }

    #[test]
    fn primal_update_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let (y, z, u) = (
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.0..1.0),
            );
            let tau = rng.random_range(0.05..0.95);
            let r = rng.random_range(0.1..4.0);
            let f = |t: f64| {
                let res: f64 = y - t;
                let loss = if res > 0.0 {
                    tau * res
                } else {
                    (tau - 1.0) * res
                };
                loss + 0.5 * r * (t - z + u) * (t - z + u)
            };
            let got = admm_primal_update(y, z, u, q(tau), r);
            let grid_best = (0..=200_000)
                .map(|k| -10.0 + 1e-4 * k as f64)
                .min_by(|a, b| f(*a).total_cmp(&f(*b)))
                .unwrap();
            assert!(
                (got - grid_best).abs() <= 1e-4,
                "got {got}, grid {grid_best}"
            );
            assert!(f(got) <= f(grid_best) + 1e-12);
        }
    }

    fn instance(n: usize, seed: u64) -> (Dataset, KnnGraph) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let y = (0..n)
            .map(|i| x[[i, 0]] + rng.random_range(-0.5..0.5))
            .collect();
        let g = KnnGraph::build(x.view(), 3, crate::Metric::Euclidean).unwrap();
        (Dataset::new(x, y).unwrap(), g)
    }

    #[test]
    fn constant_response_converges_immediately() {
        let (d, g) = instance(30, 1);
        let d = Dataset::new(d.x().to_owned(), vec![2.5; 30]).unwrap();
        let res = fit_admm(&d, &g, &FitConfig::new(q(0.3), 4.0)).unwrap();
        assert!(res.converged && res.iterations <= 2);
        assert!(res.theta.iter().all(|&t| (t - 2.5).abs() < 1e-12));
    }

    #[test]
    fn zero_penalty_returns_response() {
        let (d, g) = instance(30, 2);
        let res = fit_admm(&d, &g, &FitConfig::new(q(0.7), 0.0)).unwrap();
        assert!(res.converged);
        assert_eq!(res.theta, d.y());
    }

    #[test]
    fn traces_match_iterations() {
        let (d, g) = instance(60, 3);
        let res = fit_admm(&d, &g, &FitConfig::new(q(0.5), 0.3)).unwrap();
        assert!(res.converged);
        assert_eq!(res.objective_trace.len(), res.iterations);
        assert_eq!(res.primal_residual_trace.len(), res.iterations);
        assert!(*res.primal_residual_trace.last().unwrap() <= 1e-4);
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let (d, g) = instance(80, 4);
        let cfg = FitConfig::new(q(0.4), 0.2);
        let (_, state) = fit_admm_warm(&d, &g, &cfg.with_lambda(0.1), None).unwrap();
        let (warm, _) = fit_admm_warm(&d, &g, &cfg, Some(&state)).unwrap();
        let cold = fit_admm(&d, &g, &cfg).unwrap();
        let obj = |t: &[f64]| quantile_objective(d.y(), t, cfg.tau, cfg.lambda, &g).unwrap();
        assert!((obj(&warm.theta) - obj(&cold.theta)).abs() <= 1e-4 * (1.0 + obj(&cold.theta)));
    }
}
