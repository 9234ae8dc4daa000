//! Nonparametric quantile regression with a fused-lasso (total-variation)
//! penalty over a K-nearest-neighbor graph.
//!
//! The estimator minimizes
//!
//! ```text
//! sum_i rho_tau(y_i - theta_i) + lambda * sum_{(i,j) in E} |theta_i - theta_j|
//! ```
//!
//! where `E` is the edge set of the K-NN graph of the covariates and
//! `rho_tau` the check loss. New points are predicted by averaging the fitted
//! values of their K nearest training points.
//!
//! ```no_run
//! use qknn::{Dataset, FitConfig, KnnGraph, Metric, QuantileLevel, fit_admm};
//! # fn run(data: Dataset) -> qknn::Result<()> {
//! let graph = KnnGraph::build(data.x(), 5, Metric::Euclidean)?;
//! let cfg = FitConfig::new(QuantileLevel::new(0.9)?, 0.5);
//! let fit = fit_admm(&data, &graph, &cfg)?;
//! # Ok(()) }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod format;
pub mod graph;
pub mod model_selection;
pub mod numeric;
pub mod objective;
pub mod simulate;
pub mod solvers;
pub mod tv_prox;

pub use error::{Error, Result};
pub use graph::{predict, Dataset, KnnGraph, Metric};
pub use model_selection::{
    bic, dof, select_lambda, sic, Criterion, SelectOptions, SelectionReport,
};
pub use objective::{dn2_loss, mse, pinball, quantile_objective, Dn2Scale, QuantileLevel};
pub use solvers::{
    admm_primal_update, check_optimality, fit_admm, fit_l2_baseline, fit_mm, fit_with, FitConfig,
    FitResult, SolverKind,
};
pub use tv_prox::{
    fused_lasso_prox, weighted_laplacian_solve, FusedLassoProx, ProxOptions, ProxSolution,
};
