use crate::error::Result;
use crate::graph::{Dataset, KnnGraph};
use crate::numeric::sum;
use crate::objective::QuantileLevel;

use super::admm::{run, AdmmState};
use super::{check_problem, FitConfig, FitResult};

/// Squared-loss graph fused lasso, `1/2 ||y - theta||^2 + lambda ||grad theta||_1`,
/// solved with the same ADMM loop as the quantile estimator.
pub fn fit_l2_baseline(
    data: &Dataset,
    graph: &KnnGraph,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    let cfg = FitConfig {
        tol,
        max_iter: Some(max_iter),
        ..FitConfig::new(QuantileLevel::MEDIAN, lambda)
    };
    fit_l2_baseline_warm(data, graph, &cfg, None).map(|(r, _)| r)
}

/// [`fit_l2_baseline`] with full configuration and an optional warm start.
/// `cfg.tau` is ignored.
pub fn fit_l2_baseline_warm(
    data: &Dataset,
    graph: &KnnGraph,
    cfg: &FitConfig,
    warm: Option<&AdmmState>,
) -> Result<(FitResult, AdmmState)> {
    check_problem(data, graph, cfg)?;
    let y = data.y();
    run(
        y,
        graph,
        cfg,
        warm,
        |yi, z, u, r| (yi + r * (z - u)) / (1.0 + r),
        |theta| {
            let fit = 0.5 * sum(y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)));
            Ok(fit + cfg.lambda * graph.total_variation(theta)?)
        },
    )
}
