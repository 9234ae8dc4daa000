//! Outer fitting algorithms.
//!
//! * [`fit_admm`]: alternating directions method of multipliers, any quantile level.
//! * [`fit_mm`]: majorize-minimize (iteratively reweighted least squares), median only.
//! * [`fit_l2_baseline`]: squared-loss graph fused lasso, the non-robust comparator.
//! * [`check_optimality`]: perturbation and coordinate-descent probe used as a
//!   solver-independent optimality oracle on small problems.

mod admm;
mod l2;
mod mm;
mod oracle;

use std::fmt;
use std::str::FromStr;

pub use admm::{admm_primal_update, fit_admm, fit_admm_warm, AdmmState};
pub use l2::{fit_l2_baseline, fit_l2_baseline_warm};
pub use mm::fit_mm;
pub use oracle::{check_optimality, OptimalityCheck};

use crate::error::{Error, Result};
use crate::graph::{Dataset, KnnGraph};
use crate::objective::QuantileLevel;

/// Solver settings shared by all fitting routines.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub tau: QuantileLevel,
    pub lambda: f64,
    /// ADMM augmented-Lagrangian parameter.
    pub step: f64,
    /// Threshold on `||theta_k - theta_{k-1}||_2`.
    pub tol: f64,
    /// Iteration cap; `None` picks the solver default (500 for ADMM, 100 for MM).
    pub max_iter: Option<usize>,
    /// MM denominator perturbation; `None` means `1e-8 * (1 + max |y|)`.
    pub eps_mm: Option<f64>,
    /// KKT tolerance of the inner proximal solves.
    pub prox_tol: f64,
    pub prox_max_iter: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(tau: QuantileLevel, lambda: f64) -> Self {
        Self {
            tau,
            lambda,
            step: 0.5,
            tol: 1e-4,
            max_iter: None,
            eps_mm: None,
            prox_tol: 1e-8,
            prox_max_iter: 10_000,
            seed: 0,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(what.to_string()));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad("ADMM step must be > 0");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if self.max_iter == Some(0) || self.prox_max_iter == 0 {
            return bad("iteration caps must be >= 1");
        }
        if matches!(self.eps_mm, Some(e) if !(e > 0.0)) {
            return bad("eps_mm must be > 0");
        }
        if !(self.prox_tol > 0.0) {
            return bad("prox_tol must be > 0");
        }
        Ok(())
    }
}

/// Output of a fit. Traces hold one entry per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub primal_residual_trace: Vec<f64>,
}

/// Which fitting routine to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Admm,
    Mm,
    L2,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Admm => "admm",
            SolverKind::Mm => "mm",
            SolverKind::L2 => "l2",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "admm" => Ok(SolverKind::Admm),
            "mm" => Ok(SolverKind::Mm),
            "l2" => Ok(SolverKind::L2),
            other => Err(Error::Parameter(format!(
                "unknown solver {other:?} (admm, mm, l2)"
            ))),
        }
    }
}

/// Runs the chosen solver. ADMM-based solvers accept and return a warm
/// start; MM starts from the median regardless.
pub fn fit_with(
    kind: SolverKind,
    data: &Dataset,
    graph: &KnnGraph,
    cfg: &FitConfig,
    warm: Option<&AdmmState>,
) -> Result<(FitResult, Option<AdmmState>)> {
    match kind {
        SolverKind::Admm => fit_admm_warm(data, graph, cfg, warm).map(|(r, s)| (r, Some(s))),
        SolverKind::L2 => fit_l2_baseline_warm(data, graph, cfg, warm).map(|(r, s)| (r, Some(s))),
        SolverKind::Mm => fit_mm(data, graph, cfg).map(|r| (r, None)),
    }
}

pub(crate) fn check_problem(data: &Dataset, graph: &KnnGraph, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    crate::error::check_len("graph vertices vs data rows", data.n(), graph.n())
}
