//! Monte Carlo benchmark over simulation scenarios.
//!
//! Every (scenario, n, error, tau, solver) cell is run on `replicates` data
//! sets with seeds `seed, seed + 1, ...`; all solvers of a cell see the same
//! data. The quantile estimators pick their penalty by the chosen criterion
//! on each replicate. The squared-loss baseline uses one penalty per cell,
//! the grid point with the smallest MSE averaged over replicates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Result};
use qknn::format::sig6;
use qknn::simulate::{gen_scenario, ErrorDist, Scenario};
use qknn::{
    fit_with, mse, select_lambda, FitConfig, KnnGraph, Metric, QuantileLevel, SelectOptions,
    SolverKind,
};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchSolver {
    QknnAdmm,
    QknnMm,
    KnnL2,
}

impl fmt::Display for BenchSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchSolver::QknnAdmm => "qknn-admm",
            BenchSolver::QknnMm => "qknn-mm",
            BenchSolver::KnnL2 => "knn-l2",
        })
    }
}

impl FromStr for BenchSolver {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "qknn-admm" | "admm" => BenchSolver::QknnAdmm,
            "qknn-mm" | "mm" => BenchSolver::QknnMm,
            "knn-l2" | "l2" => BenchSolver::KnnL2,
            other => bail!("unknown bench solver {other:?} (qknn-admm, qknn-mm, knn-l2)"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenarios: Vec<Scenario>,
    pub sizes: Vec<usize>,
    pub solvers: Vec<BenchSolver>,
    pub replicates: usize,
    pub seed: u64,
    pub k: usize,
    /// Penalty grid of the quantile estimators.
    pub grid: Vec<f64>,
    /// Penalty grid of the squared-loss baseline.
    pub l2_grid: Vec<f64>,
    pub select: SelectOptions,
    /// Template for every fit; `tau` and `lambda` are overwritten per cell.
    pub fit: FitConfig,
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub scenario: Scenario,
    pub n: usize,
    pub error: ErrorDist,
    pub tau: QuantileLevel,
    pub solver: BenchSolver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    /// Mean and standard error of the MSE, or the failure message.
    pub mse: std::result::Result<(f64, f64), String>,
    pub time_mean_s: f64,
}

/// Cells of the benchmark table: each scenario's error/quantile rows, each
/// size, each solver, in that nesting order.
pub fn cells(cfg: &BenchConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &scenario in &cfg.scenarios {
        for (error, tau) in scenario.table_errors() {
            let tau = QuantileLevel::new(tau).expect("table quantile");
            for &n in &cfg.sizes {
                for &solver in &cfg.solvers {
                    out.push(Cell {
                        scenario,
                        n,
                        error,
                        tau,
                        solver,
                    });
                }
            }
        }
    }
    out
}

/// Per-replicate outcome: the MSE at every considered penalty (one entry for
/// the quantile estimators) and the wall-clock time.
type Replicate = std::result::Result<(Vec<f64>, f64), String>;

fn run_replicate(cfg: &BenchConfig, cell: &Cell, seed: u64) -> Replicate {
    let inner = || -> qknn::Result<(Vec<f64>, f64)> {
        let sample = gen_scenario(cell.scenario, cell.n, cell.tau, cell.error, seed)?;
        let data = sample.dataset();
        let start = Instant::now();
        let graph = KnnGraph::build(data.x(), cfg.k, Metric::Euclidean)?;
        let fit = FitConfig {
            tau: cell.tau,
            ..cfg.fit.clone()
        };
        let mses = match cell.solver {
            BenchSolver::KnnL2 => {
                let mut warm = None;
                let mut out = Vec::with_capacity(cfg.l2_grid.len());
                for &lambda in &cfg.l2_grid {
                    let (res, state) = fit_with(
                        SolverKind::L2,
                        &data,
                        &graph,
                        &fit.with_lambda(lambda),
                        warm.as_ref(),
                    )?;
                    warm = state;
                    out.push(mse(&res.theta, &sample.theta_star)?);
                }
                out
            }
            BenchSolver::QknnAdmm | BenchSolver::QknnMm => {
                let opts = SelectOptions {
                    solver: if cell.solver == BenchSolver::QknnMm {
                        SolverKind::Mm
                    } else {
                        SolverKind::Admm
                    },
                    seed,
                    ..cfg.select.clone()
                };
                let rep = select_lambda(&data, &graph, &fit, &cfg.grid, &opts)?;
                vec![mse(rep.chosen_fit(), &sample.theta_star)?]
            }
        };
        Ok((mses, start.elapsed().as_secs_f64()))
    };
    inner().map_err(|e| e.to_string())
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(cell: Cell, reps: Vec<Replicate>) -> CellResult {
    let time_mean_s = reps
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|(_, t)| *t))
        .sum::<f64>()
        / reps.len() as f64;
    let mse = match reps
        .into_iter()
        .collect::<std::result::Result<Vec<_>, String>>()
    {
        Err(e) => Err(e),
        Ok(reps) => {
            let points = reps[0].0.len();
            // the penalty with the smallest mean MSE; a single point for the quantile estimators
            let best = (0..points)
                .map(|j| mean_se(&reps.iter().map(|(m, _)| m[j]).collect::<Vec<_>>()))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("nonempty grid");
            Ok(best)
        }
    };
    CellResult {
        cell,
        mse,
        time_mean_s,
    }
}

/// Runs every cell. Replicates of all cells are fanned out over the current
/// rayon pool; results come back in cell order.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<CellResult>> {
    if cfg.replicates == 0 {
        bail!("replicates must be >= 1");
    }
    if cfg.grid.is_empty() || cfg.l2_grid.is_empty() {
        bail!("empty penalty grid");
    }
    let cells = cells(cfg);
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicates as u64).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Replicate> = jobs
        .par_iter()
        .map(|&(c, r)| run_replicate(cfg, &cells[c], cfg.seed + r))
        .collect();
    let mut outcomes = outcomes.into_iter();
    Ok(cells
        .into_iter()
        .map(|cell| summarize(cell, outcomes.by_ref().take(cfg.replicates).collect()))
        .collect())
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        sig6(x)
    }
}

/// Table with columns `scenario,n,error,tau,solver,mse_mean,mse_se,time_mean_s,replicates,seed`.
/// Failed cells have `NA` statistics; without timing the time column is `NA`.
pub fn write_table<W: Write>(
    mut w: W,
    cfg: &BenchConfig,
    results: &[CellResult],
) -> std::io::Result<()> {
    writeln!(
        w,
        "scenario,n,error,tau,solver,mse_mean,mse_se,time_mean_s,replicates,seed"
    )?;
    for r in results {
        let (m, se) = r.mse.clone().unwrap_or((f64::NAN, f64::NAN));
        let time = if cfg.timing {
            num(r.time_mean_s)
        } else {
            "NA".into()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.cell.scenario,
            r.cell.n,
            r.cell.error,
            sig6(r.cell.tau.value()),
            r.cell.solver,
            num(m),
            num(se),
            time,
            cfg.replicates,
            cfg.seed
        )?;
    }
    Ok(())
}

/// Mean time per replicate against n for each solver and scenario, averaged
/// over the error/quantile rows.
pub fn write_timing<W: Write>(
    mut w: W,
    cfg: &BenchConfig,
    results: &[CellResult],
) -> std::io::Result<()> {
    writeln!(w, "scenario,solver,n,time_mean_s")?;
    for &scenario in &cfg.scenarios {
        for &solver in &cfg.solvers {
            for &n in &cfg.sizes {
                let times: Vec<f64> = results
                    .iter()
                    .filter(|r| {
                        r.cell.scenario == scenario
                            && r.cell.solver == solver
                            && r.cell.n == n
                            && r.mse.is_ok()
                    })
                    .map(|r| r.time_mean_s)
                    .collect();
                let t = if cfg.timing && !times.is_empty() {
                    num(times.iter().sum::<f64>() / times.len() as f64)
                } else {
                    "NA".into()
                };
                writeln!(w, "{scenario},{solver},{n},{t}")?;
            }
        }
    }
    Ok(())
}
