//! Degrees of freedom, information criteria and penalty selection.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::graph::{predict, Dataset, KnnGraph};
use crate::numeric::sum;
use crate::objective::{pinball, pinball_sum, QuantileLevel};
use crate::solvers::{fit_with, AdmmState, FitConfig, SolverKind};

/// Default fusion threshold for [`dof`].
pub const DEFAULT_KAPPA: f64 = 1e-2;

/// Number of fused pieces: components of the graph after removing every
/// edge whose fitted difference exceeds `kappa` in absolute value.
pub fn dof(graph: &KnnGraph, theta: &[f64], kappa: f64) -> Result<usize> {
    if !(kappa > 0.0) {
        return Err(Error::Parameter(format!("kappa must be > 0, got {kappa}")));
    }
    let diffs = graph.incidence_apply(theta)?;
    let active: Vec<bool> = diffs.iter().map(|d| d.abs() <= kappa).collect();
    Ok(graph.connected_components(&active)?.0)
}

/// Scale `sigma = (1 - |1 - 2 tau|) / 2` used by [`bic`].
pub fn bic_sigma(tau: QuantileLevel) -> f64 {
    (1.0 - (1.0 - 2.0 * tau.value()).abs()) / 2.0
}

/// `(2 / sigma) sum_i rho_tau(y_i - theta_i) + nu log n`.
pub fn bic(y: &[f64], theta: &[f64], tau: QuantileLevel, nu: usize) -> Result<f64> {
    check_nu(nu)?;
    let loss = pinball_sum(y, theta, tau)?;
    Ok(2.0 / bic_sigma(tau) * loss + nu as f64 * (y.len() as f64).ln())
}

/// Value of the Schwarz criterion. A zero mean loss makes the logarithm
/// diverge; the value is then `-inf` and `ill_conditioned` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sic {
    pub value: f64,
    pub ill_conditioned: bool,
}

/// `log((1/n) sum_i rho_tau(y_i - theta_i)) + nu log(n) / (2n)`.
pub fn sic(y: &[f64], theta: &[f64], tau: QuantileLevel, nu: usize) -> Result<Sic> {
    check_nu(nu)?;
    let n = y.len() as f64;
    let mean_loss = pinball_sum(y, theta, tau)? / n;
    if !(mean_loss > 0.0) {
        return Ok(Sic {
            value: f64::NEG_INFINITY,
            ill_conditioned: true,
        });
    }
    Ok(Sic {
        value: mean_loss.ln() + nu as f64 * n.ln() / (2.0 * n),
        ill_conditioned: false,
    })
}

fn check_nu(nu: usize) -> Result<()> {
    if nu == 0 {
        return Err(Error::Parameter("degrees of freedom must be >= 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Bic,
    Sic,
    Cv,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Bic => "bic",
            Criterion::Sic => "sic",
            Criterion::Cv => "cv",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "sic" => Ok(Criterion::Sic),
            "cv" => Ok(Criterion::Cv),
            other => Err(Error::Parameter(format!(
                "unknown criterion {other:?} (bic, sic, cv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectOptions {
    pub criterion: Criterion,
    pub solver: SolverKind,
    pub kappa: f64,
    /// Number of cross-validation folds.
    pub folds: usize,
    /// Seed of the fold assignment.
    pub seed: u64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            criterion: Criterion::Bic,
            solver: SolverKind::Admm,
            kappa: DEFAULT_KAPPA,
            folds: 5,
            seed: 0,
        }
    }
}

/// Result of a penalty search over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub grid: Vec<f64>,
    pub criterion_values: Vec<f64>,
    pub dof_values: Vec<usize>,
    /// Every fit behind the grid point met its tolerance.
    pub converged: Vec<bool>,
    /// The criterion value is `-inf` (SIC with zero loss).
    pub ill_conditioned: Vec<bool>,
    /// Full-data estimate at each grid point.
    pub fits: Vec<Vec<f64>>,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    pub criterion: Criterion,
}

impl SelectionReport {
    pub fn chosen_fit(&self) -> &[f64] {
        &self.fits[self.chosen_index]
    }

    /// CSV with columns `lambda,criterion,dof,converged`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,criterion,dof,converged")?;
        for i in 0..self.grid.len() {
            writeln!(
                w,
                "{},{},{},{}",
                crate::format::sig6(self.grid[i]),
                crate::format::sig6(self.criterion_values[i]),
                self.dof_values[i],
                self.converged[i]
            )?;
        }
        Ok(())
    }
}

/// Fits the grid in order, warm starting each fit from the previous one.
fn fit_path(
    data: &Dataset,
    graph: &KnnGraph,
    cfg: &FitConfig,
    grid: &[f64],
    solver: SolverKind,
) -> Result<Vec<(Vec<f64>, bool)>> {
    let mut warm: Option<AdmmState> = None;
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let (res, state) = fit_with(solver, data, graph, &cfg.with_lambda(lambda), warm.as_ref())?;
        warm = state;
        out.push((res.theta, res.converged));
    }
    Ok(out)
}

/// Picks the penalty on `grid` (ascending, nonnegative) minimizing the
/// chosen criterion. Grid points whose fits did not converge, or whose
/// criterion is ill-conditioned, are skipped; ties go to the smaller penalty.
pub fn select_lambda(
    data: &Dataset,
    graph: &KnnGraph,
    cfg: &FitConfig,
    grid: &[f64],
    opts: &SelectOptions,
) -> Result<SelectionReport> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty lambda grid".into()));
    }
    if grid.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Parameter(
            "lambda grid must be finite, nonnegative and ascending".into(),
        ));
    }
    check_len("graph vertices vs data rows", data.n(), graph.n())?;
    let tau = cfg.tau;
    let y = data.y();

    let path = fit_path(data, graph, cfg, grid, opts.solver)?;
    let mut dof_values = Vec::with_capacity(grid.len());
    for (theta, _) in &path {
        dof_values.push(dof(graph, theta, opts.kappa)?);
    }
    let mut converged: Vec<bool> = path.iter().map(|(_, c)| *c).collect();
    let mut ill_conditioned = vec![false; grid.len()];

    let criterion_values: Vec<f64> = match opts.criterion {
        Criterion::Bic => path
            .iter()
            .zip(&dof_values)
            .map(|((theta, _), &nu)| bic(y, theta, tau, nu))
            .collect::<Result<_>>()?,
        Criterion::Sic => {
            let mut vals = Vec::with_capacity(grid.len());
            for (i, ((theta, _), &nu)) in path.iter().zip(&dof_values).enumerate() {
                let s = sic(y, theta, tau, nu)?;
                ill_conditioned[i] = s.ill_conditioned;
                vals.push(s.value);
            }
            vals
        }
        Criterion::Cv => {
            let (scores, fold_ok) = cross_validate(data, graph.k(), cfg, grid, opts)?;
            for (c, ok) in converged.iter_mut().zip(fold_ok) {
                *c &= ok;
            }
            scores
        }
    };

    let chosen_index = (0..grid.len())
        .filter(|&i| converged[i] && !ill_conditioned[i] && criterion_values[i].is_finite())
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if criterion_values[b] <= criterion_values[i] => Some(b),
            _ => Some(i),
        })
        .ok_or_else(|| {
            Error::Input("no admissible grid point (all fits failed or ill-conditioned)".into())
        })?;

    Ok(SelectionReport {
        grid: grid.to_vec(),
        criterion_values,
        dof_values,
        converged,
        ill_conditioned,
        fits: path.into_iter().map(|(t, _)| t).collect(),
        chosen_index,
        chosen_lambda: grid[chosen_index],
        criterion: opts.criterion,
    })
}

/// Seeded assignment of `n` points to `folds` folds of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Mean held-out check loss per grid point, averaged over folds. Held-out
/// points are predicted from their `k` nearest training points.
fn cross_validate(
    data: &Dataset,
    k: usize,
    cfg: &FitConfig,
    grid: &[f64],
    opts: &SelectOptions,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let n = data.n();
    if opts.folds < 2 || opts.folds > n {
        return Err(Error::Parameter(format!(
            "cross-validation needs 2 <= folds <= n (folds={}, n={n})",
            opts.folds
        )));
    }
    let assignment = fold_assignment(n, opts.folds, opts.seed);
    let per_fold: Vec<(Vec<f64>, Vec<bool>)> = (0..opts.folds)
        .into_par_iter()
        .map(|f| -> Result<(Vec<f64>, Vec<bool>)> {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let train_data = data.subset(&train);
            let test_data = data.subset(&test);
            let g = KnnGraph::build(
                train_data.x(),
                k.min(train.len() - 1),
                crate::Metric::Euclidean,
            )?;
            let path = fit_path(&train_data, &g, cfg, grid, opts.solver)?;
            let kp = k.min(train.len());
            let mut losses = Vec::with_capacity(grid.len());
            let mut ok = Vec::with_capacity(grid.len());
            for (theta, conv) in path {
                let pred = predict(train_data.x(), &theta, test_data.x(), kp)?;
                let loss = sum(test_data
                    .y()
                    .iter()
                    .zip(&pred)
                    .map(|(a, b)| pinball(a - b, cfg.tau)));
                losses.push(loss / test.len() as f64);
                ok.push(conv);
            }
            Ok((losses, ok))
        })
        .collect::<Result<_>>()?;
    let folds = opts.folds as f64;
    let scores = (0..grid.len())
        .map(|i| sum(per_fold.iter().map(|(l, _)| l[i])) / folds)
        .collect();
    let ok = (0..grid.len())
        .map(|i| per_fold.iter().all(|(_, c)| c[i]))
        .collect();
    Ok((scores, ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn path_graph(n: usize) -> KnnGraph {
        KnnGraph::from_edges(n, 1, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn dof_examples() {
        let g = path_graph(4);
        assert_eq!(dof(&g, &[3.0; 4], 0.01).unwrap(), 1);
        assert_eq!(dof(&g, &[0.0, 1.0, 2.0, 3.0], 0.01).unwrap(), 4);
        assert_eq!(dof(&g, &[0.0, 0.0, 5.0, 5.0], 0.01).unwrap(), 2);
        assert!(dof(&g, &[0.0; 3], 0.01).is_err());
        assert!(dof(&g, &[0.0; 4], 0.0).is_err());
    }

    #[test]
    fn bic_examples() {
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let v = bic(&y, &y, QuantileLevel::MEDIAN, 2).unwrap();
        assert!((v - 2.0 * 10f64.ln()).abs() < 1e-15);
        assert!((v - 4.605_170_185_988_09).abs() < 1e-12);
        assert_eq!(bic_sigma(QuantileLevel::MEDIAN), 0.5);
        assert!((bic_sigma(QuantileLevel::new(0.9).unwrap()) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sic_examples() {
        // residuals of 2 at tau = 0.5 give a mean check loss of exactly 1
        let y = vec![2.0; 10];
        let s = sic(&y, &[0.0; 10], QuantileLevel::MEDIAN, 2).unwrap();
        assert!(!s.ill_conditioned);
        assert!((s.value - 10f64.ln() / 10.0).abs() < 1e-15);
        assert!((s.value - 0.230_258_509_299_405).abs() < 1e-12);
        let s = sic(&y, &y, QuantileLevel::MEDIAN, 2).unwrap();
        assert!(s.ill_conditioned && s.value == f64::NEG_INFINITY);
    }

    #[test]
    fn criteria_match_term_by_term_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let th: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tau = 0.8;
        let mut loss = 0.0;
        for i in 0..30 {
            let r = y[i] - th[i];
            loss += r * (tau - if r <= 0.0 { 1.0 } else { 0.0 });
        }
        let sigma = (1.0 - (1.0f64 - 2.0 * tau).abs()) / 2.0;
        let tq = QuantileLevel::new(tau).unwrap();
        let want_bic = 2.0 * loss / sigma + 7.0 * 30f64.ln();
        assert!((bic(&y, &th, tq, 7).unwrap() - want_bic).abs() < 1e-11);
        let want_sic = (loss / 30.0).ln() + 7.0 * 30f64.ln() / 60.0;
        assert!((sic(&y, &th, tq, 7).unwrap().value - want_sic).abs() < 1e-13);
    }

    fn noisy_constant(n: usize, seed: u64) -> (Dataset, KnnGraph) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let y = (0..n).map(|_| 1.0 + rng.random_range(-1.0..1.0)).collect();
        let g = KnnGraph::build(x.view(), 5, crate::Metric::Euclidean).unwrap();
        (Dataset::new(x, y).unwrap(), g)
    }

    #[test]
    fn single_point_grid() {
        let (d, g) = noisy_constant(40, 1);
        let cfg = FitConfig::new(QuantileLevel::MEDIAN, 0.0);
        let r = select_lambda(&d, &g, &cfg, &[0.3], &SelectOptions::default()).unwrap();
        assert_eq!(r.chosen_lambda, 0.3);
        assert_eq!(r.grid.len(), 1);
    }

    #[test]
    fn bic_prefers_heavy_penalty_on_constant_signal() {
        let (d, g) = noisy_constant(50, 2);
        let cfg = FitConfig::new(QuantileLevel::MEDIAN, 0.0);
        let huge = 1e3;
        let r = select_lambda(&d, &g, &cfg, &[0.0, huge], &SelectOptions::default()).unwrap();
        assert_eq!(r.chosen_lambda, huge);
        assert_eq!(r.dof_values[1], 1);
        // recompute both criterion values from the stored fits
        for i in 0..2 {
            let nu = dof(&g, &r.fits[i], DEFAULT_KAPPA).unwrap();
            assert_eq!(nu, r.dof_values[i]);
            assert_eq!(
                bic(d.y(), &r.fits[i], cfg.tau, nu).unwrap(),
                r.criterion_values[i]
            );
        }
        assert!(r.criterion_values[0] > r.criterion_values[1]);
    }

    #[test]
    fn sic_skips_ill_conditioned_points() {
        let (d, g) = noisy_constant(40, 3);
        let cfg = FitConfig::new(QuantileLevel::MEDIAN, 0.0);
        let opts = SelectOptions {
            criterion: Criterion::Sic,
            ..Default::default()
        };
        let r = select_lambda(&d, &g, &cfg, &[0.0, 0.5, 5.0], &opts).unwrap();
        assert!(r.ill_conditioned[0]);
        assert_ne!(r.chosen_index, 0);
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let (d, g) = noisy_constant(60, 4);
        let cfg = FitConfig::new(QuantileLevel::new(0.3).unwrap(), 0.0);
        let opts = SelectOptions {
            criterion: Criterion::Cv,
            seed: 9,
            ..Default::default()
        };
        let grid = [0.0, 0.1, 1.0, 10.0];
        let a = select_lambda(&d, &g, &cfg, &grid, &opts).unwrap();
        let b = select_lambda(&d, &g, &cfg, &grid, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.criterion_values.iter().all(|v| v.is_finite() && *v > 0.0));
        // a constant signal is best estimated by a strongly fused fit
        assert!(a.chosen_lambda >= 1.0);
    }

    #[test]
    fn folds_are_balanced() {
        let f = fold_assignment(23, 5, 1);
        let mut counts = [0; 5];
        f.iter().for_each(|&i| counts[i] += 1);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
    }

    #[test]
    fn rejects_bad_grids() {
        let (d, g) = noisy_constant(20, 5);
        let cfg = FitConfig::new(QuantileLevel::MEDIAN, 0.0);
        let o = SelectOptions::default();
        assert!(select_lambda(&d, &g, &cfg, &[], &o).is_err());
        assert!(select_lambda(&d, &g, &cfg, &[1.0, 0.5], &o).is_err());
        assert!(select_lambda(&d, &g, &cfg, &[-1.0], &o).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let (d, g) = noisy_constant(30, 6);
        let cfg = FitConfig::new(QuantileLevel::MEDIAN, 0.0);
        let r = select_lambda(&d, &g, &cfg, &[0.0, 1.0], &SelectOptions::default()).unwrap();
        let mut buf = vec![];
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lambda,criterion,dof,converged");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,"));
    }
}
