//! Synthetic benchmark scenarios with known conditional quantiles.
//!
//! Every sample is `y_i = f0(x_i) + s_i * e_i` with `s_i = 1` for scenarios
//! 1-3 and `s_i = mean(x_i)` for the heteroscedastic scenario 4, so the true
//! conditional `tau`-quantile is `f0(x_i) + s_i * F^{-1}(tau)`.
//!
//! Random streams come from ChaCha8 seeded with a 64-bit seed; covariates and
//! errors use separate ChaCha streams of the same seed, so the two draws are
//! independent and bit-reproducible across platforms.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::objective::QuantileLevel;

const COVARIATE_STREAM: u64 = 1;
const ERROR_STREAM: u64 = 2;

/// Scenario 2 region probabilities: outer frame, inner core, ring between.
pub const SCENARIO2_WEIGHTS: [f64; 3] = [1.0 / 5.0, 16.0 / 25.0, 4.0 / 25.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Step function on `[0,1]^2`, uniform design.
    Step,
    /// Small disk on `[0,1]^2`, design concentrated near the center.
    Disk,
    /// Smooth quadratic on `[0,1]^2`, uniform design.
    Smooth,
    /// Two half-spaces on `[0,1]^5` with heteroscedastic errors.
    Heteroscedastic,
}

impl Scenario {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Scenario::Step),
            2 => Ok(Scenario::Disk),
            3 => Ok(Scenario::Smooth),
            4 => Ok(Scenario::Heteroscedastic),
            _ => Err(Error::Parameter(format!("unknown scenario id {id} (1-4)"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Scenario::Step => 1,
            Scenario::Disk => 2,
            Scenario::Smooth => 3,
            Scenario::Heteroscedastic => 4,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Scenario::Heteroscedastic => 5,
            _ => 2,
        }
    }

    /// Noise scale at `x`: 1, or `x^T beta` with `beta = (1/d, ..., 1/d)`.
    pub fn noise_scale(self, x: &[f64]) -> f64 {
        match self {
            Scenario::Heteroscedastic => x.iter().sum::<f64>() / x.len() as f64,
            _ => 1.0,
        }
    }

    /// Error laws this scenario is paired with in the benchmark table.
    pub fn table_errors(self) -> Vec<(ErrorDist, f64)> {
        match self {
            Scenario::Step => vec![(ErrorDist::Gaussian, 0.5), (ErrorDist::Cauchy, 0.5)],
            Scenario::Disk => vec![(ErrorDist::StudentT(3.0), 0.5)],
            Scenario::Smooth => vec![(ErrorDist::StudentT(2.0), 0.5)],
            Scenario::Heteroscedastic => vec![
                (ErrorDist::StudentT(3.0), 0.9),
                (ErrorDist::StudentT(3.0), 0.1),
            ],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Every (scenario, error, tau) combination of the benchmark table.
pub fn table_cells() -> Vec<(Scenario, ErrorDist, QuantileLevel)> {
    [
        Scenario::Step,
        Scenario::Disk,
        Scenario::Smooth,
        Scenario::Heteroscedastic,
    ]
    .into_iter()
    .flat_map(|s| {
        s.table_errors()
            .into_iter()
            .map(move |(e, t)| (s, e, QuantileLevel::new(t).expect("valid table tau")))
    })
    .collect()
}

/// Error distribution, all centered at zero with unit scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorDist {
    Gaussian,
    Cauchy,
    /// Student t with the given degrees of freedom (>= 1).
    StudentT(f64),
}

impl ErrorDist {
    fn validate(self) -> Result<Self> {
        match self {
            ErrorDist::StudentT(df) if !(df >= 1.0) || !df.is_finite() => Err(Error::Parameter(
                format!("t degrees of freedom must be >= 1, got {df}"),
            )),
            other => Ok(other),
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        match self {
            ErrorDist::Gaussian => Normal::standard().cdf(x),
            ErrorDist::Cauchy => 0.5 + x.atan() / std::f64::consts::PI,
            ErrorDist::StudentT(df) => StudentsT::new(0.0, 1.0, df).expect("validated df").cdf(x),
        }
    }

    /// Inverse distribution function. The t quantile is found by bisection
    /// on the distribution function to an absolute tolerance of 1e-10.
    pub fn quantile(self, tau: QuantileLevel) -> f64 {
        let p = tau.value();
        match self {
            ErrorDist::Gaussian => Normal::standard().inverse_cdf(p),
            ErrorDist::Cauchy => (std::f64::consts::PI * (p - 0.5)).tan(),
            ErrorDist::StudentT(_) => {
                if p == 0.5 {
                    return 0.0;
                }
                let (mut lo, mut hi) = (-1.0, 1.0);
                while self.cdf(lo) > p {
                    lo *= 2.0;
                }
                while self.cdf(hi) < p {
                    hi *= 2.0;
                }
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            ErrorDist::Gaussian => StandardNormal.sample(rng),
            ErrorDist::Cauchy => (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan(),
            ErrorDist::StudentT(df) => {
                let z: f64 = StandardNormal.sample(rng);
                let v = ChiSquared::new(df).expect("validated df").sample(rng);
                z / (v / df).sqrt()
            }
        }
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorDist::Gaussian => f.write_str("gaussian"),
            ErrorDist::Cauchy => f.write_str("cauchy"),
            ErrorDist::StudentT(df) => write!(f, "t{df}"),
        }
    }
}

impl FromStr for ErrorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" | "normal" => Ok(ErrorDist::Gaussian),
            "cauchy" => Ok(ErrorDist::Cauchy),
            _ => s
                .strip_prefix('t')
                .and_then(|df| df.parse::<f64>().ok())
                .map(ErrorDist::StudentT)
                .ok_or_else(|| {
                    Error::Parameter(format!("unknown error law {s:?} (gaussian, cauchy, t<df>)"))
                })?
                .validate(),
        }
    }
}

/// Regression function of a scenario at the point `x`.
pub fn f0_eval(scenario: Scenario, x: &[f64]) -> Result<f64> {
    if x.len() != scenario.dim() {
        return Err(Error::Dimension {
            what: "point dimension vs scenario",
            expected: scenario.dim(),
            got: x.len(),
        });
    }
    Ok(match scenario {
        Scenario::Step => indicator(1.25 * x[0] + 0.75 * x[1] > 1.0),
        Scenario::Disk => indicator((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) <= 2.0 / 1000.0),
        Scenario::Smooth => 0.4 * x[0] * x[0] + 0.6 * x[1] * x[1],
        Scenario::Heteroscedastic => {
            let near: f64 = x.iter().map(|v| (v - 0.25).powi(2)).sum();
            let far: f64 = x.iter().map(|v| (v - 0.75).powi(2)).sum();
            // equidistant points fall in the "otherwise" branch
            if near < far {
                1.0
            } else {
                -1.0
            }
        }
    })
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// I.i.d. covariates from the scenario's design density.
pub fn sample_covariates(scenario: Scenario, n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    let mut rng = stream(seed, COVARIATE_STREAM);
    let d = scenario.dim();
    let mut x = Array2::zeros((n, d));
    for mut row in x.outer_iter_mut() {
        match scenario {
            Scenario::Disk => {
                let p = sample_disk_design(&mut rng);
                row[0] = p[0];
                row[1] = p[1];
            }
            _ => row.iter_mut().for_each(|v| *v = rng.random::<f64>()),
        }
    }
    Ok(x)
}

/// Region mixture: the frame `[0,1]^2 \ [0.4,0.6]^2`, the core
/// `[0.45,0.55]^2` and the ring between them, each uniform inside.
fn sample_disk_design<R: Rng>(rng: &mut R) -> [f64; 2] {
    let inside = |p: &[f64; 2], lo: f64, hi: f64| p.iter().all(|&v| (lo..=hi).contains(&v));
    let mut uniform = |lo: f64, hi: f64| {
        [
            lo + (hi - lo) * rng.random::<f64>(),
            lo + (hi - lo) * rng.random::<f64>(),
        ]
    };
    let u: f64 = uniform(0.0, 1.0)[0];
    if u < SCENARIO2_WEIGHTS[0] {
        loop {
            let p = uniform(0.0, 1.0);
            if !inside(&p, 0.4, 0.6) {
                return p;
            }
        }
    } else if u < SCENARIO2_WEIGHTS[0] + SCENARIO2_WEIGHTS[1] {
        uniform(0.45, 0.55)
    } else {
        loop {
            let p = uniform(0.4, 0.6);
            if !inside(&p, 0.45, 0.55) {
                return p;
            }
        }
    }
}

/// I.i.d. standardized errors.
pub fn sample_errors(dist: ErrorDist, n: usize, seed: u64) -> Result<Vec<f64>> {
    let dist = dist.validate()?;
    let mut rng = stream(seed, ERROR_STREAM);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// A generated data set together with its true conditional quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSample {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub scenario: Scenario,
    pub error: ErrorDist,
    pub tau: QuantileLevel,
    pub seed: u64,
}

impl ScenarioSample {
    pub fn dataset(&self) -> Dataset {
        Dataset::new(self.x.clone(), self.y.clone()).expect("generated data is finite")
    }

    /// Sum of the design's region weights (1 for every scenario).
    pub fn normalization(&self) -> f64 {
        match self.scenario {
            Scenario::Disk => SCENARIO2_WEIGHTS.iter().sum(),
            _ => 1.0,
        }
    }

    /// CSV with a `#` metadata line, then columns `x1..xd,y,theta_star`.
    /// Values use the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# scenario={} tau={} error={} seed={} n={} normalization={}",
            self.scenario,
            self.tau.value(),
            self.error,
            self.seed,
            self.y.len(),
            self.normalization()
        )?;
        let d = self.x.ncols();
        let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},y,theta_star", header.join(","))?;
        for (i, row) in self.x.outer_iter().enumerate() {
            for v in row.iter() {
                write!(w, "{v:?},")?;
            }
            writeln!(w, "{:?},{:?}", self.y[i], self.theta_star[i])?;
        }
        Ok(())
    }
}

/// Draws one data set of a scenario.
pub fn gen_scenario(
    scenario: Scenario,
    n: usize,
    tau: QuantileLevel,
    error: ErrorDist,
    seed: u64,
) -> Result<ScenarioSample> {
    let x = sample_covariates(scenario, n, seed)?;
    let eps = sample_errors(error, n, seed)?;
    let q = error.quantile(tau);
    let mut y = Vec::with_capacity(n);
    let mut theta_star = Vec::with_capacity(n);
    for (row, e) in x.outer_iter().zip(&eps) {
        let row = row.to_vec();
        let f = f0_eval(scenario, &row)?;
        let s = scenario.noise_scale(&row);
        y.push(f + s * e);
        theta_star.push(f + s * q);
    }
    Ok(ScenarioSample {
        x,
        y,
        theta_star,
        scenario,
        error,
        tau,
        seed,
    })
}
