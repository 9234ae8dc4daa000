use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::graph::{Dataset, KnnGraph};
use crate::numeric::norm2;
use crate::objective::{pinball, quantile_objective, QuantileLevel};

/// Outcome of [`check_optimality`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityCheck {
    /// No probe improved the objective by more than `1e-8 * (1 + |f(theta)|)`.
    pub is_optimal: bool,
    /// Largest objective decrease found, `f(theta) - min_probe f`, clamped at 0.
    pub best_gap: f64,
    /// `best_gap / (1 + |f(theta)|)`.
    pub relative_gap: f64,
    pub objective: f64,
}

/// Probes a candidate minimizer of the penalized quantile objective.
///
/// Tries `probes` random directions (uniform on the sphere) at the radii
/// `radius`, `radius / 10` and `radius / 100`, then one Gauss-Seidel pass of
/// exact coordinatewise minimization. The objective is convex, so failing to
/// find local improvement is evidence of global optimality.
#[allow(clippy::too_many_arguments)]
pub fn check_optimality(
    data: &Dataset,
    graph: &KnnGraph,
    tau: QuantileLevel,
    lambda: f64,
    theta: &[f64],
    probes: usize,
    radius: f64,
    seed: u64,
) -> Result<OptimalityCheck> {
    if probes < 1 {
        return Err(Error::Parameter("probes must be >= 1".into()));
    }
    check_len("graph vertices vs data rows", data.n(), graph.n())?;
    check_len("theta vs data rows", data.n(), theta.len())?;
    let y = data.y();
    let n = y.len();
    let f = |t: &[f64]| quantile_objective(y, t, tau, lambda, graph);
    let base = f(theta)?;
    let mut best = base;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cand = vec![0.0; n];
    for _ in 0..probes {
        let mut dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = norm2(&dir);
        if norm == 0.0 {
            continue;
        }
        dir.iter_mut().for_each(|d| *d /= norm);
        for r in [radius, radius / 10.0, radius / 100.0] {
            for ((c, &t), &d) in cand.iter_mut().zip(theta).zip(&dir) {
                *c = t + r * d;
            }
            best = best.min(f(&cand)?);
        }
    }

    let mut adj = vec![Vec::new(); n];
    for &(i, j) in graph.edges() {
        adj[i].push(j);
        adj[j].push(i);
    }
    cand.copy_from_slice(theta);
    for i in 0..n {
        // 1-D convex piecewise-linear in cand[i]: minimum sits on a breakpoint
        let local = |t: f64, c: &[f64]| {
            pinball(y[i] - t, tau) + lambda * adj[i].iter().map(|&j| (t - c[j]).abs()).sum::<f64>()
        };
        let mut arg = cand[i];
        let mut val = local(arg, &cand);
        for b in std::iter::once(y[i]).chain(adj[i].iter().map(|&j| cand[j])) {
            let v = local(b, &cand);
            if v < val {
                val = v;
                arg = b;
            }
        }
        cand[i] = arg;
    }
    best = best.min(f(&cand)?);

    let best_gap = (base - best).max(0.0);
    let scale = 1.0 + base.abs();
    Ok(OptimalityCheck {
        is_optimal: best_gap <= 1e-8 * scale,
        best_gap,
        relative_gap: best_gap / scale,
        objective: base,
    })
}
