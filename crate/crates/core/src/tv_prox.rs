//! Inner kernels: the graph fused-lasso proximal operator and the weighted
//! graph-Laplacian linear solve.
//!
//! The proximal operator
//!
//! ```text
//! prox(v) = argmin_z 1/2 ||v - z||^2 + gamma ||D z||_1
//! ```
//!
//! (`D` the oriented incidence matrix) is computed through its dual
//!
//! ```text
//! min_w 1/2 ||v - D^T w||^2   subject to ||w||_inf <= gamma,   z = v - D^T w,
//! ```
//!
//! a box-constrained quadratic solved with accelerated projected gradient
//! (FISTA) and gradient-based adaptive restart. Convergence is judged by the
//! projected-gradient residual
//!
//! ```text
//! r_p = w_p - clip(w_p + (D z)_p, -gamma, gamma),
//! ```
//!
//! which vanishes exactly when the KKT conditions hold: `|w_p| <= gamma`,
//! `(D z)_p = 0` wherever `|w_p| < gamma`, and `w_p = gamma * sign((D z)_p)`
//! wherever `(D z)_p != 0`.

use crate::error::{check_len, Error, Result};
use crate::graph::KnnGraph;
use crate::numeric::{dot, norm2};

/// Stopping rule and warm start for [`fused_lasso_prox`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProxOptions {
    /// Absolute tolerance on the KKT residual (max norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Starting dual vector, one entry per edge. Clipped to the feasible box.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for ProxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            warm_start: None,
        }
    }
}

/// Output of the proximal operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxSolution {
    pub z: Vec<f64>,
    pub dual: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Evaluates the graph fused-lasso proximal operator with parameter `gamma`.
///
/// Returns [`Error::NonConvergence`] carrying the final KKT residual when
/// `opts.max_iter` is exhausted.
pub fn fused_lasso_prox(
    graph: &KnnGraph,
    v: &[f64],
    gamma: f64,
    opts: &ProxOptions,
) -> Result<ProxSolution> {
    check_len("v vs vertex count", graph.n(), v.len())?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter < 1 {
        return Err(Error::Parameter(
            "prox needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let mut dual = match &opts.warm_start {
        Some(w) => {
            check_len("warm-start dual vs edge count", graph.m(), w.len())?;
            w.clone()
        }
        None => vec![0.0; graph.m()],
    };
    let mut solver = FusedLassoProx::new(graph);
    let mut z = vec![0.0; graph.n()];
    let stats = solver.solve(v, gamma, opts.tol, opts.max_iter, &mut dual, &mut z);
    if !stats.converged {
        return Err(Error::NonConvergence {
            iterations: stats.iterations,
            residual: stats.kkt_residual,
        });
    }
    Ok(ProxSolution {
        z,
        dual,
        iterations: stats.iterations,
        kkt_residual: stats.kkt_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxStats {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Reusable prox solver bound to one graph. Caches the step size and the
/// scratch buffers so repeated calls (one per ADMM iteration) do not allocate.
#[derive(Debug, Clone)]
pub struct FusedLassoProx<'g> {
    graph: &'g KnnGraph,
    lipschitz: f64,
    w_prev: Vec<f64>,
    extrap: Vec<f64>,
    dz: Vec<f64>,
    zx: Vec<f64>,
}

impl<'g> FusedLassoProx<'g> {
    pub fn new(graph: &'g KnnGraph) -> Self {
        let m = graph.m();
        Self {
            graph,
            lipschitz: incidence_norm_sq(graph),
            w_prev: vec![0.0; m],
            extrap: vec![0.0; m],
            dz: vec![0.0; m],
            zx: vec![0.0; graph.n()],
        }
    }

    /// Upper estimate of `||D||_2^2` used as the inverse step size.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Runs FISTA from `dual` (updated in place, clipped into the box first)
    /// and writes the primal solution into `z`.
    pub fn solve(
        &mut self,
        v: &[f64],
        gamma: f64,
        tol: f64,
        max_iter: usize,
        dual: &mut [f64],
        z: &mut [f64],
    ) -> ProxStats {
        let g = self.graph;
        if g.m() == 0 || gamma == 0.0 {
            dual.iter_mut().for_each(|w| *w = 0.0);
            z.copy_from_slice(v);
            return ProxStats {
                iterations: 0,
                kkt_residual: 0.0,
                converged: true,
            };
        }
        let step = 1.0 / self.lipschitz;
        let clip = |x: f64| x.clamp(-gamma, gamma);
        dual.iter_mut().for_each(|w| *w = clip(*w));

        // residual at the starting point
        primal_from_dual(g, v, dual, z);
        g.apply_into(z, &mut self.dz);
        let mut res = kkt_residual(dual, &self.dz, gamma);
        if res <= tol {
            return ProxStats {
                iterations: 0,
                kkt_residual: res,
                converged: true,
            };
        }

        self.extrap.copy_from_slice(dual);
        let mut t = 1.0_f64;
        for it in 1..=max_iter {
            // gradient step at the extrapolated point
            primal_from_dual(g, v, &self.extrap, &mut self.zx);
            g.apply_into(&self.zx, &mut self.dz);
            self.w_prev.copy_from_slice(dual);
            for ((w, &e), &d) in dual.iter_mut().zip(&self.extrap).zip(&self.dz) {
                *w = clip(e + step * d);
            }

            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            // restart when the momentum direction opposes the gradient map
            let mut align = 0.0;
            for ((&e, &w), &wp) in self.extrap.iter().zip(dual.iter()).zip(&self.w_prev) {
                align += (e - w) * (w - wp);
            }
            if align > 0.0 {
                t = 1.0;
                self.extrap.copy_from_slice(dual);
            } else {
                let beta = (t - 1.0) / t_next;
                for ((e, &w), &wp) in self.extrap.iter_mut().zip(dual.iter()).zip(&self.w_prev) {
                    *e = w + beta * (w - wp);
                }
                t = t_next;
            }

            if it % 4 == 0 || it == max_iter {
                primal_from_dual(g, v, dual, z);
                g.apply_into(z, &mut self.dz);
                res = kkt_residual(dual, &self.dz, gamma);
                if res <= tol {
                    return ProxStats {
                        iterations: it,
                        kkt_residual: res,
                        converged: true,
                    };
                }
            }
        }
        primal_from_dual(g, v, dual, z);
        ProxStats {
            iterations: max_iter,
            kkt_residual: res,
            converged: false,
        }
    }
}

fn primal_from_dual(g: &KnnGraph, v: &[f64], w: &[f64], z: &mut [f64]) {
    g.transpose_apply_into(w, z);
    for (zi, &vi) in z.iter_mut().zip(v) {
        *zi = vi - *zi;
    }
}

/// Max-norm of the projected-gradient residual `w - clip(w + D z)`.
pub fn kkt_residual(dual: &[f64], dz: &[f64], gamma: f64) -> f64 {
    dual.iter()
        .zip(dz)
        .map(|(&w, &d)| (w - (w + d).clamp(-gamma, gamma)).abs())
        .fold(0.0, f64::max)
}

/// `||D||_2^2`, the largest eigenvalue of the graph Laplacian `D^T D`, by
/// power iteration to 1e-6 relative change. The returned value is inflated
/// by 1% and capped by the bound `max_{(i,j)} (deg_i + deg_j)`.
pub fn incidence_norm_sq(graph: &KnnGraph) -> f64 {
    let (n, m) = (graph.n(), graph.m());
    if m == 0 {
        return 0.0;
    }
    let deg = graph.degrees();
    let bound = graph
        .edges()
        .iter()
        .map(|&(i, j)| (deg[i] + deg[j]) as f64)
        .fold(0.0, f64::max);
    // deterministic start vector with no component along the constants
    let mut x: Vec<f64> = (0..n)
        .map(|i| ((i as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0 - 0.5)
        .collect();
    let mut dx = vec![0.0; m];
    let mut lx = vec![0.0; n];
    let mut est = 0.0_f64;
    for _ in 0..5000 {
        let nx = norm2(&x);
        if nx == 0.0 {
            return bound;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        graph.apply_into(&x, &mut dx);
        graph.transpose_apply_into(&dx, &mut lx);
        let rq = dot(&x, &lx);
        let done = (rq - est).abs() <= 1e-6 * rq;
        est = rq;
        std::mem::swap(&mut x, &mut lx);
        if done {
            break;
        }
    }
    (1.01 * est).min(bound).max(est)
}

/// Solves `(W + lambda D^T Wt^2 D) theta = W y` for positive vertex weights
/// `w` and positive edge weights `wt`.
///
/// Small systems (`n <= 500`) use a dense Cholesky factorization; larger ones
/// use conjugate gradient with diagonal preconditioning. Either path is
/// required to reach a relative residual of `1e-10`.
pub fn weighted_laplacian_solve(
    graph: &KnnGraph,
    w: &[f64],
    wt: &[f64],
    lambda: f64,
    y: &[f64],
) -> Result<Vec<f64>> {
    let sys = LaplacianSystem::new(graph, w, wt, lambda)?;
    check_len("y vs vertex count", graph.n(), y.len())?;
    let rhs: Vec<f64> = w.iter().zip(y).map(|(a, b)| a * b).collect();
    sys.solve(&rhs, None)
}

pub(crate) const LAPLACIAN_REL_TOL: f64 = 1e-10;
const DENSE_MAX_N: usize = 500;

/// The matrix `W + lambda D^T Wt^2 D` in a form that supports products and
/// direct factorization.
pub(crate) struct LaplacianSystem<'g> {
    graph: &'g KnnGraph,
    diag: Vec<f64>,
    edge_w: Vec<f64>,
}

impl<'g> LaplacianSystem<'g> {
    pub(crate) fn new(graph: &'g KnnGraph, w: &[f64], wt: &[f64], lambda: f64) -> Result<Self> {
        check_len("vertex weights vs vertex count", graph.n(), w.len())?;
        check_len("edge weights vs edge count", graph.m(), wt.len())?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if w.iter().chain(wt).any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Parameter(
                "weights must be finite and positive".into(),
            ));
        }
        let edge_w: Vec<f64> = wt.iter().map(|&a| lambda * a * a).collect();
        let mut diag = w.to_vec();
        for (&(i, j), &e) in graph.edges().iter().zip(&edge_w) {
            diag[i] += e;
            diag[j] += e;
        }
        Ok(Self {
            graph,
            diag,
            edge_w,
        })
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &d), &xi) in out.iter_mut().zip(&self.diag).zip(x) {
            *o = d * xi;
        }
        for (&(i, j), &e) in self.graph.edges().iter().zip(&self.edge_w) {
            out[i] -= e * x[j];
            out[j] -= e * x[i];
        }
    }

    /// `b - A x`, accumulated in double-double arithmetic so refinement is
    /// not limited by cancellation between large diagonal and edge terms.
    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut hi = b.to_vec();
        let mut lo = vec![0.0; b.len()];
        let mut add = |i: usize, a: f64, c: f64| {
            let p = a * c;
            let perr = a.mul_add(c, -p);
            let s = hi[i] + p;
            let bb = s - hi[i];
            let serr = (hi[i] - (s - bb)) + (p - bb);
            hi[i] = s;
            lo[i] += serr + perr;
        };
        for (i, (&d, &xi)) in self.diag.iter().zip(x).enumerate() {
            add(i, -d, xi);
        }
        for (&(i, j), &e) in self.graph.edges().iter().zip(&self.edge_w) {
            add(i, e, x[j]);
            add(j, e, x[i]);
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }

    /// `||b - A x|| / max(||b||, || |A| |x| ||)`. The second scale only matters
    /// when edge weights are so large that rounding `x` itself leaves a
    /// residual above the target.
    fn rel_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let r = self.residual(x, b);
        let mut abs_ax: Vec<f64> = self
            .diag
            .iter()
            .zip(x)
            .map(|(d, xi)| d * xi.abs())
            .collect();
        for (&(i, j), &e) in self.graph.edges().iter().zip(&self.edge_w) {
            abs_ax[i] += e * x[j].abs();
            abs_ax[j] += e * x[i].abs();
        }
        let scale = norm2(b).max(norm2(&abs_ax));
        if scale == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / scale
        }
    }

    pub(crate) fn solve(&self, b: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.graph.n() <= DENSE_MAX_N {
            self.solve_dense(b)
        } else {
            self.solve_cg(b, x0)
        }
    }

    fn solve_dense(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.graph.n();
        // factor S A S with S = diag(A)^{-1/2}; MM weights span many decades
        let scale: Vec<f64> = self.diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        for (&(i, j), &e) in self.graph.edges().iter().zip(&self.edge_w) {
            a[i * n + j] -= e * scale[i] * scale[j];
            a[j * n + i] -= e * scale[i] * scale[j];
        }
        // in-place lower Cholesky factor
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::Internal(format!("Cholesky breakdown at pivot {j}")));
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        let chol_solve = |rhs: &[f64]| -> Vec<f64> {
            let mut x: Vec<f64> = rhs.iter().zip(&scale).map(|(r, si)| r * si).collect();
            for i in 0..n {
                let mut s = x[i];
                for k in 0..i {
                    s -= a[i * n + k] * x[k];
                }
                x[i] = s / a[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = x[i];
                for k in (i + 1)..n {
                    s -= a[k * n + i] * x[k];
                }
                x[i] = s / a[i * n + i];
            }
            x.iter_mut().zip(&scale).for_each(|(xi, si)| *xi *= si);
            x
        };
        let mut x = chol_solve(b);
        for _ in 0..5 {
            if self.rel_residual(&x, b) <= LAPLACIAN_REL_TOL {
                break;
            }
            let dx = chol_solve(&self.residual(&x, b));
            x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
        }
        let res = self.rel_residual(&x, b);
        if res > LAPLACIAN_REL_TOL {
            return Err(Error::Internal(format!("dense solve residual {res:.3e}")));
        }
        Ok(x)
    }

    fn solve_cg(&self, b: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.graph.n();
        let nb = norm2(b);
        if nb == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let max_iter = 20 * n + 1000;
        let mut used = 0;
        let mut zv = vec![0.0; n];
        let mut ap = vec![0.0; n];
        // Jacobi-preconditioned CG, restarted from the exactly recomputed
        // residual whenever the recursive one claims convergence
        loop {
            let res = self.rel_residual(&x, b);
            if res <= LAPLACIAN_REL_TOL {
                return Ok(x);
            }
            if used >= max_iter {
                return Err(Error::NonConvergence {
                    iterations: used,
                    residual: res,
                });
            }
            let mut r = self.residual(&x, b);
            let target = 0.1 * LAPLACIAN_REL_TOL * nb.max(norm2(&r) / res);
            zv.iter_mut()
                .zip(&r)
                .zip(&self.diag)
                .for_each(|((z, a), d)| *z = a / d);
            let mut p = zv.clone();
            let mut rz = dot(&r, &zv);
            let mut progressed = false;
            while used < max_iter && norm2(&r) > target {
                used += 1;
                progressed = true;
                self.mul(&p, &mut ap);
                let pap = dot(&p, &ap);
                if !(pap > 0.0) {
                    return Err(Error::Internal("conjugate gradient breakdown".into()));
                }
                let alpha = rz / pap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                    zv[i] = r[i] / self.diag[i];
                }
                let rz_next = dot(&r, &zv);
                let beta = rz_next / rz;
                rz = rz_next;
                for i in 0..n {
                    p[i] = zv[i] + beta * p[i];
                }
            }
            if !progressed {
                // rounding floor: the recursive residual cannot go lower
                let res = self.rel_residual(&x, b);
                return if res <= LAPLACIAN_REL_TOL {
                    Ok(x)
                } else {
                    Err(Error::NonConvergence {
                        iterations: used,
                        residual: res,
                    })
                };
            }
        }
    }
}
