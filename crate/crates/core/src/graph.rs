//! K-nearest-neighbor graphs over covariate rows.
//!
//! Vertices are the rows of the covariate matrix. An undirected edge joins
//! `i` and `j` when either point is among the other's `k` nearest neighbors.
//! Edges are stored as `(i, j)` with `i < j`, which fixes the orientation of
//! the incidence operator: row `p` of the operator is `+1` at `i` and `-1` at `j`.

use std::fmt;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};

/// Regression input: an `n x d` covariate matrix and a length-`n` response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::Input(format!(
                "empty dataset ({n} rows, {d} columns)"
            )));
        }
        check_len("response length vs covariate rows", n, y.len())?;
        if let Some(i) = x
            .outer_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Input(format!("non-finite covariate in row {i}")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite response in row {i}")));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select(ndarray::Axis(0), idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Dataset { x, y }
    }
}

/// Distance used for neighbor search. Only Euclidean is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Euclidean => f.write_str("euclidean"),
        }
    }
}

/// Undirected K-NN graph with a fixed edge orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    edges: Vec<(usize, usize)>,
    metric: Metric,
}

impl KnnGraph {
    /// Builds the symmetric ("or" rule) K-NN graph of the rows of `x`.
    ///
    /// Neighbor search is an exact O(n^2 d) scan, parallel over rows.
    /// Equidistant candidates are ranked by smaller vertex index, so the
    /// result is deterministic and independent of the thread count.
    pub fn build(x: ArrayView2<'_, f64>, k: usize, metric: Metric) -> Result<Self> {
        let n = x.nrows();
        if n < 2 || k < 1 || k > n - 1 {
            return Err(Error::Parameter(format!(
                "k must satisfy 1 <= k <= n-1 (k={k}, n={n})"
            )));
        }
        if let Some(i) = x
            .outer_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Input(format!("non-finite covariate in row {i}")));
        }
        let neighbors: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| nearest(x, x.row(i), k, Some(i)))
            .collect();
        let mut edges: Vec<(usize, usize)> = neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().map(move |&j| (i.min(j), i.max(j))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            n,
            k,
            edges,
            metric,
        })
    }

    /// Graph from an explicit edge list. Pairs are reoriented to `i < j`
    /// and deduplicated; self-loops and out-of-range vertices are rejected.
    /// `k` is recorded as metadata only.
    pub fn from_edges(n: usize, k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("graph needs at least one vertex".into()));
        }
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Input(format!("self-loop at vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) out of range for n={n}"
                )));
            }
            out.push((a.min(b), a.max(b)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self {
            n,
            k,
            edges: out,
            metric: Metric::Euclidean,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of edges.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Edge differences `theta_i - theta_j`, in edge-list order.
    pub fn incidence_apply(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len("theta vs vertex count", self.n, theta.len())?;
        let mut out = vec![0.0; self.m()];
        self.apply_into(theta, &mut out);
        Ok(out)
    }

    /// Adjoint of [`incidence_apply`](Self::incidence_apply).
    pub fn incidence_transpose_apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("w vs edge count", self.m(), w.len())?;
        let mut out = vec![0.0; self.n];
        self.transpose_apply_into(w, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, theta: &[f64], out: &mut [f64]) {
        for (o, &(i, j)) in out.iter_mut().zip(&self.edges) {
            *o = theta[i] - theta[j];
        }
    }

    pub(crate) fn transpose_apply_into(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&wp, &(i, j)) in w.iter().zip(&self.edges) {
            out[i] += wp;
            out[j] -= wp;
        }
    }

    /// `||grad theta||_1`, the total variation of `theta` over the graph.
    pub fn total_variation(&self, theta: &[f64]) -> Result<f64> {
        check_len("theta vs vertex count", self.n, theta.len())?;
        Ok(crate::numeric::sum(
            self.edges.iter().map(|&(i, j)| (theta[i] - theta[j]).abs()),
        ))
    }

    /// Components of the subgraph keeping only edges with `active[p]`.
    ///
    /// Each vertex is labeled with the smallest vertex index of its component.
    pub fn connected_components(&self, active: &[bool]) -> Result<(usize, Vec<usize>)> {
        check_len("edge mask vs edge count", self.m(), active.len())?;
        let mut uf = UnionFind::new(self.n);
        for (&(i, j), _) in self.edges.iter().zip(active).filter(|(_, &a)| a) {
            uf.union(i, j);
        }
        let labels: Vec<usize> = (0..self.n).map(|v| uf.find(v)).collect();
        let count = labels.iter().enumerate().filter(|&(v, &l)| v == l).count();
        Ok((count, labels))
    }

    /// Writes the edge list: a `knn-graph n=<n> k=<k> m=<m>` header, then one
    /// 0-based `i j` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "knn-graph n={} k={} m={}", self.n, self.k, self.m())?;
        for &(i, j) in &self.edges {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }

    /// Parses the format produced by [`write_edge_list`](Self::write_edge_list).
    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Input("empty edge list".into()))?
            .map_err(|e| Error::Input(e.to_string()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("knn-graph") {
            return Err(Error::Input(format!("bad edge-list header: {header}")));
        }
        let mut get = |key: &str| -> Result<usize> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Input(format!("bad edge-list header field {key}: {header}")))
        };
        let (n, k, m) = (get("n=")?, get("k=")?, get("m=")?);
        let mut edges = Vec::with_capacity(m);
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Input(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Input(format!("line {}: bad edge {line:?}", lineno + 2)))?;
            if pair.len() != 2 {
                return Err(Error::Input(format!(
                    "line {}: bad edge {line:?}",
                    lineno + 2
                )));
            }
            edges.push((pair[0], pair[1]));
        }
        check_len("edge count vs header", m, edges.len())?;
        Self::from_edges(n, k, &edges)
    }
}

/// Indices of the `k` rows of `x` closest to `q`, optionally skipping row
/// `exclude`. Ties are broken by smaller row index; the result is sorted by
/// (distance, index).
fn nearest(
    x: ArrayView2<'_, f64>,
    q: ArrayView1<'_, f64>,
    k: usize,
    exclude: Option<usize>,
) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = x
        .outer_iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != exclude)
        .map(|(j, row)| {
            let d: f64 = row
                .iter()
                .zip(q.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, j)
        })
        .collect();
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_dist);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_dist);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// K-NN prediction: each query receives the average fitted value of its `k`
/// nearest training rows.
pub fn predict(
    train_x: ArrayView2<'_, f64>,
    theta: &[f64],
    query_x: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<f64>> {
    let n = train_x.nrows();
    check_len("theta vs training rows", n, theta.len())?;
    check_len(
        "query columns vs training columns",
        train_x.ncols(),
        query_x.ncols(),
    )?;
    if k < 1 || k > n {
        return Err(Error::Parameter(format!(
            "k must satisfy 1 <= k <= n (k={k}, n={n})"
        )));
    }
    let finite = |m: ArrayView2<'_, f64>| m.iter().all(|v| v.is_finite());
    if !finite(train_x) || !finite(query_x) || theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite value in prediction input".into()));
    }
    Ok(query_x
        .outer_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|q| {
            let nb = nearest(train_x, q, k, None);
            crate::numeric::sum(nb.iter().map(|&i| theta[i])) / k as f64
        })
        .collect())
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    // The smaller root always wins, so every root is its component's minimum.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}
