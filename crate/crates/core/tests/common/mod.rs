#![allow(dead_code)]

use ndarray::Array2;
use qknn::{Dataset, KnnGraph, Metric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn path(n: usize) -> KnnGraph {
    let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    KnnGraph::from_edges(n, 1, &e).unwrap()
}

pub fn star(n: usize) -> KnnGraph {
    let e: Vec<_> = (1..n).map(|i| (0, i)).collect();
    KnnGraph::from_edges(n, 1, &e).unwrap()
}

pub fn cycle(n: usize) -> KnnGraph {
    let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    if n > 2 {
        e.push((0, n - 1));
    }
    KnnGraph::from_edges(n, 2, &e).unwrap()
}

pub fn complete(n: usize) -> KnnGraph {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            e.push((i, j));
        }
    }
    KnnGraph::from_edges(n, n.saturating_sub(1), &e).unwrap()
}

pub fn prox_objective(g: &KnnGraph, v: &[f64], gamma: f64, z: &[f64]) -> f64 {
    let fit: f64 = v.iter().zip(z).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    fit + gamma * g.total_variation(z).unwrap()
}

/// Exact minimizer of `1/2 ||v - z||^2 + gamma TV(z)` for tiny graphs.
///
/// The minimizer has some weak ordering of its values. For a fixed ordered
/// partition into groups with distinct values, the objective is a smooth
/// quadratic whose stationary point is `c_g = mean(v_g) - gamma s_g / |g|`,
/// `s_g` the net count of cross edges pointing to lower groups. Evaluating
/// the true objective at every such candidate and keeping the best recovers
/// the global minimum.
pub fn brute_force_prox(g: &KnnGraph, v: &[f64], gamma: f64) -> (Vec<f64>, f64) {
    let n = v.len();
    let mut best = (v.to_vec(), prox_objective(g, v, gamma, v));
    let mut rank = vec![0usize; n];
    ordered_partitions(n, 0, &mut rank, &mut |rank, groups| {
        let mut sum = vec![0.0; groups];
        let mut size = vec![0.0; groups];
        for (i, &r) in rank.iter().enumerate() {
            sum[r] += v[i];
            size[r] += 1.0;
        }
        let mut net = vec![0.0; groups];
        for &(i, j) in g.edges() {
            let (a, b) = (rank[i], rank[j]);
            if a > b {
                net[a] += 1.0;
                net[b] -= 1.0;
            } else if b > a {
                net[b] += 1.0;
                net[a] -= 1.0;
            }
        }
        let z: Vec<f64> = rank
            .iter()
            .map(|&r| (sum[r] - gamma * net[r]) / size[r])
            .collect();
        let f = prox_objective(g, v, gamma, &z);
        if f < best.1 {
            best = (z, f);
        }
    });
    best
}

/// Visits every surjection `rank: [0,n) -> [0,groups)` for every `groups`,
/// i.e. every ordered set partition (weak ordering) of `n` items.
fn ordered_partitions(n: usize, i: usize, rank: &mut [usize], f: &mut dyn FnMut(&[usize], usize)) {
    if i == n {
        let groups = rank.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; groups];
        rank.iter().for_each(|&r| seen[r] = true);
        if seen.iter().all(|&s| s) {
            f(rank, groups);
        }
        return;
    }
    for r in 0..n {
        rank[i] = r;
        ordered_partitions(n, i + 1, rank, f);
    }
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Uniform design on `[0,1]^d` with `y = f(x) + noise(rng)`.
pub fn random_instance(
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    f: impl Fn(&[f64], &mut ChaCha8Rng) -> f64,
) -> (Dataset, KnnGraph) {
    let mut r = rng(seed);
    let x = Array2::from_shape_fn((n, d), |_| r.random::<f64>());
    let y = x
        .outer_iter()
        .map(|row| f(row.as_slice().unwrap(), &mut r))
        .collect();
    let g = KnnGraph::build(x.view(), k, Metric::Euclidean).unwrap();
    (Dataset::new(x, y).unwrap(), g)
}
