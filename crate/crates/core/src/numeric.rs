//! Small numerical helpers shared across modules.
//!
//! All reductions go through Neumaier's compensated summation so that sums
//! do not depend on how a vector was produced (serial or parallel code paths
//! hand the same ordered slice to these helpers).

/// Compensated (Neumaier) sum of an iterator of values.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut s = 0.0_f64;
    let mut c = 0.0_f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.iter().zip(b).map(|(x, y)| x * y))
}

pub fn norm2(a: &[f64]) -> f64 {
    let scale = norm_inf(a);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * sum(a.iter().map(|x| (x / scale) * (x / scale))).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Euclidean distance between two equally long slices.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    norm2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Sample median; for even length the average of the two middle order statistics.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
