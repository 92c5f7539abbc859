//! Shared helpers for the integration suites: the pass/fail reporting line
//! and independently derived convex oracles used to cross-check iterates.

use ndarray::Array1;

/// Print the one-line verdict for an acceptance criterion. Returns `passed`
/// so call sites can assert on it after the line is out.
pub fn criterion(number: usize, title: &str, passed: bool, detail: &str) -> bool {
    println!(
        "acceptance criterion {number:2} ({title}): {} - {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    passed
}

/// Exact minimizer of the averaged quadratic-plus-l1 aggregate
///   min_x  mean_i [ <g_i, x - a_i> + (L/2) ||x - a_i||^2 ] + w ||x||_1,
/// derived coordinatewise from the stationarity conditions of the strictly
/// convex separable objective: with b = mean(a) - mean(g)/L, the optimal
/// coordinate is the root of L (x - b_j) + w s = 0 over the three sign
/// cases, which exists and is unique for each j.
pub fn l1_quadratic_oracle(
    lipschitz: f64,
    mean_anchor: &Array1<f64>,
    mean_grad: &Array1<f64>,
    weight: f64,
) -> Array1<f64> {
    assert!(lipschitz > 0.0 && weight >= 0.0);
    let b = mean_anchor - &mean_grad.mapv(|g| g / lipschitz);
    b.mapv(|bj| {
        let pos = bj - weight / lipschitz;
        let neg = bj + weight / lipschitz;
        if pos > 0.0 {
            pos
        } else if neg < 0.0 {
            neg
        } else {
            0.0
        }
    })
}

/// Worst-coordinate violation of the first-order conditions of the same
/// aggregate at `x`: zero coordinates need |grad| <= w, active coordinates
/// need grad + w sign(x) = 0.
pub fn l1_aggregate_kkt(
    lipschitz: f64,
    mean_anchor: &Array1<f64>,
    mean_grad: &Array1<f64>,
    weight: f64,
    x: &Array1<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        let smooth = mean_grad[j] + lipschitz * (x[j] - mean_anchor[j]);
        let v = if x[j] > 0.0 {
            (smooth + weight).abs()
        } else if x[j] < 0.0 {
            (smooth - weight).abs()
        } else {
            (smooth.abs() - weight).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Median of a nonempty slice (average of the middle pair when even).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
