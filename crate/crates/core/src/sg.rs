//! Quadratic surrogates that reduce aggregate minimization to closed-form
//! recursions: the classical stochastic gradient step, its projected
//! variant, and the l1-regularized variant via soft thresholding.
//!
//! For a smooth sampled objective g1 with gradient-Lipschitz constant L, the
//! bound anchored at y is g1(y, xi) + <grad g1(y, xi), x - y> + (L/2)||x-y||^2.
//! Averaging r such bounds gives an isotropic quadratic centered at
//! z^r = (1/r) sum_i (x^{i-1} - grad_i / L), so the exact aggregate minimizer
//! is z^r itself, its projection, or its soft threshold, depending on the
//! constraint and the nonsmooth part.

use ndarray::{Array1, Array2};

use crate::engine::{RunTrace, SurrogateModel, TraceRow};
use crate::error::{Error, Result};
use crate::util;

// ---------------------------------------------------------------------------
// Smooth sampled objectives
// ---------------------------------------------------------------------------

/// A sampled smooth objective g1(x, xi) with a known bound on the gradient's
/// Lipschitz constant.
pub trait SmoothObjective {
    type Sample: Clone;

    fn value(&self, x: &Array1<f64>, xi: &Self::Sample) -> f64;
    fn gradient(&self, x: &Array1<f64>, xi: &Self::Sample) -> Array1<f64>;
    fn lipschitz(&self) -> f64;
    fn dim(&self) -> usize;
}

/// g1(x, xi) = 1/2 (x - xi)^T Q (x - xi) for a fixed symmetric positive
/// semidefinite Q and shift samples xi.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    curvature: Array2<f64>,
    lipschitz: f64,
}

impl QuadraticProblem {
    /// Build with L estimated by power iteration on Q.
    pub fn new(curvature: Array2<f64>) -> Self {
        assert!(curvature.is_square());
        let lipschitz = power_iteration_bound(&curvature);
        Self { curvature, lipschitz }
    }

    /// Override the Lipschitz constant (diagnostics use deliberate
    /// underestimates to exercise negative controls).
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    /// Q = I in `dim` dimensions.
    pub fn isotropic(dim: usize) -> Self {
        Self { curvature: Array2::eye(dim), lipschitz: 1.0 }
    }

    pub fn curvature(&self) -> &Array2<f64> {
        &self.curvature
    }
}

impl SmoothObjective for QuadraticProblem {
    type Sample = Array1<f64>;

    fn value(&self, x: &Array1<f64>, xi: &Array1<f64>) -> f64 {
        let d = x - xi;
        0.5 * d.dot(&self.curvature.dot(&d))
    }

    fn gradient(&self, x: &Array1<f64>, xi: &Array1<f64>) -> Array1<f64> {
        self.curvature.dot(&(x - xi))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn dim(&self) -> usize {
        self.curvature.nrows()
    }
}

/// Largest-eigenvalue bound for a symmetric PSD matrix by power iteration,
/// with a small safety factor to absorb the iteration error.
pub fn power_iteration_bound(q: &Array2<f64>) -> f64 {
    let n = q.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0f64;
    for _ in 0..200 {
        let w = q.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.mapv(|x| x / norm);
        lambda = v.dot(&q.dot(&v));
    }
    lambda * (1.0 + 1e-6)
}

// ---------------------------------------------------------------------------
// Soft threshold
// ---------------------------------------------------------------------------

/// Componentwise soft threshold: shrink(z)_j = z_j - tau for z_j > tau,
/// z_j + tau for z_j < -tau, else 0. This is prox_{tau |.|_1}.
pub fn shrink_scalar(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

pub fn shrink(z: &Array1<f64>, tau: f64) -> Array1<f64> {
    z.mapv(|v| shrink_scalar(v, tau))
}

// ---------------------------------------------------------------------------
// Aggregate statistics shared by the recursions and the generic model
// ---------------------------------------------------------------------------

/// Running sums that evaluate the averaged quadratic bound at any point.
#[derive(Debug, Clone)]
struct QuadStats {
    count: usize,
    sum_value: f64,
    sum_grad: Array1<f64>,
    sum_anchor: Array1<f64>,
    sum_grad_dot_anchor: f64,
    sum_anchor_sq: f64,
}

impl QuadStats {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            sum_value: 0.0,
            sum_grad: Array1::zeros(dim),
            sum_anchor: Array1::zeros(dim),
            sum_grad_dot_anchor: 0.0,
            sum_anchor_sq: 0.0,
        }
    }

    fn push(&mut self, value: f64, grad: &Array1<f64>, anchor: &Array1<f64>) {
        self.count += 1;
        self.sum_value += value;
        self.sum_grad = &self.sum_grad + grad;
        self.sum_anchor = &self.sum_anchor + anchor;
        self.sum_grad_dot_anchor += grad.dot(anchor);
        self.sum_anchor_sq += anchor.dot(anchor);
    }

    /// Average of the smooth bounds at x.
    fn surrogate_avg(&self, x: &Array1<f64>, lipschitz: f64) -> f64 {
        let r = self.count as f64;
        let quad =
            0.5 * lipschitz * (r * x.dot(x) - 2.0 * self.sum_anchor.dot(x) + self.sum_anchor_sq);
        (self.sum_value + self.sum_grad.dot(x) - self.sum_grad_dot_anchor + quad) / r
    }

    /// Center of the averaged quadratic: mean of (anchor - grad / L).
    fn center(&self, lipschitz: f64) -> Array1<f64> {
        let r = self.count as f64;
        (&self.sum_anchor - &self.sum_grad.mapv(|g| g / lipschitz)).mapv(|v| v / r)
    }
}

// ---------------------------------------------------------------------------
// Generic surrogate model over a smooth objective
// ---------------------------------------------------------------------------

/// The linearize-plus-quadratic surrogate as a [`SurrogateModel`]. Supports
/// an optional l1 term (weight > 0) or an optional projection, which the
/// isotropic aggregate handles in closed form.
pub struct SgSurrogateModel<P: SmoothObjective> {
    problem: P,
    l1_weight: f64,
    projection: Option<Box<dyn Fn(&Array1<f64>) -> Array1<f64>>>,
    stats: QuadStats,
}

impl<P: SmoothObjective> SgSurrogateModel<P> {
    pub fn new(problem: P) -> Self {
        let dim = problem.dim();
        Self { problem, l1_weight: 0.0, projection: None, stats: QuadStats::new(dim) }
    }

    /// Add the deterministic nonsmooth part lambda ||x||_1.
    pub fn with_l1(mut self, weight: f64) -> Self {
        assert!(weight >= 0.0);
        assert!(self.projection.is_none(), "l1 and projection are exclusive");
        self.l1_weight = weight;
        self
    }

    /// Constrain to a convex set via its Euclidean projection.
    pub fn with_projection(mut self, proj: impl Fn(&Array1<f64>) -> Array1<f64> + 'static) -> Self {
        assert!(self.l1_weight == 0.0, "l1 and projection are exclusive");
        self.projection = Some(Box::new(proj));
        self
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }
}

/// Plain unconstrained smooth model.
pub fn ssum_sg_model<P: SmoothObjective>(problem: P) -> SgSurrogateModel<P> {
    SgSurrogateModel::new(problem)
}

impl<P: SmoothObjective> SurrogateModel for SgSurrogateModel<P> {
    type Point = Array1<f64>;
    type Sample = P::Sample;

    fn eval_g(&self, x: &Array1<f64>, xi: &P::Sample) -> f64 {
        self.problem.value(x, xi) + self.l1_weight * x.mapv(f64::abs).sum()
    }

    fn eval_ghat(&self, x: &Array1<f64>, anchor: &Array1<f64>, xi: &P::Sample) -> f64 {
        let g = self.problem.value(anchor, xi);
        let grad = self.problem.gradient(anchor, xi);
        let d = x - anchor;
        g + grad.dot(&d)
            + 0.5 * self.problem.lipschitz() * d.dot(&d)
            + self.l1_weight * x.mapv(f64::abs).sum()
    }

    fn observe(&mut self, anchor: &Array1<f64>, xi: &P::Sample) {
        let value = self.problem.value(anchor, xi);
        let grad = self.problem.gradient(anchor, xi);
        self.stats.push(value, &grad, anchor);
    }

    fn minimize_aggregate(&self) -> Result<Array1<f64>> {
        if self.stats.count == 0 {
            return Err(Error::DegenerateStats("no observations".into()));
        }
        let center = self.stats.center(self.problem.lipschitz());
        let x = if self.l1_weight > 0.0 {
            shrink(&center, self.l1_weight / self.problem.lipschitz())
        } else {
            self.project(&center)
        };
        Ok(x)
    }

    fn project(&self, x: &Array1<f64>) -> Array1<f64> {
        match &self.projection {
            Some(p) => p(x),
            None => x.clone(),
        }
    }

    fn aggregate_surrogate(&self, x: &Array1<f64>) -> f64 {
        self.stats.surrogate_avg(x, self.problem.lipschitz())
            + self.l1_weight * x.mapv(f64::abs).sum()
    }

    fn observed_count(&self) -> usize {
        self.stats.count
    }

    fn convexity_modulus(&self) -> f64 {
        self.problem.lipschitz()
    }
}

// ---------------------------------------------------------------------------
// Closed-form recursions
// ---------------------------------------------------------------------------

/// Gap between the averaged bound and the sample-average objective. Any l1
/// term appears in both sides at the same point and cancels, so only the
/// smooth parts are compared.
fn gap_row<P: SmoothObjective>(
    problem: &P,
    stats: &QuadStats,
    samples: &[P::Sample],
    x: &Array1<f64>,
) -> f64 {
    let fhat = stats.surrogate_avg(x, problem.lipschitz());
    let vals: Vec<f64> = samples.iter().map(|xi| problem.value(x, xi)).collect();
    fhat - util::mean(&vals)
}

/// Classical stochastic gradient recursion with the averaged step rule:
/// x^r = x^{r-1} - grad g1(x^{r-1}, xi^r) / (r L). The observer sees every
/// iterate, including the starting point as (0, x0).
pub fn sg_run_observed<P, S, O>(
    problem: &P,
    x0: &Array1<f64>,
    r_max: usize,
    trace_every: usize,
    mut sampler: S,
    mut observer: O,
) -> RunTrace<Array1<f64>>
where
    P: SmoothObjective,
    S: FnMut() -> P::Sample,
    O: FnMut(usize, &Array1<f64>),
{
    let lipschitz = problem.lipschitz();
    let mut x = x0.clone();
    observer(0, &x);
    let mut rows = Vec::new();
    let mut stats = QuadStats::new(problem.dim());
    let mut samples = Vec::new();
    for r in 1..=r_max {
        let xi = sampler();
        let sampled_obj = problem.value(&x, &xi);
        let grad = problem.gradient(&x, &xi);
        stats.push(sampled_obj, &grad, &x);
        samples.push(xi);
        let next = &x - &grad.mapv(|g| g / (r as f64 * lipschitz));
        let step_norm = (&next - &x).mapv(|v| v * v).sum().sqrt();
        if trace_every > 0 && (r % trace_every == 0 || r == r_max) {
            let surrogate_gap = gap_row(problem, &stats, &samples, &next);
            rows.push(TraceRow { r, step_norm, surrogate_gap, sampled_obj });
        }
        x = next;
        observer(r, &x);
    }
    RunTrace { rows, final_point: x }
}

/// `sg_run_observed` without the observer.
pub fn sg_run<P, S>(
    problem: &P,
    x0: &Array1<f64>,
    r_max: usize,
    trace_every: usize,
    sampler: S,
) -> RunTrace<Array1<f64>>
where
    P: SmoothObjective,
    S: FnMut() -> P::Sample,
{
    sg_run_observed(problem, x0, r_max, trace_every, sampler, |_, _| {})
}

/// Projected variant. Maintains the unconstrained aggregate center z and
/// projects it each iteration:
/// z^r = ((r-1) z^{r-1} + x^{r-1} - grad/L) / r, x^r = proj(z^r).
pub fn projected_ssum_sg<P, S, J>(
    problem: &P,
    proj: J,
    x0: &Array1<f64>,
    r_max: usize,
    trace_every: usize,
    mut sampler: S,
) -> RunTrace<Array1<f64>>
where
    P: SmoothObjective,
    S: FnMut() -> P::Sample,
    J: Fn(&Array1<f64>) -> Array1<f64>,
{
    let lipschitz = problem.lipschitz();
    let mut x = proj(x0);
    let mut z = x.clone();
    let mut rows = Vec::new();
    let mut stats = QuadStats::new(problem.dim());
    let mut samples = Vec::new();
    for r in 1..=r_max {
        let xi = sampler();
        let sampled_obj = problem.value(&x, &xi);
        let grad = problem.gradient(&x, &xi);
        stats.push(sampled_obj, &grad, &x);
        samples.push(xi);
        let rf = r as f64;
        z = (&z.mapv(|v| v * (rf - 1.0)) + &(&x - &grad.mapv(|g| g / lipschitz))).mapv(|v| v / rf);
        let next = proj(&z);
        let step_norm = (&next - &x).mapv(|v| v * v).sum().sqrt();
        if trace_every > 0 && (r % trace_every == 0 || r == r_max) {
            let surrogate_gap = gap_row(problem, &stats, &samples, &next);
            rows.push(TraceRow { r, step_norm, surrogate_gap, sampled_obj });
        }
        x = next;
    }
    RunTrace { rows, final_point: x }
}

/// l1-regularized variant: same center recursion, minimizer by soft
/// threshold at lambda / L.
pub fn l1_ssum_sg<P, S>(
    problem: &P,
    l1_weight: f64,
    x0: &Array1<f64>,
    r_max: usize,
    trace_every: usize,
    mut sampler: S,
) -> RunTrace<Array1<f64>>
where
    P: SmoothObjective,
    S: FnMut() -> P::Sample,
{
    assert!(l1_weight >= 0.0);
    let lipschitz = problem.lipschitz();
    let tau = l1_weight / lipschitz;
    let mut x = x0.clone();
    let mut z = x.clone();
    let mut rows = Vec::new();
    let mut stats = QuadStats::new(problem.dim());
    let mut samples = Vec::new();
    for r in 1..=r_max {
        let xi = sampler();
        let smooth_obj = problem.value(&x, &xi);
        let sampled_obj = smooth_obj + l1_weight * x.mapv(f64::abs).sum();
        let grad = problem.gradient(&x, &xi);
        stats.push(smooth_obj, &grad, &x);
        samples.push(xi);
        let rf = r as f64;
        z = (&z.mapv(|v| v * (rf - 1.0)) + &(&x - &grad.mapv(|g| g / lipschitz))).mapv(|v| v / rf);
        let next = shrink(&z, tau);
        let step_norm = (&next - &x).mapv(|v| v * v).sum().sqrt();
        if trace_every > 0 && (r % trace_every == 0 || r == r_max) {
            let surrogate_gap = gap_row(problem, &stats, &samples, &next);
            rows.push(TraceRow { r, step_norm, surrogate_gap, sampled_obj });
        }
        x = next;
    }
    RunTrace { rows, final_point: x }
}

// ---------------------------------------------------------------------------
