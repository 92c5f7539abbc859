//! Dense complex-matrix kernels: Hermitian positive-definite Cholesky
//! factorization, log-determinants, solves, and the Lagrange-multiplier
//! bisection behind trace-constrained quadratic minimizers.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix. Dimensions are fixed at construction.
pub type CMatrix = Array2<Complex64>;

/// Every rate-like quantity in this crate uses the natural logarithm.
pub const RATE_UNIT: &str = "nats";

/// Relative Frobenius tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_REL_TOL: f64 = 1e-10;

pub fn identity(n: usize) -> CMatrix {
    Array2::eye(n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    Array2::zeros((rows, cols))
}

/// Conjugate transpose.
pub fn adjoint(a: &CMatrix) -> CMatrix {
    let mut out = zeros(a.ncols(), a.nrows());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[[j, i]] = a[[i, j]].conj();
        }
    }
    out
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Symmetrized copy (A + A^H)/2; used to scrub roundoff off matrices that
/// are Hermitian in exact arithmetic.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    let ah = adjoint(a);
    let mut out = a.clone();
    out.zip_mut_with(&ah, |x, y| *x = 0.5 * (*x + y));
    out
}

pub fn is_hermitian(a: &CMatrix) -> bool {
    if !a.is_square() {
        return false;
    }
    let diff = a - &adjoint(a);
    frobenius_norm(&diff) <= HERMITIAN_REL_TOL * frobenius_norm(a).max(1e-300)
}

/// Real part of the trace.
pub fn trace_re(a: &CMatrix) -> f64 {
    a.diag().iter().map(|z| z.re).sum()
}

/// Re tr(A^H B), the real Frobenius inner product.
pub fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// One draw from the circularly symmetric complex Gaussian CN(mean, variance):
/// independent real and imaginary parts, each N(Re/Im mean, variance/2).
pub fn sample_cn(mean: Complex64, variance: f64, rng: &mut impl Rng) -> Complex64 {
    let s = (variance * 0.5).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    mean + Complex64::new(s * re, s * im)
}

/// Matrix with i.i.d. CN(0, variance) entries.
pub fn random_cmatrix(rows: usize, cols: usize, variance: f64, rng: &mut impl Rng) -> CMatrix {
    let mut m = zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[[i, j]] = sample_cn(Complex64::new(0.0, 0.0), variance, rng);
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Cholesky factorization
// ---------------------------------------------------------------------------

/// Lower-triangular Cholesky factor L with A = L L^H. Diagonal entries are
/// real and strictly positive.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: CMatrix,
}

impl CholeskyFactor {
    /// Factor a Hermitian matrix. Hermitian-ness is the caller's contract;
    /// only the lower triangle (and real diagonal parts) are read.
    pub fn factor(a: &CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "cholesky of {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut l = zeros(n, n);
        for j in 0..n {
            let mut diag = a[[j, j]].re;
            for k in 0..j {
                diag -= l[[j, k]].norm_sqr();
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[[j, j]] = Complex64::new(ljj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]].conj();
                }
                l[[i, j]] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// log det A = 2 sum_j ln L_jj.
    pub fn logdet(&self) -> f64 {
        (0..self.dim()).map(|j| self.l[[j, j]].re.ln()).sum::<f64>() * 2.0
    }

    /// Solve A X = B via forward/back substitution.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve: factor is {}x{}, rhs has {} rows",
                n,
                n,
                b.nrows()
            )));
        }
        let cols = b.ncols();
        let mut x = b.clone();
        // L y = b
        for c in 0..cols {
            for i in 0..n {
                let mut s = x[[i, c]];
                for k in 0..i {
                    s -= self.l[[i, k]] * x[[k, c]];
                }
                x[[i, c]] = s / self.l[[i, i]].re;
            }
            // L^H x = y
            for i in (0..n).rev() {
                let mut s = x[[i, c]];
                for k in (i + 1)..n {
                    s -= self.l[[k, i]].conj() * x[[k, c]];
                }
                x[[i, c]] = s / self.l[[i, i]].re;
            }
        }
        Ok(x)
    }

    /// A^{-1}, Hermitian by construction up to roundoff.
    pub fn inverse(&self) -> Result<CMatrix> {
        self.solve(&identity(self.dim()))
    }
}

// ---------------------------------------------------------------------------
// Validated Hermitian positive-definite wrapper
// ---------------------------------------------------------------------------

/// A matrix checked to be Hermitian (relative Frobenius tolerance) and
/// positive definite (Cholesky succeeds). The factor is kept alongside.
#[derive(Debug, Clone)]
pub struct HermitianPd {
    matrix: CMatrix,
    chol: CholeskyFactor,
}

impl HermitianPd {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !is_hermitian(&matrix) {
            return Err(Error::NotHermitian);
        }
        let chol = CholeskyFactor::factor(&matrix)?;
        Ok(Self { matrix, chol })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn cholesky(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }
}

/// log det M through the Cholesky factor.
pub fn chol_logdet(m: &HermitianPd) -> f64 {
    m.cholesky().logdet()
}

/// Solve A X = B for Hermitian positive-definite A.
pub fn hermitian_solve(a: &HermitianPd, b: &CMatrix) -> Result<CMatrix> {
    a.cholesky().solve(b)
}

// ---------------------------------------------------------------------------
// Power bisection
// ---------------------------------------------------------------------------

/// Result of the constrained quadratic solve: V = (A + mu I)^{-1} B with
/// power = ||V||_F^2 <= budget and mu (power - budget) ~ 0.
#[derive(Debug, Clone)]
pub struct PowerSolve {
    pub multiplier: f64,
    pub precoder: CMatrix,
    pub power: f64,
}

/// Default bisection tolerance for a given power budget.
pub fn default_power_tol(budget: f64) -> f64 {
    1e-8 * budget
}

fn solve_power(a: &CMatrix, b: &CMatrix, mu: f64) -> Result<(CMatrix, f64)> {
    let n = a.nrows();
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[[i, i]] += Complex64::new(mu, 0.0);
    }
    let chol = CholeskyFactor::factor(&shifted)?;
    let v = chol.solve(b)?;
    let power = v.iter().map(|z| z.norm_sqr()).sum();
    Ok((v, power))
}

/// Find mu >= 0 such that V(mu) = (A + mu I)^{-1} B satisfies the power
/// budget with near-zero complementary slackness. A must be Hermitian
/// positive semidefinite; phi(mu) = ||V(mu)||_F^2 is strictly decreasing
/// wherever it is finite.
pub fn power_bisection(a: &CMatrix, b: &CMatrix, budget: f64, tol: f64) -> Result<PowerSolve> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "power_bisection: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::BracketFailure(format!("budget {budget} not positive")));
    }
    if frobenius_norm(b) == 0.0 {
        return Ok(PowerSolve {
            multiplier: 0.0,
            precoder: zeros(b.nrows(), b.ncols()),
            power: 0.0,
        });
    }

    // Unconstrained solve first. A bare factorization can fail (or, worse,
    // quietly lose accuracy) when A is singular, so retry with a relative
    // ridge before concluding the constraint must be active: if B lies in the
    // range of A the minimizer can be interior even though A has no inverse,
    // and the true multiplier is zero.
    if let Ok((v, power)) = solve_power(a, b, 0.0) {
        if power <= budget {
            return Ok(PowerSolve { multiplier: 0.0, precoder: v, power });
        }
    }
    let mu_floor = {
        let n = a.nrows() as f64;
        let avg_diag = (0..a.nrows()).map(|i| a[[i, i]].re).sum::<f64>() / n;
        1e-12 * avg_diag.max(f64::MIN_POSITIVE)
    };
    if let Ok((v, power)) = solve_power(a, b, mu_floor) {
        if power <= budget {
            return Ok(PowerSolve { multiplier: 0.0, precoder: v, power });
        }
    }

    // Expand [lo, hi] until phi(hi) <= budget; never bisect below the ridge
    // floor, where factorizations are unreliable.
    let mut lo = mu_floor;
    let mut hi = 1.0f64;
    let (mut best_v, mut best_power) = loop {
        match solve_power(a, b, hi) {
            Ok((v, power)) if power <= budget => break (v, power),
            Ok(_) => {
                lo = hi;
                hi *= 2.0;
            }
            Err(_) => return Err(Error::BracketFailure("shifted solve failed".into())),
        }
        if hi > 1e300 {
            return Err(Error::BracketFailure("multiplier exceeded 1e300".into()));
        }
    };
    let mut best_mu = hi;

    // Bisect, keeping the feasible endpoint. Termination requires both the
    // power residual and the complementary slackness product within tol.
    for _ in 0..200 {
        if (budget - best_power).abs() <= tol && best_mu * (budget - best_power).abs() <= tol {
            break;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        // A singular A stops factoring once mid underflows its rank
        // deficiency; the minimizer is then interior (B lies in the range of
        // A, otherwise the power would blow up and the constraint would
        // bind), so treat a failed shift like the infeasible side and let the
        // feasible endpoint win.
        match solve_power(a, b, mid) {
            Ok((v, power)) if power <= budget => {
                hi = mid;
                best_mu = mid;
                best_v = v;
                best_power = power;
            }
            Ok(_) | Err(_) => lo = mid,
        }
    }

    Ok(PowerSolve { multiplier: best_mu, precoder: best_v, power: best_power })
}

// ---------------------------------------------------------------------------
