//! Online sparse dictionary learning.
//!
//! The sampled objective is g(D, y) = min_a 1/2||y - D a||^2 + lambda||a||_1.
//! The bound anchored at Dbar freezes the sparse code at abar = argmin for
//! Dbar and adds a proximal term:
//! ghat(D; Dbar, y) = 1/2||y - D abar||^2 + lambda||abar||_1
//!                    + (gamma/2)||D - Dbar||_F^2.
//! Averaged bounds compress into A = sum abar abar^T, B = sum y abar^T and
//! C = sum Dbar, and the aggregate minimizer over unit-ball columns comes
//! from block coordinate descent iterated to a fixed point.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{run_ssum, RunTrace, SurrogateModel};
use crate::error::{Error, Result};

/// Lasso coordinate-descent termination: KKT residual threshold.
pub const DEFAULT_LASSO_TOL: f64 = 1e-10;
/// Fixed-point threshold for the dictionary block coordinate descent.
pub const DICT_CD_TOL: f64 = 1e-10;
/// Default proximal weight.
pub const DEFAULT_GAMMA: f64 = 1e-2;

// ---------------------------------------------------------------------------
// Lasso
// ---------------------------------------------------------------------------

/// Max-norm KKT residual of 1/2||y - D a||^2 + lambda||a||_1 at `alpha`:
/// zero iff alpha is optimal.
pub fn lasso_kkt_residual(
    dict: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
    alpha: &Array1<f64>,
) -> f64 {
    let grad = dict.t().dot(&(&dict.dot(alpha) - y));
    grad.iter()
        .zip(alpha.iter())
        .map(|(&g, &a)| {
            if a > 0.0 {
                (g + lambda).abs()
            } else if a < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Sparse coding by cyclic coordinate descent, run until the KKT residual
/// drops to `tol`. Zero-norm atoms simply keep a zero coefficient.
///
/// `tol` is absolute, so it must be compatible with the dictionary's
/// conditioning: with near-duplicate atoms the residual can stall at the
/// rounding floor of the coordinate updates, and the sweep errors out
/// rather than return a code that misses the target.
pub fn lasso(dict: &Array2<f64>, y: &Array1<f64>, lambda: f64, tol: f64) -> Result<Array1<f64>> {
    if dict.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "lasso: dictionary is {}x{}, signal has {} entries",
            dict.nrows(),
            dict.ncols(),
            y.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lasso: lambda {lambda} must be nonnegative")));
    }
    let k = dict.ncols();
    let gram = dict.t().dot(dict);
    let dty = dict.t().dot(y);
    if dty.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso input"));
    }

    let mut alpha = Array1::<f64>::zeros(k);
    for _sweep in 0..100_000 {
        for j in 0..k {
            let gjj = gram[[j, j]];
            if gjj <= 0.0 {
                alpha[j] = 0.0;
                continue;
            }
            let mut rho = dty[j] + gjj * alpha[j];
            for l in 0..k {
                rho -= gram[[j, l]] * alpha[l];
            }
            alpha[j] = crate::sg::shrink_scalar(rho, lambda) / gjj;
        }
        if lasso_kkt_residual(dict, y, lambda, &alpha) <= tol {
            return Ok(alpha);
        }
    }
    Err(Error::NonFinite("lasso failed to converge"))
}

/// 1/2||y - D a||^2 + lambda ||a||_1.
pub fn lasso_objective(dict: &Array2<f64>, y: &Array1<f64>, lambda: f64, alpha: &Array1<f64>) -> f64 {
    let resid = y - &dict.dot(alpha);
    0.5 * resid.dot(&resid) + lambda * alpha.mapv(f64::abs).sum()
}

// ---------------------------------------------------------------------------
// Aggregate statistics and the dictionary update
// ---------------------------------------------------------------------------

/// Current dictionary plus the sufficient statistics of all observed bounds.
#[derive(Debug, Clone)]
pub struct DictionaryState {
    pub dict: Array2<f64>,
    /// sum of abar abar^T (atoms x atoms).
    pub stats_a: Array2<f64>,
    /// sum of y abar^T (signal dim x atoms).
    pub stats_b: Array2<f64>,
    /// sum of past anchor dictionaries.
    pub prox_sum: Array2<f64>,
    pub count: usize,
    pub lambda: f64,
    pub gamma: f64,
}

impl DictionaryState {
    pub fn new(dict: Array2<f64>, lambda: f64, gamma: f64) -> Self {
        let (n, k) = dict.dim();
        Self {
            dict,
            stats_a: Array2::zeros((k, k)),
            stats_b: Array2::zeros((n, k)),
            prox_sum: Array2::zeros((n, k)),
            count: 0,
            lambda,
            gamma,
        }
    }

    pub fn signal_dim(&self) -> usize {
        self.dict.nrows()
    }

    pub fn num_atoms(&self) -> usize {
        self.dict.ncols()
    }
}

/// Sparse-code one signal against the current dictionary and fold the
/// resulting bound into the statistics. Returns the code.
pub fn observe_signal(state: &mut DictionaryState, y: &Array1<f64>, tol: f64) -> Result<Array1<f64>> {
    let alpha = lasso(&state.dict, y, state.lambda, tol)?;
    let k = state.num_atoms();
    for i in 0..k {
        for j in 0..k {
            state.stats_a[[i, j]] += alpha[i] * alpha[j];
        }
    }
    for i in 0..state.signal_dim() {
        for j in 0..k {
            state.stats_b[[i, j]] += y[i] * alpha[j];
        }
    }
    state.prox_sum = &state.prox_sum + &state.dict;
    state.count += 1;
    Ok(alpha)
}

/// Exact minimizer over unit-norm-ball columns of the averaged bounds:
/// (1/r)[ 1/2 tr(D^T D M) - tr(D^T N) ] with M = A + gamma r I and
/// N = B + gamma C, by block coordinate descent to a fixed point. Atoms with
/// no curvature (gamma = 0 and never selected) keep their current column.
pub fn dict_update(state: &DictionaryState) -> Result<Array2<f64>> {
    if state.count == 0 {
        return Err(Error::DegenerateStats("dictionary update before any observation".into()));
    }
    let k = state.num_atoms();
    let n = state.signal_dim();
    let r = state.count as f64;
    let mut m = state.stats_a.clone();
    for j in 0..k {
        m[[j, j]] += state.gamma * r;
    }
    let nmat = &state.stats_b + &state.prox_sum.mapv(|v| state.gamma * v);

    let mut d = state.dict.clone();
    for _sweep in 0..100_000 {
        let mut max_change = 0.0f64;
        for j in 0..k {
            let mjj = m[[j, j]];
            if mjj <= 0.0 {
                continue;
            }
            // u = (N_j - sum_{l != j} d_l M_lj) / M_jj, then unit-ball clip.
            let mut u = Array1::<f64>::zeros(n);
            for i in 0..n {
                let mut s = nmat[[i, j]] + d[[i, j]] * mjj;
                for l in 0..k {
                    s -= d[[i, l]] * m[[l, j]];
                }
                u[i] = s / mjj;
            }
            let norm = u.dot(&u).sqrt();
            if norm > 1.0 {
                u.mapv_inplace(|v| v / norm);
            }
            let mut change = 0.0;
            for i in 0..n {
                change += (u[i] - d[[i, j]]).powi(2);
                d[[i, j]] = u[i];
            }
            max_change = max_change.max(change.sqrt());
        }
        if max_change < DICT_CD_TOL {
            return Ok(d);
        }
    }
    Err(Error::DegenerateStats("dictionary update did not reach a fixed point".into()))
}

/// Clip every column into the unit ball.
pub fn project_columns(d: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    for j in 0..d.ncols() {
        let norm = out.column(j).dot(&out.column(j)).sqrt();
        if norm > 1.0 {
            for i in 0..d.nrows() {
                out[[i, j]] /= norm;
            }
        }
    }
    out
}

/// Dictionary with i.i.d. Gaussian columns normalized to unit length.
pub fn random_unit_dictionary(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut d = Array2::<f64>::zeros((n, k));
    for j in 0..k {
        let mut norm_sq = 0.0;
        for i in 0..n {
            let v: f64 = rng.sample(rand_distr::StandardNormal);
            d[[i, j]] = v;
            norm_sq += v * v;
        }
        let norm = norm_sq.sqrt().max(1e-300);
        for i in 0..n {
            d[[i, j]] /= norm;
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Surrogate model
// ---------------------------------------------------------------------------

/// Dictionary learning as a [`SurrogateModel`] over D with samples y.
pub struct DictionaryModel {
    pub state: DictionaryState,
    lasso_tol: f64,
    // Anchor-only terms of the averaged bound.
    sum_half_y_sq: f64,
    sum_code_l1: f64,
    sum_anchor_sq: f64,
}

impl DictionaryModel {
    pub fn new(dict: Array2<f64>, lambda: f64, gamma: f64) -> Self {
        Self {
            state: DictionaryState::new(dict, lambda, gamma),
            lasso_tol: DEFAULT_LASSO_TOL,
            sum_half_y_sq: 0.0,
            sum_code_l1: 0.0,
            sum_anchor_sq: 0.0,
        }
    }

    pub fn lasso_tol(&self) -> f64 {
        self.lasso_tol
    }
}

impl SurrogateModel for DictionaryModel {
    type Point = Array2<f64>;
    type Sample = Array1<f64>;

    fn eval_g(&self, d: &Array2<f64>, y: &Array1<f64>) -> f64 {
        match lasso(d, y, self.state.lambda, self.lasso_tol) {
            Ok(alpha) => lasso_objective(d, y, self.state.lambda, &alpha),
            Err(_) => f64::NAN,
        }
    }

    fn eval_ghat(&self, d: &Array2<f64>, anchor: &Array2<f64>, y: &Array1<f64>) -> f64 {
        let alpha = match lasso(anchor, y, self.state.lambda, self.lasso_tol) {
            Ok(a) => a,
            Err(_) => return f64::NAN,
        };
        let diff = d - anchor;
        lasso_objective(d, y, self.state.lambda, &alpha)
            + 0.5 * self.state.gamma * diff.iter().map(|v| v * v).sum::<f64>()
    }

    fn observe(&mut self, anchor: &Array2<f64>, y: &Array1<f64>) {
        // The engine anchors at the iterate the state already holds; keep
        // the state's dictionary in sync before folding in the bound.
        self.state.dict = anchor.clone();
        let alpha = observe_signal(&mut self.state, y, self.lasso_tol)
            .expect("sparse coding failed during observation");
        self.sum_half_y_sq += 0.5 * y.dot(y);
        self.sum_code_l1 += self.state.lambda * alpha.mapv(f64::abs).sum();
        self.sum_anchor_sq += anchor.iter().map(|v| v * v).sum::<f64>();
    }

    fn minimize_aggregate(&self) -> Result<Array2<f64>> {
        dict_update(&self.state)
    }

    fn project(&self, d: &Array2<f64>) -> Array2<f64> {
        project_columns(d)
    }

    fn aggregate_surrogate(&self, d: &Array2<f64>) -> f64 {
        let r = self.state.count as f64;
        let quad = 0.5 * (d.t().dot(d) * &self.state.stats_a).sum();
        let lin = (d * &self.state.stats_b).sum();
        let prox = 0.5
            * self.state.gamma
            * (r * d.iter().map(|v| v * v).sum::<f64>() - 2.0 * (d * &self.state.prox_sum).sum()
                + self.sum_anchor_sq);
        (quad - lin + self.sum_half_y_sq + self.sum_code_l1 + prox) / r
    }

    fn observed_count(&self) -> usize {
        self.state.count
    }

    fn convexity_modulus(&self) -> f64 {
        self.state.gamma
    }
}

// ---------------------------------------------------------------------------
// Signal sources and the end-to-end runner
// ---------------------------------------------------------------------------

/// Where training signals come from.
#[derive(Debug, Clone)]
pub enum SignalSource {
    /// Fixed corpus, one signal per row, drawn uniformly at random.
    Corpus(Array2<f64>),
    /// y = D* a + noise with a supported on `sparsity` random atoms.
    Planted { dict: Array2<f64>, sparsity: usize, coeff_std: f64, noise_std: f64 },
}

impl SignalSource {
    pub fn signal_dim(&self) -> usize {
        match self {
            SignalSource::Corpus(c) => c.ncols(),
            SignalSource::Planted { dict, .. } => dict.nrows(),
        }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Array1<f64> {
        match self {
            SignalSource::Corpus(c) => {
                let row = rng.random_range(0..c.nrows());
                c.row(row).to_owned()
            }
            SignalSource::Planted { dict, sparsity, coeff_std, noise_std } => {
                let k = dict.ncols();
                let n = dict.nrows();
                // Partial Fisher-Yates for a distinct random support.
                let mut idx: Vec<usize> = (0..k).collect();
                for i in 0..*sparsity {
                    let j = rng.random_range(i..k);
                    idx.swap(i, j);
                }
                let mut y = Array1::<f64>::zeros(n);
                for &atom in &idx[..*sparsity] {
                    let coeff: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * coeff_std;
                    for i in 0..n {
                        y[i] += coeff * dict[[i, atom]];
                    }
                }
                for i in 0..n {
                    y[i] += rng.sample::<f64, _>(rand_distr::StandardNormal) * noise_std;
                }
                y
            }
        }
    }
}

/// Run the full online learner from a random-unit-column start or a given
/// initial dictionary.
pub fn online_dictionary_learning(
    source: &SignalSource,
    d0: Array2<f64>,
    lambda: f64,
    gamma: f64,
    r_max: usize,
    trace_every: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace<Array2<f64>>> {
    if d0.nrows() != source.signal_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary rows {} vs signal dim {}",
            d0.nrows(),
            source.signal_dim()
        )));
    }
    let mut model = DictionaryModel::new(d0.clone(), lambda, gamma);
    run_ssum(&mut model, || source.draw(rng), &d0, r_max, trace_every)
}

// ---------------------------------------------------------------------------
