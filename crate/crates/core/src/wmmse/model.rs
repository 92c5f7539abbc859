//! Beamforming as a surrogate model: precoder state, accumulated quadratic
//! statistics, and the per-cell constrained aggregate minimizer.
//!
//! Each observed bound is quadratic in the precoders, so the running average
//! compresses into one curvature matrix A per cell and one linear matrix B
//! per user: A gains rho I plus the cell curvature, B gains rho Z plus the
//! receive-weighted direct channel. The aggregate minimizer is then a shifted
//! linear solve with a per-cell power multiplier found by bisection.

use std::cell::{Ref, RefCell};

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::engine::{run_ssum, Point, RunTrace, SurrogateModel};
use crate::error::{Error, Result};
use crate::hermitian::{
    adjoint, chol_logdet, default_power_tol, frobenius_norm, hermitize, inner_re,
    power_bisection, random_cmatrix, trace_re, CMatrix, HermitianPd,
};

use super::channel::{ChannelModel, ChannelRealization, NetworkConfig};
use super::rate::{self, AuxVars};

// ---------------------------------------------------------------------------
// Precoders as an engine point
// ---------------------------------------------------------------------------

/// One transmit matrix per flat user index.
#[derive(Debug, Clone)]
pub struct Precoders {
    mats: Vec<CMatrix>,
}

impl Precoders {
    pub fn new(mats: Vec<CMatrix>) -> Self {
        Self { mats }
    }

    pub fn mats(&self) -> &[CMatrix] {
        &self.mats
    }

    pub fn cell_power(&self, cfg: &NetworkConfig, k: usize) -> f64 {
        cfg.cell_users(k).map(|u| frobenius_norm(&self.mats[u]).powi(2)).sum()
    }

    /// Scale each cell's precoders onto its power ball if it overshoots.
    pub fn project_power(&self, cfg: &NetworkConfig) -> Self {
        let mut mats = self.mats.clone();
        for k in 0..cfg.num_cells() {
            let power = self.cell_power(cfg, k);
            let budget = cfg.cells[k].power_budget;
            if power > budget {
                let scale = (budget / power).sqrt();
                for u in cfg.cell_users(k) {
                    mats[u] = mats[u].mapv(|z| z * scale);
                }
            }
        }
        Self { mats }
    }
}

impl Point for Precoders {
    fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for m in &self.mats {
            for z in m.iter() {
                flat.push(z.re);
                flat.push(z.im);
            }
        }
        flat
    }

    fn with_flat(&self, flat: &[f64]) -> Self {
        let mut mats = Vec::with_capacity(self.mats.len());
        let mut pos = 0;
        for m in &self.mats {
            let mut out = CMatrix::zeros(m.dim());
            for (dst, _) in out.iter_mut().zip(m.iter()) {
                *dst = Complex64::new(flat[pos], flat[pos + 1]);
                pos += 2;
            }
            mats.push(out);
        }
        assert_eq!(pos, flat.len());
        Self { mats }
    }
}

/// Random precoders with exact per-cell power equality.
pub fn random_feasible_precoders(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Precoders {
    let mut mats = Vec::with_capacity(cfg.num_users());
    for (k, cell) in cfg.cells.iter().enumerate() {
        let raw: Vec<CMatrix> = cell
            .users
            .iter()
            .map(|user| random_cmatrix(cell.tx_antennas, user.streams, 1.0, rng))
            .collect();
        let power: f64 = raw.iter().map(|m| frobenius_norm(m).powi(2)).sum();
        let scale = (cfg.cells[k].power_budget / power).sqrt();
        mats.extend(raw.into_iter().map(|m| m.mapv(|z| z * scale)));
    }
    Precoders::new(mats)
}

// ---------------------------------------------------------------------------
// Accumulated statistics
// ---------------------------------------------------------------------------

/// Precoders plus the running aggregate of all observed bounds: one
/// curvature matrix per cell (identical for users of that cell), one linear
/// term per user, and the bound counter.
#[derive(Debug, Clone)]
pub struct BeamformerState {
    pub v: Precoders,
    /// Per-cell accumulated curvature (Hermitian PSD, grows by rho I each
    /// observation).
    pub a: Vec<CMatrix>,
    /// Per-user accumulated linear term.
    pub b: Vec<CMatrix>,
    pub count: usize,
}

impl BeamformerState {
    pub fn new(cfg: &NetworkConfig, v: Precoders) -> Self {
        let a = cfg
            .cells
            .iter()
            .map(|c| CMatrix::zeros((c.tx_antennas, c.tx_antennas)))
            .collect();
        let b = (0..cfg.num_users())
            .map(|u| {
                let k = cfg.user_cell(u);
                CMatrix::zeros((cfg.cells[k].tx_antennas, cfg.user(u).streams))
            })
            .collect();
        Self { v, a, b, count: 0 }
    }
}

/// Fold one bound's statistics: A_k += rho I + G_k, B_u += rho Z_u + H^H U W.
pub fn accumulate(
    state: &mut BeamformerState,
    p: &AuxVars,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) {
    let curvatures = rate::cell_curvatures(p, ch, cfg);
    for (k, g) in curvatures.into_iter().enumerate() {
        let mut inc = g;
        for i in 0..inc.nrows() {
            inc[[i, i]] += Complex64::new(cfg.rho, 0.0);
        }
        state.a[k] = hermitize(&(&state.a[k] + &inc));
    }
    for u in 0..cfg.num_users() {
        let k = cfg.user_cell(u);
        let lin = adjoint(ch.link(u, k)).dot(&p.u[u]).dot(&p.w[u]);
        state.b[u] = &state.b[u] + &(p.z[u].mapv(|z| z * cfg.rho) + lin);
    }
    state.count += 1;
}

/// Exact constrained minimizer of the averaged bounds: per cell, stack the
/// users' linear terms, run the power bisection once, and split the columns
/// back. Returns the new precoders and each cell's solve diagnostics.
pub fn v_update(
    state: &BeamformerState,
    cfg: &NetworkConfig,
) -> Result<(Precoders, Vec<CellSolve>)> {
    if state.count == 0 {
        return Err(Error::DegenerateStats("precoder update before any observation".into()));
    }
    let mut mats: Vec<Option<CMatrix>> = vec![None; cfg.num_users()];
    let mut solves = Vec::with_capacity(cfg.num_cells());
    for k in 0..cfg.num_cells() {
        let users: Vec<usize> = cfg.cell_users(k).collect();
        let total_streams: usize = users.iter().map(|&u| cfg.user(u).streams).sum();
        let mt = cfg.cells[k].tx_antennas;
        let mut stacked = CMatrix::zeros((mt, total_streams));
        let mut col = 0;
        for &u in &users {
            let d = cfg.user(u).streams;
            stacked.slice_mut(ndarray::s![.., col..col + d]).assign(&state.b[u]);
            col += d;
        }
        let budget = cfg.cells[k].power_budget;
        let solve = power_bisection(&state.a[k], &stacked, budget, default_power_tol(budget))?;
        let mut col = 0;
        for &u in &users {
            let d = cfg.user(u).streams;
            mats[u] = Some(solve.precoder.slice(ndarray::s![.., col..col + d]).to_owned());
            col += d;
        }
        solves.push(CellSolve {
            multiplier: solve.multiplier,
            power: solve.power,
            budget,
        });
    }
    let mats = mats.into_iter().map(|m| m.expect("every user solved")).collect();
    Ok((Precoders::new(mats), solves))
}

/// Per-cell diagnostics of one aggregate solve.
#[derive(Debug, Clone, Copy)]
pub struct CellSolve {
    pub multiplier: f64,
    pub power: f64,
    pub budget: f64,
}

impl CellSolve {
    /// mu * |power - budget|, the complementary-slackness residual.
    pub fn slackness(&self) -> f64 {
        self.multiplier * (self.power - self.budget).abs()
    }
}

// ---------------------------------------------------------------------------
// The surrogate model
// ---------------------------------------------------------------------------

/// Beamforming instance of the engine contract. Samples are channel
/// realizations; the aggregate lives in `BeamformerState` plus an
/// accumulated constant.
pub struct WmmseModel {
    cfg: NetworkConfig,
    state: BeamformerState,
    /// Sum over observations of the precoder-independent bound terms.
    const_acc: f64,
    solve_log: RefCell<Vec<Vec<CellSolve>>>,
}

impl WmmseModel {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::new_unchecked(cfg))
    }

    /// Skips configuration validation so diagnostic sweeps can exercise
    /// deliberately broken weights (e.g. a negative proximal coefficient).
    pub fn new_unchecked(cfg: NetworkConfig) -> Self {
        let zero = Precoders::new(
            (0..cfg.num_users())
                .map(|u| {
                    let k = cfg.user_cell(u);
                    CMatrix::zeros((cfg.cells[k].tx_antennas, cfg.user(u).streams))
                })
                .collect(),
        );
        let state = BeamformerState::new(&cfg, zero);
        Self { cfg, state, const_acc: 0.0, solve_log: RefCell::new(Vec::new()) }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn state(&self) -> &BeamformerState {
        &self.state
    }

    /// Multiplier/power diagnostics of every aggregate solve so far.
    pub fn solve_log(&self) -> Ref<'_, Vec<Vec<CellSolve>>> {
        self.solve_log.borrow()
    }
}

impl SurrogateModel for WmmseModel {
    type Point = Precoders;
    type Sample = ChannelRealization;

    fn eval_g(&self, x: &Precoders, xi: &ChannelRealization) -> f64 {
        rate::g1(x.mats(), xi, &self.cfg).unwrap_or(f64::NAN)
    }

    fn eval_ghat(&self, x: &Precoders, anchor: &Precoders, xi: &ChannelRealization) -> f64 {
        match rate::surrogate_p_update(anchor.mats(), xi, &self.cfg) {
            Ok(p) => rate::surrogate_value(x.mats(), &p, xi, &self.cfg).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        }
    }

    fn observe(&mut self, anchor: &Precoders, xi: &ChannelRealization) {
        let p = rate::surrogate_p_update(anchor.mats(), xi, &self.cfg)
            .expect("auxiliary update failed on a drawn channel");
        self.state.v = anchor.clone();
        accumulate(&mut self.state, &p, xi, &self.cfg);
        // Precoder-independent terms of this bound, kept so the aggregate
        // value (not just its minimizer) is available from the statistics.
        let mut c = 0.0;
        for u in 0..self.cfg.num_users() {
            let w_pd = HermitianPd::new(hermitize(&p.w[u])).expect("weight stays definite");
            let uhu = adjoint(&p.u[u]).dot(&p.u[u]);
            c += -chol_logdet(&w_pd) + trace_re(&p.w[u])
                + self.cfg.user(u).noise_power * inner_re(&p.w[u], &uhu)
                - self.cfg.user(u).streams as f64
                + self.cfg.rho * frobenius_norm(&p.z[u]).powi(2);
        }
        self.const_acc += c;
    }

    fn minimize_aggregate(&self) -> Result<Precoders> {
        let (v, solves) = v_update(&self.state, &self.cfg)?;
        self.solve_log.borrow_mut().push(solves);
        Ok(v)
    }

    fn project(&self, x: &Precoders) -> Precoders {
        x.project_power(&self.cfg)
    }

    fn aggregate_surrogate(&self, x: &Precoders) -> f64 {
        let r = self.state.count as f64;
        let mut total = self.const_acc;
        for u in 0..self.cfg.num_users() {
            let k = self.cfg.user_cell(u);
            let av = self.state.a[k].dot(&x.mats()[u]);
            total += inner_re(&x.mats()[u], &av) - 2.0 * inner_re(&self.state.b[u], &x.mats()[u]);
        }
        total / r
    }

    fn observed_count(&self) -> usize {
        self.state.count
    }

    fn convexity_modulus(&self) -> f64 {
        self.cfg.rho
    }
}

/// Run the full stochastic loop on a generated network, returning the trace
/// and the model (whose statistics and solve log remain inspectable).
pub fn stochastic_wmmse(
    cfg: &NetworkConfig,
    channels: &ChannelModel,
    v0: &Precoders,
    r_max: usize,
    trace_every: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(RunTrace<Precoders>, WmmseModel)> {
    let mut model = WmmseModel::new(cfg.clone())?;
    let trace = run_ssum(&mut model, || channels.sample(rng), v0, r_max, trace_every)?;
    Ok((trace, model))
}

// ---------------------------------------------------------------------------
