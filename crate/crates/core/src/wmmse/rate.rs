//! Per-user rate, mean-square-error, and receiver formulas, plus the convex
//! upper bound built from frozen auxiliary variables.
//!
//! The sampled objective is the negated sum rate with per-realization optimal
//! receivers. The bound freezes (W, U, Z) at their anchor-optimal values and
//! evaluates the weighted-MSE form, which is quadratic in the precoders; a
//! proximal term rho * ||V - Z||^2 supplies strong convexity. Precoders are
//! passed as one matrix per flat user index.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermitian::{
    adjoint, chol_logdet, frobenius_norm, hermitian_solve, hermitize, identity, inner_re,
    CMatrix, HermitianPd,
};

use super::channel::{ChannelRealization, NetworkConfig};

/// Frozen per-user auxiliary variables: receivers U, weights W, and proximal
/// centers Z.
#[derive(Debug, Clone)]
pub struct AuxVars {
    pub u: Vec<CMatrix>,
    pub w: Vec<CMatrix>,
    pub z: Vec<CMatrix>,
}

// ---------------------------------------------------------------------------
// Receive-side formulas
// ---------------------------------------------------------------------------

/// Covariance of the total received signal at `user`:
/// sum_m H_{u,c(m)} V_m V_m^H H_{u,c(m)}^H + sigma^2 I.
pub fn received_covariance(
    v: &[CMatrix],
    ch: &ChannelRealization,
    user: usize,
    cfg: &NetworkConfig,
) -> CMatrix {
    let n = cfg.user(user).rx_antennas;
    let mut j = CMatrix::zeros((n, n));
    for m in 0..cfg.num_users() {
        let h = ch.link(user, cfg.user_cell(m));
        let hv = h.dot(&v[m]);
        j = j + hv.dot(&adjoint(&hv));
    }
    let sigma2 = cfg.user(user).noise_power;
    for i in 0..n {
        j[[i, i]] += Complex64::new(sigma2, 0.0);
    }
    hermitize(&j)
}

/// Rate-optimal linear receiver J^{-1} H_direct V_user.
pub fn mmse_receiver(
    v: &[CMatrix],
    ch: &ChannelRealization,
    user: usize,
    cfg: &NetworkConfig,
) -> Result<CMatrix> {
    let j = HermitianPd::new(received_covariance(v, ch, user, cfg))?;
    let direct = ch.link(user, cfg.user_cell(user));
    hermitian_solve(&j, &direct.dot(&v[user]))
}

/// Stream-estimate error covariance for a fixed receiver:
/// (I - U^H H V_u)(I - U^H H V_u)^H
///   + sum_{m != u} U^H H_{u,c(m)} V_m V_m^H H_{u,c(m)}^H U + sigma^2 U^H U.
pub fn mse_matrix(
    v: &[CMatrix],
    u_rx: &CMatrix,
    ch: &ChannelRealization,
    user: usize,
    cfg: &NetworkConfig,
) -> Result<CMatrix> {
    let d = cfg.user(user).streams;
    let direct = ch.link(user, cfg.user_cell(user));
    if u_rx.nrows() != cfg.user(user).rx_antennas || u_rx.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "receiver is {}x{}, expected {}x{}",
            u_rx.nrows(),
            u_rx.ncols(),
            cfg.user(user).rx_antennas,
            d
        )));
    }
    let uh = adjoint(u_rx);
    let mut e = {
        let m = identity(d) - uh.dot(&direct.dot(&v[user]));
        m.dot(&adjoint(&m))
    };
    for m in 0..cfg.num_users() {
        if m == user {
            continue;
        }
        let uhv = uh.dot(&ch.link(user, cfg.user_cell(m)).dot(&v[m]));
        e = e + uhv.dot(&adjoint(&uhv));
    }
    let sigma2 = cfg.user(user).noise_power;
    e = e + uh.dot(u_rx).mapv(|z| z * sigma2);
    Ok(hermitize(&e))
}

/// Achievable rate (nats) of `user` with the given receiver:
/// log det of the inverse error covariance.
pub fn user_rate(
    u_rx: &CMatrix,
    v: &[CMatrix],
    ch: &ChannelRealization,
    user: usize,
    cfg: &NetworkConfig,
) -> Result<f64> {
    let e = HermitianPd::new(mse_matrix(v, u_rx, ch, user, cfg)?)?;
    Ok(-chol_logdet(&e))
}

/// Network sum rate with per-user optimal receivers.
pub fn sum_rate_mmse(v: &[CMatrix], ch: &ChannelRealization, cfg: &NetworkConfig) -> Result<f64> {
    let mut total = 0.0;
    for user in 0..cfg.num_users() {
        let u_rx = mmse_receiver(v, ch, user, cfg)?;
        total += user_rate(&u_rx, v, ch, user, cfg)?;
    }
    Ok(total)
}

/// Sampled objective: the negated sum rate, with the receiver minimization
/// solved in closed form.
pub fn g1(v: &[CMatrix], ch: &ChannelRealization, cfg: &NetworkConfig) -> Result<f64> {
    Ok(-sum_rate_mmse(v, ch, cfg)?)
}

// ---------------------------------------------------------------------------
// The convex upper bound
// ---------------------------------------------------------------------------

/// Optimal auxiliary variables at the anchor: U by the rate-optimal receiver,
/// W as the inverse anchor MSE (symmetrized), Z as the anchor itself.
pub fn surrogate_p_update(
    vbar: &[CMatrix],
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) -> Result<AuxVars> {
    let n_users = cfg.num_users();
    let mut u = Vec::with_capacity(n_users);
    let mut w = Vec::with_capacity(n_users);
    let mut z = Vec::with_capacity(n_users);
    for user in 0..n_users {
        let u_rx = mmse_receiver(vbar, ch, user, cfg)?;
        let e = mse_matrix(vbar, &u_rx, ch, user, cfg)?;
        let e_pd = HermitianPd::new(e).map_err(|_| Error::SingularW)?;
        let w_u = hermitize(&e_pd.cholesky().inverse()?);
        u.push(u_rx);
        w.push(w_u);
        z.push(vbar[user].clone());
    }
    Ok(AuxVars { u, w, z })
}

/// Value of the bound at `v` with frozen auxiliaries: per user,
/// -log det W + Tr(W E(V, U)) + rho ||V_u - Z_u||^2 - d.
pub fn surrogate_value(
    v: &[CMatrix],
    p: &AuxVars,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for user in 0..cfg.num_users() {
        let w_pd = HermitianPd::new(hermitize(&p.w[user])).map_err(|_| Error::SingularW)?;
        let e = mse_matrix(v, &p.u[user], ch, user, cfg)?;
        let diff = &v[user] - &p.z[user];
        total += -chol_logdet(&w_pd) + inner_re(&p.w[user], &e)
            + cfg.rho * frobenius_norm(&diff).powi(2)
            - cfg.user(user).streams as f64;
    }
    Ok(total)
}

/// Per-cell quadratic curvature of the bound (without the proximal shift):
/// G_k = sum_m H_{m,k}^H U_m W_m U_m^H H_{m,k}.
pub fn cell_curvatures(
    p: &AuxVars,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) -> Vec<CMatrix> {
    (0..cfg.num_cells())
        .map(|k| {
            let mt = cfg.cells[k].tx_antennas;
            let mut g = CMatrix::zeros((mt, mt));
            for m in 0..cfg.num_users() {
                let hu = adjoint(ch.link(m, k)).dot(&p.u[m]);
                g = g + hu.dot(&p.w[m]).dot(&adjoint(&hu));
            }
            hermitize(&g)
        })
        .collect()
}

/// Gradient of the sampled objective in real coordinates (the derivative of
/// a real function of complex matrices, doubled Wirtinger convention):
/// 2 (G_{c(u)} V_u - H_{u,c(u)}^H U_u W_u), with auxiliaries optimal at `v`.
pub fn g1_gradient(
    v: &[CMatrix],
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) -> Result<Vec<CMatrix>> {
    // Envelope derivative: the auxiliaries minimize the bound at v, so their
    // own dependence on v contributes nothing; the proximal center z = v
    // cancels exactly.
    let p = surrogate_p_update(v, ch, cfg)?;
    let g = cell_curvatures(&p, ch, cfg);
    Ok((0..cfg.num_users())
        .map(|user| {
            let k = cfg.user_cell(user);
            let lin = adjoint(ch.link(user, k)).dot(&p.u[user]).dot(&p.w[user]);
            (g[k].dot(&v[user]) - lin).mapv(|z| 2.0 * z)
        })
        .collect())
}

// ---------------------------------------------------------------------------
