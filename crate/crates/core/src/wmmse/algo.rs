//! Baselines and evaluation for the beamforming instance: the alternating
//! algorithm on one fixed channel, Monte-Carlo scoring of the ergodic sum
//! rate, and the projected stochastic-gradient competitor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engine::{Point, RunTrace, TraceRow};
use crate::error::{Error, Result};
use crate::util;

use super::channel::{ChannelModel, ChannelRealization, NetworkConfig};
use super::model::{v_update, BeamformerState, Precoders, random_feasible_precoders};
use super::rate;

// ---------------------------------------------------------------------------
// Deterministic baseline
// ---------------------------------------------------------------------------

/// One receiver/weight/precoder sweep of the alternating baseline on a fixed
/// channel, with no averaging and no proximal pull.
pub fn alternating_step(
    v: &Precoders,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) -> Result<Precoders> {
    let mut cfg_plain = cfg.clone();
    // The baseline solves the instantaneous problem: no proximal term.
    cfg_plain.rho = 0.0;
    let p = rate::surrogate_p_update(v.mats(), ch, &cfg_plain)?;
    let mut state = BeamformerState::new(&cfg_plain, v.clone());
    super::model::accumulate(&mut state, &p, ch, &cfg_plain);
    let (next, _solves) = v_update(&state, &cfg_plain)?;
    Ok(next)
}

/// Alternating baseline driven for `n_iter` sweeps. Returns the final
/// precoders and the sum rate after every sweep (nondecreasing up to solver
/// tolerance).
pub fn deterministic_wmmse_trace(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    v0: &Precoders,
    n_iter: usize,
) -> Result<(Precoders, Vec<f64>)> {
    let mut v = v0.clone();
    let mut rates = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        v = alternating_step(&v, ch, cfg)?;
        rates.push(rate::sum_rate_mmse(v.mats(), ch, cfg)?);
    }
    Ok((v, rates))
}

/// Final precoders of the alternating baseline.
pub fn deterministic_wmmse(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    v0: &Precoders,
    n_iter: usize,
) -> Result<Precoders> {
    Ok(deterministic_wmmse_trace(ch, cfg, v0, n_iter)?.0)
}

// ---------------------------------------------------------------------------
// Ergodic evaluation
// ---------------------------------------------------------------------------

/// Sum rate of `v` on every draw, in draw order. Worker count never changes
/// the values: each draw is scored independently and written to its own slot.
fn rates_on_draws(
    v: &Precoders,
    cfg: &NetworkConfig,
    draws: &[ChannelRealization],
    threads: usize,
) -> Result<Vec<f64>> {
    let n = draws.len();
    let mut rates = vec![0.0f64; n];
    if threads <= 1 || n < 2 {
        for (slot, ch) in rates.iter_mut().zip(draws) {
            *slot = rate::sum_rate_mmse(v.mats(), ch, cfg)?;
        }
        return Ok(rates);
    }
    let chunk = n.div_ceil(threads);
    let failed = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|scope| {
        for (slots, chs) in rates.chunks_mut(chunk).zip(draws.chunks(chunk)) {
            let failed = &failed;
            scope.spawn(move || {
                for (slot, ch) in slots.iter_mut().zip(chs) {
                    match rate::sum_rate_mmse(v.mats(), ch, cfg) {
                        Ok(r) => *slot = r,
                        Err(_) => {
                            failed.store(true, std::sync::atomic::Ordering::Relaxed);
                            return;
                        }
                    }
                }
            });
        }
    });
    if failed.load(std::sync::atomic::Ordering::Relaxed) {
        return Err(Error::NonFinite("sum-rate evaluation failed on a draw"));
    }
    Ok(rates)
}

/// Mean and standard error of the sum rate over a fixed draw set, summed
/// pairwise so the result is independent of worker count.
pub fn score_on_draws(
    v: &Precoders,
    cfg: &NetworkConfig,
    draws: &[ChannelRealization],
    threads: usize,
) -> Result<(f64, f64)> {
    let rates = rates_on_draws(v, cfg, draws, threads)?;
    Ok((util::mean(&rates), util::standard_error(&rates)))
}

/// Monte-Carlo ergodic sum rate over fresh draws from the channel model.
pub fn ergodic_sum_rate(
    v: &Precoders,
    cfg: &NetworkConfig,
    channels: &ChannelModel,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let draws: Vec<ChannelRealization> = (0..n_mc).map(|_| channels.sample(rng)).collect();
    score_on_draws(v, cfg, &draws, 1)
}

// ---------------------------------------------------------------------------
// Stochastic gradient competitor
// ---------------------------------------------------------------------------

/// Secant estimate of the gradient's Lipschitz constant over random feasible
/// precoder pairs and fresh channel draws, with a safety factor of two.
pub fn estimate_g1_lipschitz(
    cfg: &NetworkConfig,
    channels: &ChannelModel,
    n_probes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    // Long-range secants between two random full-power points average the
    // curvature along the segment and miss the steep region near low transmit
    // power, which is exactly where the rate gradients change fastest. Probe
    // locally instead: jitter the power scale, step a short distance in a
    // random direction, and keep the largest observed gradient ratio.
    let mut worst = 0.0f64;
    for _ in 0..n_probes {
        let ch = channels.sample(rng);
        let base = random_feasible_precoders(cfg, rng);
        let scale = 0.05 + 0.95 * rng.random::<f64>();
        let flat: Vec<f64> = base.to_flat().iter().map(|a| a * scale).collect();
        let x = base.with_flat(&flat);
        let mut dir: Vec<f64> =
            (0..flat.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            continue;
        }
        let x_norm = flat.iter().map(|a| a * a).sum::<f64>().sqrt();
        let h = 1e-4 * (1.0 + x_norm);
        for d in dir.iter_mut() {
            *d *= h / norm;
        }
        let shifted: Vec<f64> = flat.iter().zip(&dir).map(|(a, b)| a + b).collect();
        let y = x.with_flat(&shifted);
        let gx = Precoders::new(rate::g1_gradient(x.mats(), &ch, cfg)?);
        let gy = Precoders::new(rate::g1_gradient(y.mats(), &ch, cfg)?);
        let num = gx.distance(&gy);
        if num.is_finite() {
            worst = worst.max(num / h);
        }
    }
    if worst <= 0.0 {
        return Err(Error::DegenerateStats("no usable curvature probe".into()));
    }
    Ok(2.0 * worst)
}

/// Classical diminishing-step stochastic gradient on the ergodic objective:
/// each iteration takes one sampled-gradient step of length 1/(r*lipschitz)
/// and projects back onto the per-cell power balls. Traced rows still report
/// the averaged isotropic-quadratic-bound gap at the current iterate as a
/// diagnostic. The observer sees every iterate, including the starting point
/// as (0, v0).
pub fn wmmse_sg_run_observed<O>(
    cfg: &NetworkConfig,
    channels: &ChannelModel,
    v0: &Precoders,
    r_max: usize,
    trace_every: usize,
    lipschitz: f64,
    rng: &mut ChaCha8Rng,
    mut observer: O,
) -> Result<RunTrace<Precoders>>
where
    O: FnMut(usize, &Precoders),
{
    if !(lipschitz > 0.0) {
        return Err(Error::Config(format!("lipschitz {lipschitz} must be positive")));
    }
    let l = lipschitz;
    let mut x = v0.clone();
    observer(0, &x);
    let dim = v0.to_flat().len();
    let mut rows = Vec::new();

    // Statistics of the averaged quadratic bounds, plus the raw draws so the
    // sample-average objective can be evaluated on traced rows.
    let mut sum_g = 0.0f64;
    let mut sum_grad = vec![0.0f64; dim];
    let mut sum_anchor = vec![0.0f64; dim];
    let mut sum_grad_dot_anchor = 0.0f64;
    let mut sum_anchor_sq = 0.0f64;
    let mut draws: Vec<ChannelRealization> = Vec::with_capacity(r_max);

    for r in 1..=r_max {
        let ch = channels.sample(rng);
        let g_val = rate::g1(x.mats(), &ch, cfg)?;
        let grad = Precoders::new(rate::g1_gradient(x.mats(), &ch, cfg)?).to_flat();
        let anchor = x.to_flat();

        sum_g += g_val;
        sum_grad_dot_anchor += grad.iter().zip(&anchor).map(|(g, a)| g * a).sum::<f64>();
        sum_anchor_sq += anchor.iter().map(|a| a * a).sum::<f64>();
        for i in 0..dim {
            sum_grad[i] += grad[i];
            sum_anchor[i] += anchor[i];
        }
        draws.push(ch);

        let step = 1.0 / (r as f64 * l);
        let moved: Vec<f64> = anchor.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
        let next = x.with_flat(&moved).project_power(cfg);
        let step_norm = next.distance(&x);
        x = next;
        observer(r, &x);

        let traced = trace_every > 0 && (r % trace_every == 0 || r == r_max);
        if traced {
            let xf = x.to_flat();
            let quad: f64 = xf.iter().map(|v| v * v).sum::<f64>() * (r as f64)
                - 2.0 * xf.iter().zip(&sum_anchor).map(|(a, b)| a * b).sum::<f64>()
                + sum_anchor_sq;
            let bound_avg = (sum_g
                + xf.iter().zip(&sum_grad).map(|(a, b)| a * b).sum::<f64>()
                - sum_grad_dot_anchor
                + 0.5 * l * quad)
                / r as f64;
            let objective_terms: Vec<f64> = draws
                .iter()
                .map(|d| rate::g1(x.mats(), d, cfg))
                .collect::<Result<_>>()?;
            let sample_avg = util::mean(&objective_terms);
            rows.push(TraceRow {
                r,
                step_norm,
                surrogate_gap: bound_avg - sample_avg,
                sampled_obj: g_val,
            });
        }
    }
    Ok(RunTrace { rows, final_point: x })
}

/// `wmmse_sg_run_observed` without the observer.
pub fn wmmse_sg_run(
    cfg: &NetworkConfig,
    channels: &ChannelModel,
    v0: &Precoders,
    r_max: usize,
    trace_every: usize,
    lipschitz: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace<Precoders>> {
    wmmse_sg_run_observed(cfg, channels, v0, r_max, trace_every, lipschitz, rng, |_, _| {})
}

// ---------------------------------------------------------------------------
