//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line with the measured margins before asserting.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use common::{criterion, l1_aggregate_kkt, l1_quadratic_oracle, median};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ssum_core::dictlearn::{
    dict_update, lasso, lasso_kkt_residual, observe_signal, random_unit_dictionary,
    DictionaryModel, DictionaryState, SignalSource,
};
use ssum_core::engine::{
    check_tightness, convexity_probe_margin, run_ssum_observed, Point, RunOptions, RunTrace,
    SurrogateModel,
};
use ssum_core::experiment::{
    emit_plot_data, run_experiment, ExperimentConfig, Method, Scenario, ScenarioParams,
    WmmseParams,
};
use ssum_core::hermitian::{sample_cn, CMatrix};
use ssum_core::rng::{streams, RngStream};
use ssum_core::sg::{l1_ssum_sg, ssum_sg_model, QuadraticProblem, SmoothObjective};
use ssum_core::wmmse::model::{accumulate, v_update};
use ssum_core::wmmse::rate::user_rate;
use ssum_core::wmmse::{
    mmse_receiver, random_feasible_precoders, surrogate_p_update, BeamformerState, ChannelModel,
    ChannelRealization, MeanChannelMode, NetworkConfig, Precoders, WmmseModel,
};

fn rng(seed: u64) -> ChaCha8Rng {
    RngStream { seed, stream: 40 }.rng()
}

fn randn_vec(dim: usize, r: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|_| r.sample::<f64, _>(StandardNormal)))
}

fn random_psd_problem(dim: usize, r: &mut ChaCha8Rng) -> QuadraticProblem {
    let mut a = Array2::<f64>::zeros((dim, dim));
    for v in a.iter_mut() {
        *v = r.sample(StandardNormal);
    }
    let q = a.t().dot(&a).mapv(|v| v / dim as f64) + Array2::<f64>::eye(dim) * 0.5;
    QuadraticProblem::new(q)
}

fn desk_network() -> NetworkConfig {
    WmmseParams::default().network_config()
}

fn planted_source(n: usize, k: usize, sparsity: usize, noise: f64, r: &mut ChaCha8Rng) -> SignalSource {
    SignalSource::Planted {
        dict: random_unit_dictionary(n, k, r),
        sparsity,
        coeff_std: 1.0,
        noise_std: noise,
    }
}

// ---------------------------------------------------------------------------
// 1. Bound structure at random triples, with detector negative controls
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_surrogate_tightness() {
    let t0 = Instant::now();
    let tol = 1e-7;
    let n_triples = 1000;

    // Beamforming model at desk scale.
    let net = desk_network();
    let model = WmmseModel::new(net.clone()).unwrap();
    let mut r = rng(101);
    let channels = ChannelModel::generate(&net, &mut r).unwrap();
    let mut beam_ok = true;
    let mut beam_worst_a1 = 0.0f64;
    let mut beam_worst_a2 = f64::INFINITY;
    for _ in 0..n_triples {
        let x = random_feasible_precoders(&net, &mut r);
        let y = random_feasible_precoders(&net, &mut r);
        let xi = channels.sample(&mut r);
        let rep = check_tightness(&model, &x, &y, &xi, tol);
        beam_ok &= rep.a1_ok && rep.a2_ok;
        beam_worst_a1 = beam_worst_a1.max(rep.a1_error);
        beam_worst_a2 = beam_worst_a2.min(rep.a2_margin);
    }

    // Dictionary model.
    let mut r = rng(102);
    let source = planted_source(8, 10, 3, 0.01, &mut r);
    let mut dict_ok = true;
    let mut dict_worst_a1 = 0.0f64;
    let mut dict_worst_a2 = f64::INFINITY;
    for _ in 0..n_triples {
        let model = DictionaryModel::new(random_unit_dictionary(8, 10, &mut r), 0.1, 0.01);
        let x = random_unit_dictionary(8, 10, &mut r);
        let y = random_unit_dictionary(8, 10, &mut r);
        let xi = source.draw(&mut r);
        let rep = check_tightness(&model, &x, &y, &xi, tol);
        dict_ok &= rep.a1_ok && rep.a2_ok;
        dict_worst_a1 = dict_worst_a1.max(rep.a1_error);
        dict_worst_a2 = dict_worst_a2.min(rep.a2_margin);
    }

    // Negative control: a negated proximal weight must be flagged while the
    // anchor equality survives. The damage has to outweigh the bound's honest
    // looseness at random pairs, so size it from the measured slack.
    let mut r = rng(103);
    let triples: Vec<(Precoders, Precoders, ChannelRealization)> = (0..100)
        .map(|_| {
            (
                random_feasible_precoders(&net, &mut r),
                random_feasible_precoders(&net, &mut r),
                channels.sample(&mut r),
            )
        })
        .collect();
    let mut rho_needed = 0.0f64;
    for (x, y, xi) in &triples {
        let rep = check_tightness(&model, x, y, xi, tol);
        let d2 = x.distance(y).powi(2);
        rho_needed = rho_needed.max((rep.a2_margin - net.rho * d2) / d2);
    }
    let mut bad_net = net.clone();
    bad_net.rho = -1.2 * rho_needed;
    let bad_model = WmmseModel::new_unchecked(bad_net.clone());
    let mut rho_violations = 0usize;
    let mut rho_anchor_broke = false;
    for (x, y, xi) in &triples {
        let rep = check_tightness(&bad_model, x, y, xi, tol);
        rho_anchor_broke |= !rep.a1_ok;
        if !rep.a2_ok {
            rho_violations += 1;
        }
    }

    // Negative control: an undersized curvature constant must be flagged.
    let mut r = rng(104);
    let honest = random_psd_problem(6, &mut r);
    let broken = honest.clone().with_lipschitz(honest.lipschitz() / 4.0);
    let sg_model = ssum_sg_model(broken);
    let mut l_violations = 0usize;
    for _ in 0..100 {
        let x = randn_vec(6, &mut r);
        let y = randn_vec(6, &mut r);
        let xi = randn_vec(6, &mut r);
        if !check_tightness(&sg_model, &x, &y, &xi, tol).a2_ok {
            l_violations += 1;
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    let passed = beam_ok
        && dict_ok
        && rho_violations > 0
        && !rho_anchor_broke
        && l_violations > 0
        && elapsed < 30.0;
    let detail = format!(
        "{n_triples} triples/model: beam anchor err {beam_worst_a1:.2e} margin {beam_worst_a2:.2e}, \
         dict anchor err {dict_worst_a1:.2e} margin {dict_worst_a2:.2e}; controls flagged \
         {rho_violations}/100 and {l_violations}/100; {elapsed:.1}s"
    );
    assert!(criterion(1, "surrogate tightness", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 2. Strong convexity of the bounds
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_convexity_modulus() {
    let tol = 1e-8;
    let n_probes = 200;

    let net = desk_network();
    let model = WmmseModel::new(net.clone()).unwrap();
    let mut r = rng(201);
    let channels = ChannelModel::generate(&net, &mut r).unwrap();
    let rho = model.convexity_modulus();
    let mut beam_worst = f64::INFINITY;
    for _ in 0..n_probes {
        let x = random_feasible_precoders(&net, &mut r);
        let anchor = random_feasible_precoders(&net, &mut r);
        let xi = channels.sample(&mut r);
        let dim = x.to_flat().len();
        let dir: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let t = r.random_range(0.1..0.6);
        beam_worst = beam_worst.min(convexity_probe_margin(&model, &x, &anchor, &xi, &dir, t, rho));
    }

    let mut r = rng(202);
    let source = planted_source(8, 10, 3, 0.01, &mut r);
    let gamma = 0.01;
    let dict_model = DictionaryModel::new(random_unit_dictionary(8, 10, &mut r), 0.1, gamma);
    let mut dict_worst = f64::INFINITY;
    for _ in 0..n_probes {
        let x = random_unit_dictionary(8, 10, &mut r);
        let anchor = random_unit_dictionary(8, 10, &mut r);
        let xi = source.draw(&mut r);
        let dim = x.to_flat().len();
        let dir: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let t = r.random_range(0.1..0.6);
        dict_worst =
            dict_worst.min(convexity_probe_margin(&dict_model, &x, &anchor, &xi, &dir, t, gamma));
    }

    let passed = beam_worst >= -tol && dict_worst >= -tol;
    let detail = format!(
        "{n_probes} probes/model: beam margin {beam_worst:.2e} (modulus {rho:.2e}), \
         dict margin {dict_worst:.2e} (modulus {gamma:.2e}), tol {tol:.0e}"
    );
    assert!(criterion(2, "strong convexity", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 3. The averaged quadratic bound reproduces the gradient recursion
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_sg_equivalence() {
    let iters = 1000;
    let mut worst = 0.0f64;
    for (case, dim) in [3usize, 5, 8].iter().enumerate() {
        let mut r = rng(300 + case as u64);
        let problem = random_psd_problem(*dim, &mut r);
        let l = problem.lipschitz();
        let x0 = randn_vec(*dim, &mut r);
        let samples: Vec<Array1<f64>> = (0..iters).map(|_| randn_vec(*dim, &mut r)).collect();

        let mut engine_iterates: Vec<Array1<f64>> = Vec::with_capacity(iters + 1);
        let mut model = ssum_sg_model(problem.clone());
        let mut it = samples.iter();
        run_ssum_observed(
            &mut model,
            || it.next().unwrap().clone(),
            &x0,
            &RunOptions::new(iters, 0),
            |_, x: &Array1<f64>| engine_iterates.push(x.clone()),
        )
        .unwrap();

        // The closed-form recursion, written out directly.
        let mut x = x0.clone();
        let mut z = Array1::<f64>::zeros(*dim);
        for (i, xi) in samples.iter().enumerate() {
            let rr = (i + 1) as f64;
            let grad = problem.gradient(&x, xi);
            z = (&z * (rr - 1.0) + &x - &grad.mapv(|g| g / l)) / rr;
            x = z.clone();
            let diff = (&engine_iterates[i + 1] - &x).mapv(f64::abs).into_iter().fold(0.0, f64::max);
            worst = worst.max(diff);
        }
    }

    // Half-squared scalar distance: iterates are the running sample mean.
    let mut r = rng(310);
    let problem = QuadraticProblem::isotropic(1);
    let samples: Vec<Array1<f64>> = (0..iters).map(|_| randn_vec(1, &mut r)).collect();
    let mut model = ssum_sg_model(problem);
    let mut engine_iterates = Vec::with_capacity(iters + 1);
    let mut it = samples.iter();
    run_ssum_observed(
        &mut model,
        || it.next().unwrap().clone(),
        &Array1::zeros(1),
        &RunOptions::new(iters, 0),
        |_, x: &Array1<f64>| engine_iterates.push(x[0]),
    )
    .unwrap();
    let mut mean_worst = 0.0f64;
    let mut acc = 0.0f64;
    for (i, s) in samples.iter().enumerate() {
        acc += s[0];
        mean_worst = mean_worst.max((engine_iterates[i + 1] - acc / (i + 1) as f64).abs());
    }

    let passed = worst <= 1e-10 && mean_worst <= 1e-12;
    let detail = format!(
        "3 problems x {iters} iterations: max coordinate gap {worst:.2e} (tol 1e-10); \
         running-mean gap {mean_worst:.2e} (tol 1e-12)"
    );
    assert!(criterion(3, "gradient recursion equivalence", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 4. l1 variant against an independently derived convex oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_l1_oracle() {
    let dim = 4;
    let weight = 0.3;
    let mut r = rng(401);
    let problem = random_psd_problem(dim, &mut r);
    let l = problem.lipschitz();
    let x0 = randn_vec(dim, &mut r);
    let samples: Vec<Array1<f64>> = (0..100).map(|_| randn_vec(dim, &mut r)).collect();

    // anchors[i] = x^i of the recursion (anchor of bound i+1).
    let mut anchors = vec![x0.clone()];
    for rr in 1..=100usize {
        let mut it = samples.iter().take(rr);
        let run = l1_ssum_sg(&problem, weight, &x0, rr, 0, || it.next().unwrap().clone());
        anchors.push(run.final_point);
    }

    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for rr in 1..=100usize {
        let mean_anchor = anchors[..rr]
            .iter()
            .fold(Array1::<f64>::zeros(dim), |acc, a| acc + a)
            / rr as f64;
        let mean_grad = (0..rr)
            .map(|i| problem.gradient(&anchors[i], &samples[i]))
            .fold(Array1::<f64>::zeros(dim), |acc, g| acc + g)
            / rr as f64;
        let oracle = l1_quadratic_oracle(l, &mean_anchor, &mean_grad, weight);
        let gap =
            (&anchors[rr] - &oracle).mapv(f64::abs).into_iter().fold(0.0, f64::max);
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(l1_aggregate_kkt(l, &mean_anchor, &mean_grad, weight, &anchors[rr]));
    }

    // Constant sample: every iterate equals the analytic fixed point.
    let mut r = rng(402);
    let iso = QuadraticProblem::isotropic(3);
    let xi = randn_vec(3, &mut r);
    let expected = l1_quadratic_oracle(1.0, &xi, &Array1::zeros(3), weight);
    let mut fixed_worst = 0.0f64;
    for rr in 1..=50usize {
        let run = l1_ssum_sg(&iso, weight, &randn_vec(3, &mut r), rr, 0, || xi.clone());
        let diff = (&run.final_point - &expected).mapv(f64::abs).into_iter().fold(0.0, f64::max);
        fixed_worst = fixed_worst.max(diff);
    }

    let passed = worst_gap <= 1e-8 && worst_kkt <= 1e-8 && fixed_worst <= 1e-12;
    let detail = format!(
        "r <= 100, n = {dim}: max oracle gap {worst_gap:.2e}, max stationarity residual \
         {worst_kkt:.2e} (tol 1e-8); constant-sample fixed-point gap {fixed_worst:.2e}"
    );
    assert!(criterion(4, "l1 variant vs convex oracle", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 5. Scalar capacity closed form and receiver optimality
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_scalar_capacity() {
    let mut r = rng(501);
    let mut worst_rate_err = 0.0f64;
    let mut worst_perturb = f64::NEG_INFINITY;
    for _ in 0..100 {
        let h = sample_cn(Complex64::new(0.0, 0.0), 1.0, &mut r);
        let v = sample_cn(Complex64::new(0.0, 0.0), 1.0, &mut r);
        let sigma2 = r.random_range(0.2..2.0);
        let cfg = NetworkConfig::symmetric(1, 1, 1, 1, 1, v.norm_sqr() * 1.3 + 0.1, sigma2);
        let ch = ChannelRealization::new(vec![CMatrix::from_elem((1, 1), h)], 1);
        let precoders = vec![CMatrix::from_elem((1, 1), v)];
        let u = mmse_receiver(&precoders, &ch, 0, &cfg).unwrap();
        let rate = user_rate(&u, &precoders, &ch, 0, &cfg).unwrap();
        let expected = (1.0 + (h * v).norm_sqr() / sigma2).ln();
        worst_rate_err = worst_rate_err.max((rate - expected).abs());
        for _ in 0..100 {
            let mut u_p = u.clone();
            u_p[[0, 0]] += sample_cn(Complex64::new(0.0, 0.0), 0.2, &mut r);
            let perturbed = user_rate(&u_p, &precoders, &ch, 0, &cfg).unwrap();
            worst_perturb = worst_perturb.max(perturbed - rate);
        }
    }
    let passed = worst_rate_err <= 1e-10 && worst_perturb <= 1e-12;
    let detail = format!(
        "100 scalar instances: max |rate - ln(1+snr)| = {worst_rate_err:.2e} (tol 1e-10); \
         best perturbed-receiver improvement {worst_perturb:.2e} (must be <= 1e-12)"
    );
    assert!(criterion(5, "scalar capacity oracle", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// Shared desk-scale averaged-bound runs for criteria 6, 7, and 9
// ---------------------------------------------------------------------------

struct DeskRun {
    trace: RunTrace<Precoders>,
    min_power_margin: f64,
    worst_slackness: f64,
}

struct Desk {
    runs: Vec<DeskRun>,
    elapsed_s: f64,
}

static DESK: OnceLock<Desk> = OnceLock::new();

fn desk_runs() -> &'static Desk {
    DESK.get_or_init(|| {
        let t0 = Instant::now();
        let net = desk_network();
        let runs = (0..5u64)
            .map(|seed| {
                let mut srng = RngStream { seed, stream: streams::SCENARIO }.rng();
                let channels = ChannelModel::generate(&net, &mut srng).unwrap();
                let mut irng = RngStream { seed, stream: streams::INIT }.rng();
                let v0 = random_feasible_precoders(&net, &mut irng);
                let mut mrng = RngStream { seed, stream: streams::METHOD_BASE }.rng();
                let mut model = WmmseModel::new(net.clone()).unwrap();
                let mut margin = f64::INFINITY;
                let trace = run_ssum_observed(
                    &mut model,
                    || channels.sample(&mut mrng),
                    &v0,
                    &RunOptions::new(500, 1),
                    |_, v: &Precoders| {
                        for (k, cell) in net.cells.iter().enumerate() {
                            margin = margin
                                .min(cell.power_budget * (1.0 + 1e-6) - v.cell_power(&net, k));
                        }
                    },
                )
                .unwrap();
                let worst_slackness = model
                    .solve_log()
                    .iter()
                    .flatten()
                    .map(|s| s.slackness())
                    .fold(0.0f64, f64::max);
                DeskRun { trace, min_power_margin: margin, worst_slackness }
            })
            .collect();
        Desk { runs, elapsed_s: t0.elapsed().as_secs_f64() }
    })
}

// ---------------------------------------------------------------------------
// 6. Averaged-bound gap: nonnegative and decaying
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_gap_decay() {
    let desk = desk_runs();
    let mut min_gap = f64::INFINITY;
    let mut ratios = Vec::new();
    for run in &desk.runs {
        for row in &run.trace.rows {
            min_gap = min_gap.min(row.surrogate_gap);
        }
        let g10 = run.trace.row_at(10).unwrap().surrogate_gap;
        let g500 = run.trace.row_at(500).unwrap().surrogate_gap;
        ratios.push(g500 / g10);
    }
    let med = median(&ratios);
    let passed = min_gap >= -1e-8 && med <= 0.1 && desk.elapsed_s < 300.0;
    let detail = format!(
        "5 seeds x 500 iterations: min gap {min_gap:.2e}, median gap(500)/gap(10) = {med:.3} \
         (need <= 0.1), runs took {:.1}s",
        desk.elapsed_s
    );
    assert!(criterion(6, "gap decay", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 7. O(1/r) step-length law
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_step_norm_law() {
    let desk = desk_runs();
    let mut worst_ratio = 0.0f64;
    let mut passed = true;
    for run in &desk.runs {
        let head = run
            .trace
            .rows
            .iter()
            .filter(|row| (5..=50).contains(&row.r))
            .map(|row| row.r as f64 * row.step_norm)
            .fold(0.0f64, f64::max);
        let tail = run
            .trace
            .rows
            .iter()
            .filter(|row| (50..=500).contains(&row.r))
            .map(|row| row.r as f64 * row.step_norm)
            .fold(0.0f64, f64::max);
        passed &= tail <= 5.0 * head;
        worst_ratio = worst_ratio.max(tail / head);
    }
    let detail = format!(
        "5 seeds: worst (max r*step over [50,500]) / (max over [5,50]) = {worst_ratio:.3} \
         (need <= 5)"
    );
    assert!(criterion(7, "step-norm law", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 8. Qualitative ordering of the four methods at desk scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_method_ordering() {
    let t0 = Instant::now();
    let mut wins = 0usize;
    let mut margins = Vec::new();
    for seed in 0..10u64 {
        let mut cfg = ExperimentConfig::default_for(Scenario::Wmmse);
        cfg.seed = seed;
        cfg.eval_at = Some(vec![300]);
        let table = run_experiment(&cfg).unwrap();
        let ours = table.final_value(Method::StochasticWmmse).unwrap();
        let rivals = [
            table.final_value(Method::OneSampleWmmse).unwrap(),
            table.final_value(Method::MeanWmmse).unwrap(),
            table.final_value(Method::Sg).unwrap(),
        ];
        let best_rival = rivals.iter().copied().fold(f64::MIN, f64::max);
        margins.push(ours - best_rival);
        if ours > best_rival {
            wins += 1;
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let passed = wins >= 9 && elapsed < 600.0;
    let detail = format!(
        "10 seeds, r_max 300, 200 evaluation draws: averaged-bound method won {wins}/10 \
         (need >= 9), median margin over best rival {:.3} nats, {elapsed:.1}s",
        median(&margins)
    );
    assert!(criterion(8, "method ordering", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 9. Power feasibility and complementary slackness everywhere
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_power_feasibility() {
    let desk = desk_runs();
    let budget = desk_network().cells.iter().map(|c| c.power_budget).fold(f64::MIN, f64::max);
    let mut min_margin = f64::INFINITY;
    let mut worst_slack = 0.0f64;
    for run in &desk.runs {
        min_margin = min_margin.min(run.min_power_margin);
        worst_slack = worst_slack.max(run.worst_slackness);
    }

    // The single-channel baselines run the same constrained solve; check a
    // short sweep of each, plus the projected-gradient competitor.
    let net = desk_network();
    let mut r = rng(901);
    let channels = ChannelModel::generate(&net, &mut r).unwrap();
    let v0 = random_feasible_precoders(&net, &mut r);
    let mut plain = net.clone();
    plain.rho = 0.0;
    for ch in [channels.sample(&mut r), channels.mean_channels(MeanChannelMode::PathLossMagnitude)] {
        let mut v = v0.clone();
        for _ in 0..60 {
            let p = surrogate_p_update(v.mats(), &ch, &plain).unwrap();
            let mut state = BeamformerState::new(&plain, v.clone());
            accumulate(&mut state, &p, &ch, &plain);
            let (next, solves) = v_update(&state, &plain).unwrap();
            v = next;
            for (k, cell) in plain.cells.iter().enumerate() {
                min_margin =
                    min_margin.min(cell.power_budget * (1.0 + 1e-6) - v.cell_power(&plain, k));
            }
            for s in &solves {
                worst_slack = worst_slack.max(s.slackness());
            }
        }
    }
    let lipschitz = ssum_core::wmmse::estimate_g1_lipschitz(&net, &channels, 8, &mut r).unwrap();
    ssum_core::wmmse::wmmse_sg_run_observed(
        &net,
        &channels,
        &v0,
        80,
        0,
        lipschitz,
        &mut r,
        |_, v: &Precoders| {
            for (k, cell) in net.cells.iter().enumerate() {
                min_margin = min_margin.min(cell.power_budget * (1.0 + 1e-6) - v.cell_power(&net, k));
            }
        },
    )
    .unwrap();

    let passed = min_margin >= 0.0 && worst_slack <= 1e-6 * budget;
    let detail = format!(
        "every iterate of every run: min budget margin {min_margin:.2e} (must be >= 0), \
         worst multiplier slackness {worst_slack:.2e} (tol {:.0e})",
        1e-6 * budget
    );
    assert!(criterion(9, "power feasibility", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 10. Planted-dictionary recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_dictionary_learning() {
    let (n, k, sparsity, noise, r_max) = (8usize, 10usize, 3usize, 0.01f64, 2000usize);
    let (lambda, gamma) = (0.1, 0.01);
    let mut srng = rng(1001);
    let source = planted_source(n, k, sparsity, noise, &mut srng);
    let mut erng = rng(1002);
    let eval: Vec<Array1<f64>> = (0..200).map(|_| source.draw(&mut erng)).collect();
    let mut irng = rng(1003);
    let d0 = random_unit_dictionary(n, k, &mut irng);

    // Fitting loss: the reconstruction half of the coding objective, with the
    // code chosen by the same penalized solve the learner uses.
    let mut eval_kkt = 0.0f64;
    let mut mean_loss = |d: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for y in &eval {
            let alpha = lasso(d, y, lambda, 1e-10).unwrap();
            eval_kkt = eval_kkt.max(lasso_kkt_residual(d, y, lambda, &alpha));
            let resid = y - &d.dot(&alpha);
            acc += 0.5 * resid.dot(&resid);
        }
        acc / eval.len() as f64
    };
    let initial_loss = mean_loss(&d0);

    // The online loop itself, with every training code checked against the
    // subproblem's first-order conditions and every column kept in the ball.
    let mut mrng = rng(1004);
    let mut state = DictionaryState::new(d0.clone(), lambda, gamma);
    let mut current = d0.clone();
    let mut train_kkt = 0.0f64;
    let mut ball_margin = f64::INFINITY;
    for _ in 1..=r_max {
        let y = source.draw(&mut mrng);
        state.dict = current.clone();
        let alpha = observe_signal(&mut state, &y, 1e-10).unwrap();
        train_kkt = train_kkt.max(lasso_kkt_residual(&current, &y, lambda, &alpha));
        current = dict_update(&state).unwrap();
        for col in current.columns() {
            ball_margin = ball_margin.min(1.0 - col.dot(&col).sqrt());
        }
    }
    let final_loss = mean_loss(&current);

    let passed = final_loss <= 0.5 * initial_loss
        && train_kkt <= 1e-8
        && eval_kkt <= 1e-8
        && ball_margin >= -1e-12;
    let detail = format!(
        "planted n={n} k={k} s={sparsity}: loss {initial_loss:.4} -> {final_loss:.4} \
         (need <= {:.4}); worst code residual train {train_kkt:.2e} / eval {eval_kkt:.2e} \
         (tol 1e-8); min column-ball margin {ball_margin:.2e}",
        0.5 * initial_loss
    );
    assert!(criterion(10, "dictionary learning", passed, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// 11. Byte-identical CSV outputs on rerun
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_determinism() {
    let mut configs = Vec::new();
    let mut tiny_wmmse = ExperimentConfig::default_for(Scenario::Wmmse);
    tiny_wmmse.r_max = 20;
    tiny_wmmse.eval_every = 10;
    tiny_wmmse.n_mc = 12;
    tiny_wmmse.seed = 5;
    if let ScenarioParams::Wmmse(p) = &mut tiny_wmmse.params {
        p.cells = 2;
        p.streams = 1;
    }
    configs.push(tiny_wmmse);
    let mut tiny_dict = ExperimentConfig::default_for(Scenario::DictLearn);
    tiny_dict.r_max = 80;
    tiny_dict.eval_every = 40;
    tiny_dict.n_mc = 20;
    configs.push(tiny_dict);
    let mut tiny_demo = ExperimentConfig::default_for(Scenario::SgDemo);
    tiny_demo.r_max = 100;
    tiny_demo.eval_every = 25;
    tiny_demo.n_mc = 40;
    configs.push(tiny_demo);

    let mut compared = 0usize;
    for cfg in &configs {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let table_a = run_experiment(cfg).unwrap();
        let table_b = run_experiment(cfg).unwrap();
        emit_plot_data(cfg, &table_a, dir_a.path()).unwrap();
        emit_plot_data(cfg, &table_b, dir_b.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in &names {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differed between reruns");
            compared += 1;
        }
    }
    let passed = compared >= 3 * 3;
    let detail =
        format!("3 scenarios rerun twice: {compared} files compared, all byte-identical");
    assert!(criterion(11, "determinism", passed, &detail), "{detail}");
}
