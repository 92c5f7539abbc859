//! Invariant sweeps behind the `check` subcommand: bound tightness and
//! curvature probes, detector negative controls, gap decay, the O(1/r) step
//! law, and power feasibility, each reported with its measured margin.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dictlearn::{
    lasso, lasso_kkt_residual, random_unit_dictionary, DictionaryModel, SignalSource,
};
use crate::engine::{
    check_tightness, convexity_probe_margin, run_ssum_observed, step_norm_bound_check, Point,
    RunOptions, SurrogateModel,
};
use crate::rng::RngStream;
use crate::sg::{
    projected_ssum_sg, shrink, ssum_sg_model, QuadraticProblem, SgSurrogateModel, SmoothObjective,
};
use crate::wmmse::{random_feasible_precoders, ChannelModel, Precoders, WmmseModel};

use super::config::{ExperimentConfig, ScenarioParams};

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Signed distance to the failure boundary (positive is healthy).
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check plus a summary line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {} margin={:.3e} | {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.margin,
                c.detail
            ));
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        s.push_str(&format!("property suite: {passed}/{} passed\n", self.checks.len()));
        s
    }
}

fn push(report: &mut PropertyReport, name: &'static str, passed: bool, margin: f64, detail: String) {
    report.checks.push(PropertyCheck { name, passed, margin, detail });
}

fn fixed_rng(tag: u64) -> ChaCha8Rng {
    // The suite's own seeds are fixed so `check` output is reproducible
    // regardless of the experiment seed.
    RngStream { seed: 0x5eed_0000 + tag, stream: 63 }.rng()
}

/// Run the registered invariant sweeps for the config's scenario.
pub fn property_suite(cfg: &ExperimentConfig) -> PropertyReport {
    let mut report = PropertyReport::default();
    match &cfg.params {
        ScenarioParams::Wmmse(p) => wmmse_checks(cfg, p, &mut report),
        ScenarioParams::DictLearn(p) => dict_checks(cfg, p, &mut report),
        ScenarioParams::SgDemo(p) => sg_checks(cfg, p, &mut report),
    }
    report
}

// ---------------------------------------------------------------------------
// Beamforming checks
// ---------------------------------------------------------------------------

fn wmmse_checks(cfg: &ExperimentConfig, p: &super::config::WmmseParams, report: &mut PropertyReport) {
    let net = p.network_config();
    let tol = 1e-7;

    // Bound structure at random triples.
    {
        let mut rng = fixed_rng(1);
        let model = match WmmseModel::new(net.clone()) {
            Ok(m) => m,
            Err(e) => {
                push(report, "wmmse_tightness", false, f64::NEG_INFINITY, format!("{e}"));
                return;
            }
        };
        let channels = ChannelModel::generate(&net, &mut rng).expect("validated config");
        let mut worst_a1 = 0.0f64;
        let mut worst_a2 = f64::INFINITY;
        let mut ok = true;
        let n_triples = 80;
        for _ in 0..n_triples {
            let x = random_feasible_precoders(&net, &mut rng);
            let y = random_feasible_precoders(&net, &mut rng);
            let xi = channels.sample(&mut rng);
            let rep = check_tightness(&model, &x, &y, &xi, tol);
            worst_a1 = worst_a1.max(rep.a1_error);
            worst_a2 = worst_a2.min(rep.a2_margin);
            ok &= rep.a1_ok && rep.a2_ok;
        }
        push(
            report,
            "wmmse_tightness",
            ok,
            worst_a2,
            format!("{n_triples} triples, worst anchor error {worst_a1:.3e}, tol {tol:.0e}"),
        );
    }

    // The detector must flag a deliberately broken proximal weight. The
    // negated weight has to outweigh the bound's honest looseness at random
    // pairs, so size it from the measured slack rather than a fixed constant.
    {
        let mut rng = fixed_rng(2);
        let honest = WmmseModel::new(net.clone()).expect("validated config");
        let channels = ChannelModel::generate(&net, &mut rng).expect("validated config");
        let n_triples = 30;
        let triples: Vec<_> = (0..n_triples)
            .map(|_| {
                (
                    random_feasible_precoders(&net, &mut rng),
                    random_feasible_precoders(&net, &mut rng),
                    channels.sample(&mut rng),
                )
            })
            .collect();
        let mut rho_needed = 0.0f64;
        for (x, y, xi) in &triples {
            let rep = check_tightness(&honest, x, y, xi, tol);
            let d2 = x.distance(y).powi(2);
            rho_needed = rho_needed.max((rep.a2_margin - net.rho * d2) / d2);
        }
        let mut bad = net.clone();
        bad.rho = -1.2 * rho_needed;
        let model = WmmseModel::new_unchecked(bad.clone());
        let mut violations = 0usize;
        let mut anchor_broke = false;
        for (x, y, xi) in &triples {
            let rep = check_tightness(&model, x, y, xi, tol);
            anchor_broke |= !rep.a1_ok;
            if !rep.a2_ok {
                violations += 1;
            }
        }
        push(
            report,
            "wmmse_negative_control",
            violations > 0 && !anchor_broke,
            violations as f64,
            format!("negated weight: {violations}/{n_triples} domination violations detected"),
        );
    }

    // Curvature of the bound is at least the proximal weight.
    {
        let mut rng = fixed_rng(3);
        let model = WmmseModel::new(net.clone()).expect("validated config");
        let channels = ChannelModel::generate(&net, &mut rng).expect("validated config");
        let gamma = model.convexity_modulus();
        let mut worst = f64::INFINITY;
        let n_probes = 50;
        for _ in 0..n_probes {
            let x = random_feasible_precoders(&net, &mut rng);
            let anchor = random_feasible_precoders(&net, &mut rng);
            let xi = channels.sample(&mut rng);
            let dim = x.to_flat().len();
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let t = 0.3;
            worst = worst.min(convexity_probe_margin(&model, &x, &anchor, &xi, &dir, t, gamma));
        }
        push(
            report,
            "wmmse_modulus",
            worst >= -1e-8,
            worst,
            format!("{n_probes} probes against modulus {gamma:.3e}"),
        );
    }

    // One short averaged run feeds the gap, step-law, and power checks.
    {
        let mut rng = fixed_rng(4);
        let mut model = WmmseModel::new(net.clone()).expect("validated config");
        let channels = ChannelModel::generate(&net, &mut rng).expect("validated config");
        let v0 = random_feasible_precoders(&net, &mut rng);
        let r_max = cfg.r_max.min(200);
        let mut power_margin = f64::INFINITY;
        let trace = run_ssum_observed(
            &mut model,
            || channels.sample(&mut rng),
            &v0,
            &RunOptions::new(r_max, 1),
            |_, v: &Precoders| {
                for (k, cell) in net.cells.iter().enumerate() {
                    power_margin =
                        power_margin.min(cell.power_budget * (1.0 + 1e-6) - v.cell_power(&net, k));
                }
            },
        );
        match trace {
            Ok(trace) => {
                let min_gap =
                    trace.rows.iter().map(|r| r.surrogate_gap).fold(f64::INFINITY, f64::min);
                let first = trace
                    .rows
                    .iter()
                    .find(|r| r.r >= 10)
                    .map(|r| r.surrogate_gap)
                    .unwrap_or(f64::NAN);
                let last = trace.rows.last().map(|r| r.surrogate_gap).unwrap_or(f64::NAN);
                push(
                    report,
                    "wmmse_gap_decay",
                    min_gap >= -1e-8 && last <= 0.7 * first,
                    first - last,
                    format!("gap {first:.3e} at r=10 -> {last:.3e} at r={r_max}, min {min_gap:.3e}"),
                );
                match step_norm_bound_check(&trace.rows, 50, 5.0) {
                    Ok(rep) => push(
                        report,
                        "wmmse_step_law",
                        rep.ok,
                        5.0 * rep.constant - rep.tail_max,
                        format!("C = {:.6e}, tail max r*step = {:.6e}", rep.constant, rep.tail_max),
                    ),
                    Err(e) => push(report, "wmmse_step_law", false, f64::NEG_INFINITY, format!("{e}")),
                }
                let worst_slack = model
                    .solve_log()
                    .iter()
                    .flatten()
                    .map(|s| s.slackness())
                    .fold(0.0f64, f64::max);
                let budget = net.cells.iter().map(|c| c.power_budget).fold(f64::MIN, f64::max);
                push(
                    report,
                    "wmmse_power_feasibility",
                    power_margin >= 0.0 && worst_slack <= 1e-6 * budget,
                    power_margin,
                    format!("min budget margin {power_margin:.3e}, worst slackness {worst_slack:.3e}"),
                );
            }
            Err(e) => {
                push(report, "wmmse_gap_decay", false, f64::NEG_INFINITY, format!("run failed: {e}"));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dictionary checks
// ---------------------------------------------------------------------------

fn dict_checks(cfg: &ExperimentConfig, p: &super::config::DictParams, report: &mut PropertyReport) {
    let tol = 1e-7;
    let source = |rng: &mut ChaCha8Rng| SignalSource::Planted {
        dict: random_unit_dictionary(p.signal_dim, p.num_atoms, rng),
        sparsity: p.sparsity,
        coeff_std: p.coeff_std,
        noise_std: p.noise_std,
    };

    {
        let mut rng = fixed_rng(11);
        let src = source(&mut rng);
        let mut worst_a1 = 0.0f64;
        let mut worst_a2 = f64::INFINITY;
        let mut ok = true;
        let n_triples = 80;
        for _ in 0..n_triples {
            let model = DictionaryModel::new(
                random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng),
                p.lambda,
                p.gamma_prox,
            );
            let x = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng);
            let y = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng);
            let xi = src.draw(&mut rng);
            let rep = check_tightness(&model, &x, &y, &xi, tol);
            worst_a1 = worst_a1.max(rep.a1_error);
            worst_a2 = worst_a2.min(rep.a2_margin);
            ok &= rep.a1_ok && rep.a2_ok;
        }
        push(
            report,
            "dict_tightness",
            ok,
            worst_a2,
            format!("{n_triples} triples, worst anchor error {worst_a1:.3e}, tol {tol:.0e}"),
        );
    }

    {
        let mut rng = fixed_rng(12);
        let src = source(&mut rng);
        let model = DictionaryModel::new(
            random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng),
            p.lambda,
            p.gamma_prox,
        );
        let gamma = model.convexity_modulus();
        let mut worst = f64::INFINITY;
        let n_probes = 50;
        for _ in 0..n_probes {
            let x = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng);
            let anchor = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng);
            let xi = src.draw(&mut rng);
            let dim = x.to_flat().len();
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            worst = worst.min(convexity_probe_margin(&model, &x, &anchor, &xi, &dir, 0.3, gamma));
        }
        push(
            report,
            "dict_modulus",
            worst >= -1e-8,
            worst,
            format!("{n_probes} probes against modulus {gamma:.3e}"),
        );
    }

    {
        let mut rng = fixed_rng(13);
        let src = source(&mut rng);
        let mut worst = 0.0f64;
        let n_solves = 50;
        for _ in 0..n_solves {
            let d = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng);
            let y = src.draw(&mut rng);
            match lasso(&d, &y, p.lambda, 1e-10) {
                Ok(alpha) => worst = worst.max(lasso_kkt_residual(&d, &y, p.lambda, &alpha)),
                Err(_) => worst = f64::INFINITY,
            }
        }
        push(
            report,
            "dict_lasso_kkt",
            worst <= 1e-8,
            1e-8 - worst,
            format!("{n_solves} solves, worst stationarity residual {worst:.3e}"),
        );
    }

    {
        let mut rng = fixed_rng(14);
        let src = source(&mut rng);
        let d0 = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut rng);
        let mut model = DictionaryModel::new(d0.clone(), p.lambda, p.gamma_prox);
        let r_max = cfg.r_max.min(300);
        let mut ball_margin = f64::INFINITY;
        let trace = run_ssum_observed(
            &mut model,
            || src.draw(&mut rng),
            &d0,
            &RunOptions::new(r_max, 1),
            |_, d: &Array2<f64>| {
                for col in d.columns() {
                    ball_margin = ball_margin.min(1.0 - col.dot(&col).sqrt());
                }
            },
        );
        match trace {
            Ok(trace) => {
                let min_gap =
                    trace.rows.iter().map(|r| r.surrogate_gap).fold(f64::INFINITY, f64::min);
                push(
                    report,
                    "dict_gap_nonnegative",
                    min_gap >= -1e-8,
                    min_gap,
                    format!("min averaged-bound gap over {r_max} iterations"),
                );
                match step_norm_bound_check(&trace.rows, 50, 5.0) {
                    Ok(rep) => push(
                        report,
                        "dict_step_law",
                        rep.ok,
                        5.0 * rep.constant - rep.tail_max,
                        format!("C = {:.6e}, tail max r*step = {:.6e}", rep.constant, rep.tail_max),
                    ),
                    Err(e) => push(report, "dict_step_law", false, f64::NEG_INFINITY, format!("{e}")),
                }
                push(
                    report,
                    "dict_unit_ball",
                    ball_margin >= -1e-12,
                    ball_margin,
                    "smallest slack of any column norm against 1".to_string(),
                );
            }
            Err(e) => push(
                report,
                "dict_gap_nonnegative",
                false,
                f64::NEG_INFINITY,
                format!("run failed: {e}"),
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient-variant checks
// ---------------------------------------------------------------------------

fn random_psd_problem(dim: usize, rng: &mut ChaCha8Rng) -> QuadraticProblem {
    let mut a = Array2::<f64>::zeros((dim, dim));
    for v in a.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let q = a.t().dot(&a).mapv(|v| v / dim as f64) + Array2::<f64>::eye(dim) * 0.5;
    QuadraticProblem::new(q)
}

fn randn_vec(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn sg_checks(cfg: &ExperimentConfig, p: &super::config::SgDemoParams, report: &mut PropertyReport) {
    let _ = cfg;

    // The engine route and the closed-form recursion must coincide.
    {
        let mut rng = fixed_rng(21);
        let problem = random_psd_problem(p.dim, &mut rng);
        let x0 = randn_vec(p.dim, &mut rng);
        let shifts: Vec<Array1<f64>> = (0..300).map(|_| randn_vec(p.dim, &mut rng)).collect();
        let mut model = ssum_sg_model(problem.clone());
        let mut it = shifts.iter();
        let engine = crate::engine::run_ssum(&mut model, || it.next().unwrap().clone(), &x0, 300, 0)
            .expect("smooth run");
        let mut it2 = shifts.iter();
        let manual = projected_ssum_sg(&problem, |x| x.clone(), &x0, 300, 0, || {
            it2.next().unwrap().clone()
        });
        let diff = engine
            .final_point
            .iter()
            .zip(manual.final_point.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        push(
            report,
            "sg_recursion_equivalence",
            diff <= 1e-10,
            1e-10 - diff,
            format!("max coordinate difference {diff:.3e} after 300 iterations"),
        );
    }

    // Isotropic scalar case: iterates equal the running sample mean.
    {
        use std::cell::Cell;
        let mut rng = fixed_rng(22);
        let problem = QuadraticProblem::isotropic(1);
        let x0 = Array1::from_elem(1, 0.0);
        let shifts: Vec<Array1<f64>> = (0..300).map(|_| randn_vec(1, &mut rng)).collect();
        let mut it = shifts.iter().enumerate();
        let mut worst = 0.0f64;
        let running = Cell::new(0.0f64);
        let seen = Cell::new(0usize);
        let mut model = ssum_sg_model(problem);
        let trace = run_ssum_observed(
            &mut model,
            || {
                let (i, s) = it.next().unwrap();
                running.set((running.get() * i as f64 + s[0]) / (i as f64 + 1.0));
                seen.set(i + 1);
                s.clone()
            },
            &x0,
            &RunOptions::new(300, 0),
            |r, x: &Array1<f64>| {
                if r >= 1 {
                    worst = worst.max((x[0] - running.get()).abs());
                }
            },
        );
        let ok = trace.is_ok() && seen.get() == 300 && worst <= 1e-12;
        push(
            report,
            "sg_running_mean",
            ok,
            1e-12 - worst,
            format!("max |iterate - running mean| = {worst:.3e} over 300 iterations"),
        );
    }

    // Constant-sample l1 fixed point is the soft threshold of the sample.
    {
        let mut rng = fixed_rng(23);
        let problem = QuadraticProblem::isotropic(p.dim);
        let xi = randn_vec(p.dim, &mut rng);
        let weight = if p.l1_weight > 0.0 { p.l1_weight } else { 0.3 };
        let run = crate::sg::l1_ssum_sg(&problem, weight, &randn_vec(p.dim, &mut rng), 400, 0, || {
            xi.clone()
        });
        let expect = shrink(&xi, weight);
        let diff = run
            .final_point
            .iter()
            .zip(expect.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        push(
            report,
            "sg_l1_fixed_point",
            diff <= 1e-8,
            1e-8 - diff,
            format!("max deviation from soft threshold {diff:.3e}"),
        );
    }

    // The tightness detector must flag an undersized curvature constant.
    {
        let mut rng = fixed_rng(24);
        let honest = random_psd_problem(p.dim, &mut rng);
        let broken = honest.clone().with_lipschitz(honest.lipschitz() / 4.0);
        let model: SgSurrogateModel<QuadraticProblem> = ssum_sg_model(broken);
        let mut violations = 0usize;
        let n_triples = 30;
        for _ in 0..n_triples {
            let x = randn_vec(p.dim, &mut rng);
            let y = randn_vec(p.dim, &mut rng);
            let xi = randn_vec(p.dim, &mut rng);
            if !check_tightness(&model, &x, &y, &xi, 1e-7).a2_ok {
                violations += 1;
            }
        }
        push(
            report,
            "sg_negative_control",
            violations > 0,
            violations as f64,
            format!("quartered curvature: {violations}/{n_triples} domination violations detected"),
        );
    }
}

// ---------------------------------------------------------------------------
