//! Drives the configured methods, scores scheduled iterates on a shared
//! Monte-Carlo evaluation set, and collects the rows of `results.csv`.

use std::time::Instant;

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use crate::dictlearn::{
    lasso, lasso_objective, random_unit_dictionary, DictionaryModel, SignalSource,
    DEFAULT_LASSO_TOL,
};
use crate::engine::{run_ssum_observed, RunOptions};
use crate::error::Result;
use crate::rng::{streams, RngStream};
use crate::sg::{sg_run_observed, ssum_sg_model, QuadraticProblem, SmoothObjective};
use crate::util::{self, fmt_g17};
use crate::wmmse::{
    alternating_step, estimate_g1_lipschitz, random_feasible_precoders, score_on_draws,
    wmmse_sg_run_observed, ChannelModel, ChannelRealization, Precoders, WmmseModel,
};

use super::config::{
    DictParams, ExperimentConfig, Method, ScenarioParams, SgDemoParams, WmmseParams,
};

// ---------------------------------------------------------------------------
// Result table
// ---------------------------------------------------------------------------

/// One scored point of one method's trajectory.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub method: Method,
    pub iteration: usize,
    /// Ergodic sum rate (beamforming, higher is better) or expected loss
    /// (dictionary / gradient demos, lower is better).
    pub value: f64,
    pub stderr: f64,
    /// Seconds since the method started, measured when the row was scored.
    /// Kept out of the CSV so reruns are byte-identical.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Methods in first-appearance order.
    pub fn methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for row in &self.rows {
            if !out.contains(&row.method) {
                out.push(row.method);
            }
        }
        out
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Value at the largest scored iteration of a method.
    pub fn final_value(&self, method: Method) -> Option<f64> {
        self.rows_for(method).max_by_key(|r| r.iteration).map(|r| r.value)
    }

    /// The `results.csv` payload: deterministic fields only, full precision.
    pub fn results_csv_string(&self) -> String {
        let mut s = String::from("method,iteration,value,stderr\n");
        for row in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                row.method.name(),
                row.iteration,
                fmt_g17(row.value),
                fmt_g17(row.stderr)
            ));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

/// Run every configured method and score it at the scheduled iterations.
/// All methods share the scenario draw, the initial point, and the
/// evaluation set; each consumes its own RNG stream, so the comparison is
/// unchanged when methods are added or removed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    match &cfg.params {
        ScenarioParams::Wmmse(p) => run_wmmse(cfg, p),
        ScenarioParams::DictLearn(p) => run_dictlearn(cfg, p),
        ScenarioParams::SgDemo(p) => run_sg_demo(cfg, p),
    }
}

fn method_rng(cfg: &ExperimentConfig, method: Method) -> ChaCha8Rng {
    RngStream { seed: cfg.seed, stream: streams::METHOD_BASE + method.stream_id() }.rng()
}

/// Collect `(iteration, point)` snapshots at the scheduled iterations.
struct Snapshots<P> {
    schedule: Vec<usize>,
    taken: Vec<(usize, P)>,
}

impl<P: Clone> Snapshots<P> {
    fn new(schedule: Vec<usize>) -> Self {
        Self { schedule, taken: Vec::new() }
    }

    fn observe(&mut self, r: usize, x: &P) {
        if self.schedule.binary_search(&r).is_ok() {
            self.taken.push((r, x.clone()));
        }
    }
}

fn run_wmmse(cfg: &ExperimentConfig, p: &WmmseParams) -> Result<ResultTable> {
    let net = p.network_config();
    let mut scenario_rng = RngStream { seed: cfg.seed, stream: streams::SCENARIO }.rng();
    let channels = ChannelModel::generate(&net, &mut scenario_rng)?;
    let mut eval_rng = RngStream { seed: cfg.seed, stream: streams::EVAL }.rng();
    let draws: Vec<ChannelRealization> =
        (0..cfg.n_mc).map(|_| channels.sample(&mut eval_rng)).collect();
    let mut init_rng = RngStream { seed: cfg.seed, stream: streams::INIT }.rng();
    let v0 = random_feasible_precoders(&net, &mut init_rng);
    let schedule = cfg.schedule();

    let mut table = ResultTable::default();
    for &method in &cfg.methods {
        let mut mrng = method_rng(cfg, method);
        let mut snaps = Snapshots::new(schedule.clone());
        let start = Instant::now();
        match method {
            Method::StochasticWmmse => {
                let mut model = WmmseModel::new(net.clone())?;
                run_ssum_observed(
                    &mut model,
                    || channels.sample(&mut mrng),
                    &v0,
                    &RunOptions::new(cfg.r_max, 0),
                    |r, x: &Precoders| snaps.observe(r, x),
                )?;
            }
            Method::OneSampleWmmse | Method::MeanWmmse => {
                // Alternating updates on one frozen channel: a single draw or
                // the distribution's mean.
                let ch = if method == Method::OneSampleWmmse {
                    channels.sample(&mut mrng)
                } else {
                    channels.mean_channels(p.mean_mode)
                };
                let mut v = v0.clone();
                snaps.observe(0, &v);
                for r in 1..=cfg.r_max {
                    v = alternating_step(&v, &ch, &net)?;
                    snaps.observe(r, &v);
                }
            }
            Method::Sg => {
                let lipschitz = match p.sg_lipschitz {
                    Some(l) => l,
                    None => estimate_g1_lipschitz(&net, &channels, 32, &mut mrng)?,
                };
                wmmse_sg_run_observed(
                    &net,
                    &channels,
                    &v0,
                    cfg.r_max,
                    0,
                    lipschitz,
                    &mut mrng,
                    |r, x: &Precoders| snaps.observe(r, x),
                )?;
            }
            _ => unreachable!("validated against scenario"),
        }
        for (iteration, v) in &snaps.taken {
            let (value, stderr) = score_on_draws(v, &net, &draws, cfg.threads)?;
            table.rows.push(ResultRow {
                method,
                iteration: *iteration,
                value,
                stderr,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(table)
}

fn run_dictlearn(cfg: &ExperimentConfig, p: &DictParams) -> Result<ResultTable> {
    let mut scenario_rng = RngStream { seed: cfg.seed, stream: streams::SCENARIO }.rng();
    let truth = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut scenario_rng);
    let source = SignalSource::Planted {
        dict: truth,
        sparsity: p.sparsity,
        coeff_std: p.coeff_std,
        noise_std: p.noise_std,
    };
    let mut eval_rng = RngStream { seed: cfg.seed, stream: streams::EVAL }.rng();
    let eval: Vec<Array1<f64>> = (0..cfg.n_mc).map(|_| source.draw(&mut eval_rng)).collect();
    let mut init_rng = RngStream { seed: cfg.seed, stream: streams::INIT }.rng();
    let d0 = random_unit_dictionary(p.signal_dim, p.num_atoms, &mut init_rng);
    let schedule = cfg.schedule();

    let mut table = ResultTable::default();
    for &method in &cfg.methods {
        let mut mrng = method_rng(cfg, method);
        let mut snaps = Snapshots::new(schedule.clone());
        let start = Instant::now();
        match method {
            Method::DictLearn => {
                let mut model = DictionaryModel::new(d0.clone(), p.lambda, p.gamma_prox);
                run_ssum_observed(
                    &mut model,
                    || source.draw(&mut mrng),
                    &d0,
                    &RunOptions::new(cfg.r_max, 0),
                    |r, d: &ndarray::Array2<f64>| snaps.observe(r, d),
                )?;
            }
            _ => unreachable!("validated against scenario"),
        }
        for (iteration, dict) in &snaps.taken {
            let mut losses = Vec::with_capacity(eval.len());
            for y in &eval {
                let alpha = lasso(dict, y, p.lambda, DEFAULT_LASSO_TOL)?;
                losses.push(lasso_objective(dict, y, p.lambda, &alpha));
            }
            table.rows.push(ResultRow {
                method,
                iteration: *iteration,
                value: util::mean(&losses),
                stderr: util::standard_error(&losses),
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(table)
}

/// Random shifted-quadratic family for the gradient demo:
/// g(x, xi) = 1/2 (x - xi)' Q (x - xi), xi = center + std * noise.
fn demo_problem(p: &SgDemoParams, rng: &mut ChaCha8Rng) -> (QuadraticProblem, Array1<f64>) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let n = p.dim;
    let mut a = ndarray::Array2::<f64>::zeros((n, n));
    for v in a.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let q = a.t().dot(&a).mapv(|v| v / n as f64) + ndarray::Array2::<f64>::eye(n) * 0.5;
    let center = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    (QuadraticProblem::new(q), center)
}

fn demo_sample(
    center: &Array1<f64>,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    center.mapv(|c| c + std * rng.sample::<f64, _>(StandardNormal))
}

fn run_sg_demo(cfg: &ExperimentConfig, p: &SgDemoParams) -> Result<ResultTable> {
    let mut scenario_rng = RngStream { seed: cfg.seed, stream: streams::SCENARIO }.rng();
    let (problem, center) = demo_problem(p, &mut scenario_rng);
    let mut eval_rng = RngStream { seed: cfg.seed, stream: streams::EVAL }.rng();
    let eval: Vec<Array1<f64>> =
        (0..cfg.n_mc).map(|_| demo_sample(&center, p.sample_std, &mut eval_rng)).collect();
    let mut init_rng = RngStream { seed: cfg.seed, stream: streams::INIT }.rng();
    let x0 = demo_sample(&center, 4.0 * p.sample_std, &mut init_rng);
    let schedule = cfg.schedule();

    let mut table = ResultTable::default();
    for &method in &cfg.methods {
        let mut mrng = method_rng(cfg, method);
        let mut snaps = Snapshots::new(schedule.clone());
        let start = Instant::now();
        match method {
            Method::SsumSg => {
                let mut model = ssum_sg_model(problem.clone());
                if p.l1_weight > 0.0 {
                    model = model.with_l1(p.l1_weight);
                }
                run_ssum_observed(
                    &mut model,
                    || demo_sample(&center, p.sample_std, &mut mrng),
                    &x0,
                    &RunOptions::new(cfg.r_max, 0),
                    |r, x: &Array1<f64>| snaps.observe(r, x),
                )?;
            }
            Method::PlainSg => {
                sg_run_observed(
                    &problem,
                    &x0,
                    cfg.r_max,
                    0,
                    || demo_sample(&center, p.sample_std, &mut mrng),
                    |r, x| snaps.observe(r, x),
                );
            }
            _ => unreachable!("validated against scenario"),
        }
        for (iteration, x) in &snaps.taken {
            let l1 = p.l1_weight * x.mapv(f64::abs).sum();
            let vals: Vec<f64> = eval.iter().map(|xi| problem.value(x, xi) + l1).collect();
            table.rows.push(ResultRow {
                method,
                iteration: *iteration,
                value: util::mean(&vals),
                stderr: util::standard_error(&vals),
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
