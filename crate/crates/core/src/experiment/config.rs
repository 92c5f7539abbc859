//! Experiment configuration: a strict plain-text key = value schema, the
//! scenario/method vocabulary, and a canonical serialization whose SHA-256
//! identifies the experiment in the output manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::util::fmt_g17;
use crate::wmmse::{MeanChannelMode, NetworkConfig};

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Which problem family the experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Wmmse,
    DictLearn,
    SgDemo,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Wmmse => "wmmse",
            Scenario::DictLearn => "dictlearn",
            Scenario::SgDemo => "sg_demo",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wmmse" => Ok(Scenario::Wmmse),
            "dictlearn" => Ok(Scenario::DictLearn),
            "sg_demo" => Ok(Scenario::SgDemo),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected wmmse, dictlearn, or sg_demo)"
            ))),
        }
    }
}

/// One algorithm entry in the comparison. Each method owns a fixed RNG
/// stream offset so adding or removing methods never changes the draws any
/// other method sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    StochasticWmmse,
    OneSampleWmmse,
    MeanWmmse,
    Sg,
    DictLearn,
    SsumSg,
    PlainSg,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::StochasticWmmse,
        Method::OneSampleWmmse,
        Method::MeanWmmse,
        Method::Sg,
        Method::DictLearn,
        Method::SsumSg,
        Method::PlainSg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::StochasticWmmse => "stochastic_wmmse",
            Method::OneSampleWmmse => "one_sample_wmmse",
            Method::MeanWmmse => "mean_wmmse",
            Method::Sg => "sg",
            Method::DictLearn => "dictlearn",
            Method::SsumSg => "ssum_sg",
            Method::PlainSg => "plain_sg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }

    /// Stable per-method RNG stream offset (added to the method stream base).
    pub fn stream_id(self) -> u64 {
        match self {
            Method::StochasticWmmse => 0,
            Method::OneSampleWmmse => 1,
            Method::MeanWmmse => 2,
            Method::Sg => 3,
            Method::DictLearn => 4,
            Method::SsumSg => 5,
            Method::PlainSg => 6,
        }
    }

    pub fn scenario(self) -> Scenario {
        match self {
            Method::StochasticWmmse | Method::OneSampleWmmse | Method::MeanWmmse | Method::Sg => {
                Scenario::Wmmse
            }
            Method::DictLearn => Scenario::DictLearn,
            Method::SsumSg | Method::PlainSg => Scenario::SgDemo,
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario parameters
// ---------------------------------------------------------------------------

/// Network comparison parameters (beamforming scenario).
#[derive(Debug, Clone)]
pub struct WmmseParams {
    pub cells: usize,
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    pub power_budget: f64,
    pub noise_power: f64,
    pub snr_db: f64,
    pub eta_db: f64,
    pub gamma_csi: f64,
    pub pathloss_exponent: f64,
    /// User-drop disk radius as a fraction of the cell radius.
    pub drop_fraction: f64,
    /// Proximal weight; default 0.01 * power_budget / tx_antennas.
    pub rho: Option<f64>,
    pub mean_mode: MeanChannelMode,
    /// Gradient smoothness constant for the SG competitor; estimated from
    /// probes when absent.
    pub sg_lipschitz: Option<f64>,
}

impl Default for WmmseParams {
    fn default() -> Self {
        Self {
            cells: 7,
            users_per_cell: 1,
            tx_antennas: 2,
            rx_antennas: 2,
            streams: 2,
            power_budget: 1.0,
            noise_power: 1.0,
            snr_db: 15.0,
            eta_db: 6.0,
            gamma_csi: 1.0,
            pathloss_exponent: 3.76,
            drop_fraction: 1.0,
            rho: None,
            mean_mode: MeanChannelMode::PathLossMagnitude,
            sg_lipschitz: None,
        }
    }
}

impl WmmseParams {
    /// Materialize the network description consumed by the channel model and
    /// the algorithms.
    pub fn network_config(&self) -> NetworkConfig {
        let mut cfg = NetworkConfig::symmetric(
            self.cells,
            self.users_per_cell,
            self.tx_antennas,
            self.rx_antennas,
            self.streams,
            self.power_budget,
            self.noise_power,
        );
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        cfg.csi.snr_db = self.snr_db;
        cfg.csi.eta_db = self.eta_db;
        cfg.csi.gamma_csi = self.gamma_csi;
        cfg.layout.pathloss_exponent = self.pathloss_exponent;
        cfg.layout.drop_fraction = self.drop_fraction;
        cfg.layout.mean_mode = self.mean_mode;
        cfg
    }
}

/// Online dictionary learning parameters.
#[derive(Debug, Clone)]
pub struct DictParams {
    pub signal_dim: usize,
    pub num_atoms: usize,
    pub sparsity: usize,
    pub coeff_std: f64,
    pub noise_std: f64,
    pub lambda: f64,
    pub gamma_prox: f64,
}

impl Default for DictParams {
    fn default() -> Self {
        Self {
            signal_dim: 8,
            num_atoms: 10,
            sparsity: 3,
            coeff_std: 1.0,
            noise_std: 0.01,
            lambda: 0.1,
            gamma_prox: 0.01,
        }
    }
}

/// Smooth/l1 stochastic-gradient demo parameters.
#[derive(Debug, Clone)]
pub struct SgDemoParams {
    pub dim: usize,
    pub sample_std: f64,
    pub l1_weight: f64,
}

impl Default for SgDemoParams {
    fn default() -> Self {
        Self { dim: 10, sample_std: 1.0, l1_weight: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub enum ScenarioParams {
    Wmmse(WmmseParams),
    DictLearn(DictParams),
    SgDemo(SgDemoParams),
}

// ---------------------------------------------------------------------------
// The experiment configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub r_max: usize,
    /// Score every `eval_every` iterations (0 disables the periodic schedule).
    pub eval_every: usize,
    /// Explicit evaluation schedule; overrides `eval_every` when present.
    pub eval_at: Option<Vec<usize>>,
    /// Monte-Carlo draws in the shared evaluation set.
    pub n_mc: usize,
    /// Output directory from the config file; the command line may override.
    pub out: Option<PathBuf>,
    pub params: ScenarioParams,
    /// Worker threads for Monte-Carlo scoring. Command-line plumbing, not a
    /// config key: results are worker-count invariant by construction.
    pub threads: usize,
}

impl ExperimentConfig {
    /// Built-in defaults for a scenario (the full method set, desk-scale
    /// sizes).
    pub fn default_for(scenario: Scenario) -> Self {
        let (methods, r_max, eval_every, n_mc, params) = match scenario {
            Scenario::Wmmse => (
                vec![Method::StochasticWmmse, Method::OneSampleWmmse, Method::MeanWmmse, Method::Sg],
                300,
                10,
                200,
                ScenarioParams::Wmmse(WmmseParams::default()),
            ),
            Scenario::DictLearn => (
                vec![Method::DictLearn],
                2000,
                100,
                200,
                ScenarioParams::DictLearn(DictParams::default()),
            ),
            Scenario::SgDemo => (
                vec![Method::SsumSg, Method::PlainSg],
                1000,
                50,
                500,
                ScenarioParams::SgDemo(SgDemoParams::default()),
            ),
        };
        Self {
            scenario,
            methods,
            seed: 0,
            r_max,
            eval_every,
            eval_at: None,
            n_mc,
            out: None,
            params,
            threads: 1,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parse the strict key = value format. `#` starts a comment, blank
    /// lines are skipped, every key must be known, no key may repeat, and
    /// keys belonging to a different scenario are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if pairs.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }

        let scenario = match pairs.remove("scenario") {
            Some(v) => Scenario::parse(&v)?,
            None => return Err(Error::Config("missing required key 'scenario'".into())),
        };
        let mut cfg = Self::default_for(scenario);

        if let Some(v) = pairs.remove("methods") {
            let mut methods = Vec::new();
            for part in v.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let m = Method::parse(part)?;
                if methods.contains(&m) {
                    return Err(Error::Config(format!("method '{part}' listed twice")));
                }
                methods.push(m);
            }
            cfg.methods = methods;
        }
        if let Some(v) = pairs.remove("seed") {
            cfg.seed = parse_num(&v, "seed")?;
        }
        if let Some(v) = pairs.remove("r_max") {
            cfg.r_max = parse_num(&v, "r_max")?;
        }
        if let Some(v) = pairs.remove("eval_every") {
            cfg.eval_every = parse_num(&v, "eval_every")?;
        }
        if let Some(v) = pairs.remove("eval_at") {
            let mut at: Vec<usize> = Vec::new();
            for part in v.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                at.push(parse_num(part, "eval_at")?);
            }
            at.sort_unstable();
            at.dedup();
            cfg.eval_at = Some(at);
        }
        if let Some(v) = pairs.remove("n_mc") {
            cfg.n_mc = parse_num(&v, "n_mc")?;
        }
        if let Some(v) = pairs.remove("out") {
            cfg.out = Some(PathBuf::from(v));
        }

        match &mut cfg.params {
            ScenarioParams::Wmmse(p) => {
                if let Some(v) = pairs.remove("cells") {
                    p.cells = parse_num(&v, "cells")?;
                }
                if let Some(v) = pairs.remove("users_per_cell") {
                    p.users_per_cell = parse_num(&v, "users_per_cell")?;
                }
                if let Some(v) = pairs.remove("tx_antennas") {
                    p.tx_antennas = parse_num(&v, "tx_antennas")?;
                }
                if let Some(v) = pairs.remove("rx_antennas") {
                    p.rx_antennas = parse_num(&v, "rx_antennas")?;
                }
                if let Some(v) = pairs.remove("streams") {
                    p.streams = parse_num(&v, "streams")?;
                }
                if let Some(v) = pairs.remove("power_budget") {
                    p.power_budget = parse_num(&v, "power_budget")?;
                }
                if let Some(v) = pairs.remove("noise_power") {
                    p.noise_power = parse_num(&v, "noise_power")?;
                }
                if let Some(v) = pairs.remove("snr_db") {
                    p.snr_db = parse_num(&v, "snr_db")?;
                }
                if let Some(v) = pairs.remove("eta_db") {
                    p.eta_db = parse_num(&v, "eta_db")?;
                }
                if let Some(v) = pairs.remove("gamma_csi") {
                    p.gamma_csi = parse_num(&v, "gamma_csi")?;
                }
                if let Some(v) = pairs.remove("pathloss_exponent") {
                    p.pathloss_exponent = parse_num(&v, "pathloss_exponent")?;
                }
                if let Some(v) = pairs.remove("drop_fraction") {
                    p.drop_fraction = parse_num(&v, "drop_fraction")?;
                }
                if let Some(v) = pairs.remove("rho") {
                    p.rho = Some(parse_num(&v, "rho")?);
                }
                if let Some(v) = pairs.remove("mean_mode") {
                    p.mean_mode = match v.as_str() {
                        "pathloss" => MeanChannelMode::PathLossMagnitude,
                        "strict" => MeanChannelMode::StrictMean,
                        other => {
                            return Err(Error::Config(format!(
                                "mean_mode '{other}' (expected pathloss or strict)"
                            )))
                        }
                    };
                }
                if let Some(v) = pairs.remove("sg_lipschitz") {
                    p.sg_lipschitz = Some(parse_num(&v, "sg_lipschitz")?);
                }
            }
            ScenarioParams::DictLearn(p) => {
                if let Some(v) = pairs.remove("signal_dim") {
                    p.signal_dim = parse_num(&v, "signal_dim")?;
                }
                if let Some(v) = pairs.remove("num_atoms") {
                    p.num_atoms = parse_num(&v, "num_atoms")?;
                }
                if let Some(v) = pairs.remove("sparsity") {
                    p.sparsity = parse_num(&v, "sparsity")?;
                }
                if let Some(v) = pairs.remove("coeff_std") {
                    p.coeff_std = parse_num(&v, "coeff_std")?;
                }
                if let Some(v) = pairs.remove("noise_std") {
                    p.noise_std = parse_num(&v, "noise_std")?;
                }
                if let Some(v) = pairs.remove("lambda") {
                    p.lambda = parse_num(&v, "lambda")?;
                }
                if let Some(v) = pairs.remove("gamma_prox") {
                    p.gamma_prox = parse_num(&v, "gamma_prox")?;
                }
            }
            ScenarioParams::SgDemo(p) => {
                if let Some(v) = pairs.remove("dim") {
                    p.dim = parse_num(&v, "dim")?;
                }
                if let Some(v) = pairs.remove("sample_std") {
                    p.sample_std = parse_num(&v, "sample_std")?;
                }
                if let Some(v) = pairs.remove("l1_weight") {
                    p.l1_weight = parse_num(&v, "l1_weight")?;
                }
            }
        }

        if let Some(key) = pairs.keys().next() {
            return Err(Error::Config(format!(
                "unknown key '{key}' for scenario '{}'",
                scenario.name()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        for m in &self.methods {
            if m.scenario() != self.scenario {
                return Err(Error::Config(format!(
                    "method '{}' does not belong to scenario '{}'",
                    m.name(),
                    self.scenario.name()
                )));
            }
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be at least 1".into()));
        }
        if self.r_max == 0 {
            return Err(Error::Config("r_max must be at least 1".into()));
        }
        if let Some(at) = &self.eval_at {
            if let Some(&bad) = at.iter().find(|&&i| i > self.r_max) {
                return Err(Error::Config(format!("eval_at entry {bad} exceeds r_max {}", self.r_max)));
            }
        }
        match &self.params {
            ScenarioParams::Wmmse(p) => {
                p.network_config().validate()?;
                if let Some(l) = p.sg_lipschitz {
                    if !(l > 0.0) {
                        return Err(Error::Config(format!("sg_lipschitz {l} must be positive")));
                    }
                }
            }
            ScenarioParams::DictLearn(p) => {
                if p.signal_dim == 0 || p.num_atoms == 0 {
                    return Err(Error::Config("signal_dim and num_atoms must be positive".into()));
                }
                if p.sparsity == 0 || p.sparsity > p.num_atoms {
                    return Err(Error::Config(format!(
                        "sparsity {} must be in 1..={}",
                        p.sparsity, p.num_atoms
                    )));
                }
                if !(p.coeff_std > 0.0) {
                    return Err(Error::Config("coeff_std must be positive".into()));
                }
                if !(p.noise_std >= 0.0) {
                    return Err(Error::Config("noise_std must be nonnegative".into()));
                }
                if !(p.lambda > 0.0) {
                    return Err(Error::Config("lambda must be positive".into()));
                }
                if !(p.gamma_prox > 0.0) {
                    return Err(Error::Config("gamma_prox must be positive".into()));
                }
            }
            ScenarioParams::SgDemo(p) => {
                if p.dim == 0 {
                    return Err(Error::Config("dim must be positive".into()));
                }
                if !(p.sample_std > 0.0) {
                    return Err(Error::Config("sample_std must be positive".into()));
                }
                if !(p.l1_weight >= 0.0) {
                    return Err(Error::Config("l1_weight must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Iterations at which every method is scored: the explicit list when
    /// given, else {0, eval_every, 2 eval_every, ...} plus r_max, else empty.
    pub fn schedule(&self) -> Vec<usize> {
        if let Some(at) = &self.eval_at {
            return at.clone();
        }
        if self.eval_every == 0 {
            return Vec::new();
        }
        let mut at: Vec<usize> = (0..=self.r_max).step_by(self.eval_every).collect();
        if *at.last().unwrap() != self.r_max {
            at.push(self.r_max);
        }
        at
    }

    /// Canonical serialization: every effective field in a fixed order, with
    /// floats rendered at full precision. Two configs agree on this string
    /// exactly when they describe the same experiment.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("scenario", self.scenario.name().to_string());
        kv(
            "methods",
            self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
        );
        kv("seed", self.seed.to_string());
        kv("r_max", self.r_max.to_string());
        kv("eval_every", self.eval_every.to_string());
        if let Some(at) = &self.eval_at {
            kv(
                "eval_at",
                at.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
            );
        }
        kv("n_mc", self.n_mc.to_string());
        if let Some(out) = &self.out {
            kv("out", out.display().to_string());
        }
        match &self.params {
            ScenarioParams::Wmmse(p) => {
                kv("cells", p.cells.to_string());
                kv("users_per_cell", p.users_per_cell.to_string());
                kv("tx_antennas", p.tx_antennas.to_string());
                kv("rx_antennas", p.rx_antennas.to_string());
                kv("streams", p.streams.to_string());
                kv("power_budget", fmt_g17(p.power_budget));
                kv("noise_power", fmt_g17(p.noise_power));
                kv("snr_db", fmt_g17(p.snr_db));
                kv("eta_db", fmt_g17(p.eta_db));
                kv("gamma_csi", fmt_g17(p.gamma_csi));
                kv("pathloss_exponent", fmt_g17(p.pathloss_exponent));
                kv("drop_fraction", fmt_g17(p.drop_fraction));
                kv("rho", fmt_g17(p.network_config().rho));
                kv(
                    "mean_mode",
                    match p.mean_mode {
                        MeanChannelMode::PathLossMagnitude => "pathloss".to_string(),
                        MeanChannelMode::StrictMean => "strict".to_string(),
                    },
                );
                if let Some(l) = p.sg_lipschitz {
                    kv("sg_lipschitz", fmt_g17(l));
                }
            }
            ScenarioParams::DictLearn(p) => {
                kv("signal_dim", p.signal_dim.to_string());
                kv("num_atoms", p.num_atoms.to_string());
                kv("sparsity", p.sparsity.to_string());
                kv("coeff_std", fmt_g17(p.coeff_std));
                kv("noise_std", fmt_g17(p.noise_std));
                kv("lambda", fmt_g17(p.lambda));
                kv("gamma_prox", fmt_g17(p.gamma_prox));
            }
            ScenarioParams::SgDemo(p) => {
                kv("dim", p.dim.to_string());
                kv("sample_std", fmt_g17(p.sample_std));
                kv("l1_weight", fmt_g17(p.l1_weight));
            }
        }
        s
    }

    /// Lowercase hex SHA-256 of the canonical serialization.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("key '{key}': bad value '{v}'")))
}

// ---------------------------------------------------------------------------
