//! Network description, cell geometry, and the partial-CSI channel model.
//!
//! Base stations sit on a hexagonal grid (with torus wrap-around when the
//! cell count admits one) and each serves users dropped uniformly in a disk.
//! Per-link variances follow a distance power law normalized so the median
//! direct link hits a configured full-power SNR. A user holds an estimate of
//! its direct link plus any interfering link whose average power is within a
//! threshold of the direct one; estimated links draw around the stored
//! estimate with reduced variance, the rest are zero-mean complex Gaussian.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hermitian::{sample_cn, CMatrix};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One receiver: antenna count, stream count, noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct UserConfig {
    pub rx_antennas: usize,
    pub streams: usize,
    /// Noise power (linear).
    pub noise_power: f64,
}

/// One transmitter and the users it serves.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub tx_antennas: usize,
    /// Per-cell transmit power budget (linear).
    pub power_budget: f64,
    pub users: Vec<UserConfig>,
}

/// Channel-knowledge parameters: system SNR, the estimate-selection
/// threshold, and the estimation-quality coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiConfig {
    pub snr_db: f64,
    /// A link is estimated when its average power is within `eta_db` of the
    /// user's direct link.
    pub eta_db: f64,
    /// Scales the effective SNR in the estimation-error variance
    /// sigma_l^2 / (1 + gamma * SNR). Dimensionless.
    pub gamma_csi: f64,
}

/// Deterministic stand-in for links whose generative mean is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanChannelMode {
    /// Replace unestimated links by a constant matrix whose entries equal the
    /// per-entry standard deviation, preserving the average link energy.
    PathLossMagnitude,
    /// Use the literal distribution mean: zero for unestimated links.
    StrictMean,
}

/// Geometry and path-loss parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutConfig {
    /// Cell radius; base-station spacing is sqrt(3) times this value.
    pub cell_radius: f64,
    /// Users drop uniformly in a disk of `drop_fraction * cell_radius`
    /// around their base station. Values below one keep users away from
    /// cell edges, weakening cross-cell coupling.
    pub drop_fraction: f64,
    /// Close-in reference distance; path loss saturates below it.
    pub reference_distance: f64,
    pub pathloss_exponent: f64,
    pub mean_mode: MeanChannelMode,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            cell_radius: 1.0,
            drop_fraction: 1.0,
            reference_distance: 0.05,
            pathloss_exponent: 3.76,
            mean_mode: MeanChannelMode::PathLossMagnitude,
        }
    }
}

/// Full network description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub cells: Vec<CellConfig>,
    /// Proximal weight of the beamforming bound.
    pub rho: f64,
    pub csi: CsiConfig,
    pub layout: LayoutConfig,
}

impl NetworkConfig {
    /// Homogeneous network: `k` cells, `users_per_cell` users each, identical
    /// antennas/power/noise. The proximal weight defaults to
    /// 0.01 * power / tx_antennas.
    pub fn symmetric(
        k: usize,
        users_per_cell: usize,
        tx_antennas: usize,
        rx_antennas: usize,
        streams: usize,
        power_budget: f64,
        noise_power: f64,
    ) -> Self {
        let user = UserConfig { rx_antennas, streams, noise_power };
        let cell = CellConfig {
            tx_antennas,
            power_budget,
            users: vec![user; users_per_cell],
        };
        Self {
            cells: vec![cell; k],
            rho: 0.01 * power_budget / tx_antennas as f64,
            csi: CsiConfig { snr_db: 15.0, eta_db: 6.0, gamma_csi: 1.0 },
            layout: LayoutConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("network has no cells".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho {} must be positive", self.rho)));
        }
        if !(self.layout.drop_fraction > 0.0 && self.layout.drop_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "drop fraction {} outside (0, 1]",
                self.layout.drop_fraction
            )));
        }
        for (k, cell) in self.cells.iter().enumerate() {
            if !(cell.power_budget > 0.0) {
                return Err(Error::Config(format!("cell {k}: power budget must be positive")));
            }
            if cell.tx_antennas == 0 {
                return Err(Error::Config(format!("cell {k}: zero transmit antennas")));
            }
            if cell.users.is_empty() {
                return Err(Error::Config(format!("cell {k}: no users")));
            }
            for (i, user) in cell.users.iter().enumerate() {
                if user.streams == 0 || user.streams > cell.tx_antennas.min(user.rx_antennas) {
                    return Err(Error::Config(format!(
                        "cell {k} user {i}: streams {} outside 1..=min(tx={}, rx={})",
                        user.streams, cell.tx_antennas, user.rx_antennas
                    )));
                }
                if !(user.noise_power > 0.0) {
                    return Err(Error::Config(format!("cell {k} user {i}: noise must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_users(&self) -> usize {
        self.cells.iter().map(|c| c.users.len()).sum()
    }

    /// Serving cell of flat user index `u` (users ordered cell-major).
    pub fn user_cell(&self, u: usize) -> usize {
        let mut rest = u;
        for (k, cell) in self.cells.iter().enumerate() {
            if rest < cell.users.len() {
                return k;
            }
            rest -= cell.users.len();
        }
        panic!("user index {u} out of range");
    }

    pub fn user(&self, u: usize) -> &UserConfig {
        let mut rest = u;
        for cell in &self.cells {
            if rest < cell.users.len() {
                return &cell.users[rest];
            }
            rest -= cell.users.len();
        }
        panic!("user index {u} out of range");
    }

    /// Flat user indices served by cell `k`.
    pub fn cell_users(&self, k: usize) -> std::ops::Range<usize> {
        let start: usize = self.cells[..k].iter().map(|c| c.users.len()).sum();
        start..start + self.cells[k].users.len()
    }

    pub fn snr_linear(&self) -> f64 {
        crate::util::db_to_linear(self.csi.snr_db)
    }
}

// ---------------------------------------------------------------------------
// Hexagonal geometry
// ---------------------------------------------------------------------------

fn axial_to_xy(q: i64, r: i64, spacing: f64) -> (f64, f64) {
    (spacing * (q as f64 + 0.5 * r as f64), spacing * (3.0f64.sqrt() / 2.0) * r as f64)
}

/// First `k` cells of a hexagonal spiral (center, then concentric rings),
/// with the given distance between adjacent centers.
pub fn hex_positions(k: usize, spacing: f64) -> Vec<(f64, f64)> {
    let mut axial: Vec<(i64, i64)> = vec![(0, 0)];
    let dirs = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut ring: i64 = 1;
    while axial.len() < k {
        let (mut q, mut r) = (-ring, ring);
        for d in dirs {
            for _ in 0..ring {
                if (axial.len() as i64) < k as i64 {
                    axial.push((q, r));
                }
                q += d.0;
                r += d.1;
            }
        }
        ring += 1;
    }
    axial.into_iter().map(|(q, r)| axial_to_xy(q, r, spacing)).collect()
}

/// Torus translation vectors for a k-cell hexagonal layout, available when
/// a^2 + ab + b^2 = k has an integer solution (e.g. k = 7 with (2, 1)).
/// Distances then fold through the nearest of the nine translated copies.
pub fn wraparound_offsets(k: usize, spacing: f64) -> Vec<(f64, f64)> {
    let mut base: Option<(i64, i64)> = None;
    'search: for a in 0..=(k as i64) {
        for b in 0..=(k as i64) {
            if a * a + a * b + b * b == k as i64 && (a, b) != (0, 0) {
                base = Some((a, b));
                break 'search;
            }
        }
    }
    let Some((a, b)) = base else {
        return vec![(0.0, 0.0)];
    };
    let t1 = axial_to_xy(a, b, spacing);
    // 60-degree rotation of (a, b) in axial coordinates.
    let t2 = axial_to_xy(-b, a + b, spacing);
    let mut offsets = Vec::with_capacity(9);
    for i in -1..=1i64 {
        for j in -1..=1i64 {
            offsets.push((i as f64 * t1.0 + j as f64 * t2.0, i as f64 * t1.1 + j as f64 * t2.1));
        }
    }
    offsets
}

fn wrapped_distance(p: (f64, f64), q: (f64, f64), offsets: &[(f64, f64)]) -> f64 {
    offsets
        .iter()
        .map(|o| {
            let dx = p.0 - q.0 + o.0;
            let dy = p.1 - q.1 + o.1;
            (dx * dx + dy * dy).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Channel realizations and the generative model
// ---------------------------------------------------------------------------

/// One draw of every link matrix, indexed by (flat user, cell).
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    mats: Vec<CMatrix>,
    n_cells: usize,
}

impl ChannelRealization {
    pub fn new(mats: Vec<CMatrix>, n_cells: usize) -> Self {
        assert_eq!(mats.len() % n_cells, 0, "links must cover all user-cell pairs");
        Self { mats, n_cells }
    }

    pub fn link(&self, user: usize, cell: usize) -> &CMatrix {
        &self.mats[user * self.n_cells + cell]
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_users(&self) -> usize {
        self.mats.len() / self.n_cells
    }
}

/// Per-link second-order statistics plus the stored estimate, if any.
#[derive(Debug, Clone)]
pub struct LinkStat {
    pub rows: usize,
    pub cols: usize,
    /// Per-entry variance sigma_l^2 (the normalized path loss).
    pub variance: f64,
    /// Present iff the link is estimated.
    pub estimate: Option<CMatrix>,
}

/// A sampled network instance: geometry, normalized path losses, and the
/// estimated-link set with its estimates. Sampling from it is deterministic
/// given the RNG state.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    n_cells: usize,
    links: Vec<LinkStat>,
    /// 1 / (1 + gamma * SNR): conditional variance factor of estimated links.
    cond_var_factor: f64,
    pub bs_positions: Vec<(f64, f64)>,
    pub user_positions: Vec<(f64, f64)>,
}

impl ChannelModel {
    /// Drop users, compute wrap-around distances and normalized path losses,
    /// pick the estimated-link set, and draw the channel estimates.
    pub fn generate(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.num_cells();
        let n_users = cfg.num_users();
        let spacing = 3.0f64.sqrt() * cfg.layout.cell_radius;
        let bs = hex_positions(k, spacing);
        let offsets = wraparound_offsets(k, spacing);

        let mut user_pos = Vec::with_capacity(n_users);
        for (cell_idx, cell) in cfg.cells.iter().enumerate() {
            for _ in 0..cell.users.len() {
                let drop_radius = cfg.layout.cell_radius * cfg.layout.drop_fraction;
                let radius = drop_radius * rng.random::<f64>().sqrt();
                let angle = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                user_pos.push((
                    bs[cell_idx].0 + radius * angle.cos(),
                    bs[cell_idx].1 + radius * angle.sin(),
                ));
            }
        }

        // Raw distance power law, saturated at the reference distance.
        let d0 = cfg.layout.reference_distance;
        let exponent = cfg.layout.pathloss_exponent;
        let mut raw = vec![0.0f64; n_users * k];
        for u in 0..n_users {
            for j in 0..k {
                let dist = wrapped_distance(user_pos[u], bs[j], &offsets).max(d0);
                raw[u * k + j] = (dist / d0).powf(-exponent);
            }
        }

        // Normalize so the median full-power direct-link SNR matches config.
        let mut direct_snrs: Vec<f64> = (0..n_users)
            .map(|u| {
                let cell = cfg.user_cell(u);
                cfg.cells[cell].power_budget * raw[u * k + cell] / cfg.user(u).noise_power
            })
            .collect();
        direct_snrs.sort_by(|a, b| a.partial_cmp(b).expect("finite SNRs"));
        let median = if n_users % 2 == 1 {
            direct_snrs[n_users / 2]
        } else {
            0.5 * (direct_snrs[n_users / 2 - 1] + direct_snrs[n_users / 2])
        };
        let scale = cfg.snr_linear() / median;

        let snr = cfg.snr_linear();
        let cond_var_factor = 1.0 / (1.0 + cfg.csi.gamma_csi * snr);
        let est_ratio = crate::util::db_to_linear(-cfg.csi.eta_db);

        let mut links = Vec::with_capacity(n_users * k);
        for u in 0..n_users {
            let serving = cfg.user_cell(u);
            let direct_var = raw[u * k + serving] * scale;
            for j in 0..k {
                let variance = raw[u * k + j] * scale;
                let estimated = j == serving || variance >= direct_var * est_ratio;
                let rows = cfg.user(u).rx_antennas;
                let cols = cfg.cells[j].tx_antennas;
                let estimate = if estimated {
                    // Estimate marginal: variance minus the conditional part.
                    let est_var = variance * (1.0 - cond_var_factor);
                    let mut m = CMatrix::zeros((rows, cols));
                    for a in 0..rows {
                        for b in 0..cols {
                            m[[a, b]] = sample_cn(Complex64::new(0.0, 0.0), est_var, rng);
                        }
                    }
                    Some(m)
                } else {
                    None
                };
                links.push(LinkStat { rows, cols, variance, estimate });
            }
        }

        Ok(Self { n_cells: k, links, cond_var_factor, bs_positions: bs, user_positions: user_pos })
    }

    pub fn link_stat(&self, user: usize, cell: usize) -> &LinkStat {
        &self.links[user * self.n_cells + cell]
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_users(&self) -> usize {
        self.links.len() / self.n_cells
    }

    /// Fraction of links carrying an estimate.
    pub fn estimated_fraction(&self) -> f64 {
        let est = self.links.iter().filter(|l| l.estimate.is_some()).count();
        est as f64 / self.links.len() as f64
    }

    /// One realization of all links: estimated links draw around their
    /// estimates with the conditional variance, the rest are zero-mean.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ChannelRealization {
        let mats = self
            .links
            .iter()
            .map(|l| {
                let mut m = CMatrix::zeros((l.rows, l.cols));
                match &l.estimate {
                    Some(hhat) => {
                        let var = l.variance * self.cond_var_factor;
                        for a in 0..l.rows {
                            for b in 0..l.cols {
                                m[[a, b]] = sample_cn(hhat[[a, b]], var, rng);
                            }
                        }
                    }
                    None => {
                        for a in 0..l.rows {
                            for b in 0..l.cols {
                                m[[a, b]] = sample_cn(Complex64::new(0.0, 0.0), l.variance, rng);
                            }
                        }
                    }
                }
                m
            })
            .collect();
        ChannelRealization::new(mats, self.n_cells)
    }

    /// Deterministic per-link representative: the stored estimate where one
    /// exists, otherwise the mode-dependent stand-in.
    pub fn mean_channels(&self, mode: MeanChannelMode) -> ChannelRealization {
        let mats = self
            .links
            .iter()
            .map(|l| match (&l.estimate, mode) {
                (Some(hhat), _) => hhat.clone(),
                (None, MeanChannelMode::StrictMean) => CMatrix::zeros((l.rows, l.cols)),
                (None, MeanChannelMode::PathLossMagnitude) => {
                    CMatrix::from_elem((l.rows, l.cols), Complex64::new(l.variance.sqrt(), 0.0))
                }
            })
            .collect();
        ChannelRealization::new(mats, self.n_cells)
    }
}

// ---------------------------------------------------------------------------
