//! Multicell downlink beamforming under random channel state: network and
//! fading configuration, the weighted-MMSE surrogate with running statistics,
//! and deterministic / stochastic-gradient baselines for comparison.

pub mod algo;
pub mod channel;
pub mod model;
pub mod rate;

pub use algo::{
    alternating_step, deterministic_wmmse, deterministic_wmmse_trace, ergodic_sum_rate,
    estimate_g1_lipschitz, score_on_draws, wmmse_sg_run, wmmse_sg_run_observed,
};
pub use channel::{
    CellConfig, ChannelModel, ChannelRealization, CsiConfig, LayoutConfig, MeanChannelMode,
    NetworkConfig, UserConfig,
};
pub use model::{
    random_feasible_precoders, stochastic_wmmse, BeamformerState, CellSolve, Precoders,
    WmmseModel,
};
pub use rate::{g1, g1_gradient, mmse_receiver, sum_rate_mmse, surrogate_p_update, AuxVars};
