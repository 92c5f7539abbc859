//! Batch experiment harness: strict configuration parsing, seeded method
//! comparison runs with shared Monte-Carlo evaluation, CSV/manifest output,
//! and an invariant property suite.

pub mod config;
pub mod emit;
pub mod props;
pub mod runner;

pub use config::{
    DictParams, ExperimentConfig, Method, Scenario, ScenarioParams, SgDemoParams, WmmseParams,
};
pub use emit::emit_plot_data;
pub use props::{property_suite, PropertyCheck, PropertyReport};
pub use runner::{run_experiment, ResultRow, ResultTable};
