//! Closed-loop laboratory for RAN analytics exposure and adaptive jamming.
//!
//! A discrete-time simulated downlink feeds per-second analytics through a
//! shared data layer into a subscription/notification exposure service. A
//! compromised consumer relays everything it receives to a jamming
//! controller, whose per-tick verdicts feed back into the link model. The
//! `eval` module wires the loop in-process or over localhost sockets and
//! reports session metrics.

pub mod config;
pub mod eval;
pub mod jammer;
pub mod profiler;
pub mod ran_sim;
pub mod sdl_store;
pub mod y1;

pub use eval::{
    budget_sweep, profile_phase, run_experiment, Evaluator, ExperimentConfig, MetricsReport, Mode,
    RunArtifacts, ScenarioChoice, SweepStrategyKind,
};
pub use jammer::{Budget, BudgetState, JamDecision, JammerCore, Strategy, Verdict};
pub use profiler::{ClusterModel, FeatureVector, SemanticLabel, Standardizer};
pub use ran_sim::{AnalyticsSample, LinkModelParams, LinkSimulator, TrafficScenario};
pub use sdl_store::{CellKey, SdlStore};
