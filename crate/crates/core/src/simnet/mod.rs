//! Two-node simulation: the channel, aggregation, and the experiment runner.

pub mod aggregate;
pub mod channel;
pub mod config;
pub mod runner;

pub use aggregate::{aggregate, sample_weights};
pub use channel::{Channel, Direction, Message, MessageKind};
pub use config::{DataConfig, ExperimentConfig, FinetuneSide, Method, ModelConfig, PhaseSet};
pub use runner::{
    run_ablation, run_baseline, run_dc_ccl, run_experiment, run_feasibility, FeasibilityReport, MetricsRecord,
    RoundTrace, RunOutput, TrainedModel, Workbench,
};
