//! Experiment configuration, orchestration of the five approaches, and
//! report artifacts.

mod config;
mod report;
mod runner;

pub use config::{
    read_synthetic_spec, validate_config, Approach, DataSource, EvalTarget, ExperimentConfig, FederationSettings,
    ModelConfig,
};
pub use report::{rerender, ApproachReport, RunReport};
pub use runner::{
    fitted_pipeline, prepare_data, run_all, run_approach, run_centralized, run_federated, CentralOutcome,
    FederatedOutcome, PreparedData, INCOMPLETE_MARKER,
};
