//! Federated intrusion-detection transferability simulator.
//!
//! Per-node detectors are trained on a single attack class each, aggregated
//! with FedAvg, and then tested against every other attack class. The crate
//! covers the full path from flow-record CSVs to transferability reports:
//!
//! - [`dataset`]: CSV ingestion, cleaning, stratified splits, per-node
//!   partitions and a synthetic generator.
//! - [`preprocess`]: normalization, temporal averaging and bootstrap
//!   balancing, composed into per-approach pipelines.
//! - [`neuralnet`]: a fixed 1D-CNN with exact backpropagation and Adam.
//! - [`federation`]: local updates, FedAvg and the round loop.
//! - [`evaluation`]: attack accuracy, transferability matrices and pairs.
//! - [`experiment`]: config handling and the five-approach runner.

pub mod dataset;
pub mod evaluation;
pub mod experiment;
pub mod federation;
pub mod neuralnet;
pub mod preprocess;
pub mod seed;

mod error;

pub use error::{Error, Result};
