//! Per-approach preprocessing: normalization, temporal averaging and
//! bootstrap balancing.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::{seed, Error, Result};

mod bootstrap;
mod normalize;
mod temporal;

pub use bootstrap::{bootstrap_balance, target_attack_count};
pub use normalize::{apply_normalizer, fit_normalizer, NormMode, Normalizer};
pub use temporal::{temporal_average, StreamMode, TemporalAverager};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub use_bootstrap: bool,
    pub use_temporal_avg: bool,
    pub window: usize,
    pub stream_mode: StreamMode,
    /// Attack fraction after bootstrapping.
    pub bootstrap_target: f64,
    pub normalization: NormMode,
    pub clamp: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            use_bootstrap: false,
            use_temporal_avg: false,
            window: 3,
            stream_mode: StreamMode::PerLabel,
            bootstrap_target: 0.5,
            normalization: NormMode::MinMax,
            clamp: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bootstrap_target > 0.0 && self.bootstrap_target < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "bootstrap_target {} must lie in (0, 1)",
                self.bootstrap_target
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidSpec("window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Stage {
    Normalize { mode: NormMode, clamp: bool },
    TemporalAverage(TemporalAverager),
    Bootstrap { target: f64 },
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Normalize { .. } => "normalize",
            Stage::TemporalAverage(_) => "temporal_average",
            Stage::Bootstrap { .. } => "bootstrap",
        }
    }

    fn train_only(&self) -> bool {
        matches!(self, Stage::Bootstrap { .. })
    }
}

/// Ordered stage list: normalize, then temporal averaging, then bootstrap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub stages: Vec<Stage>,
    pub seed: u64,
}

pub fn build_pipeline(cfg: &PipelineConfig) -> Result<Pipeline> {
    cfg.validate()?;
    let mut stages = vec![Stage::Normalize {
        mode: cfg.normalization,
        clamp: cfg.clamp,
    }];
    if cfg.use_temporal_avg {
        stages.push(Stage::TemporalAverage(TemporalAverager {
            window: cfg.window,
            mode: cfg.stream_mode,
        }));
    }
    if cfg.use_bootstrap {
        stages.push(Stage::Bootstrap {
            target: cfg.bootstrap_target,
        });
    }
    Ok(Pipeline { stages, seed: cfg.seed })
}

impl Pipeline {
    pub fn stage_names(&self) -> Vec<&'static str> {
        self.stages.iter().map(Stage::name).collect()
    }

    /// Fits the normalizer on `train` statistics.
    pub fn fit(&self, train: &Dataset) -> Result<FittedPipeline> {
        let normalizer = self
            .stages
            .iter()
            .find_map(|s| match s {
                Stage::Normalize { mode, clamp } => Some((*mode, *clamp)),
                _ => None,
            })
            .map(|(mode, clamp)| {
                fit_normalizer(train, mode).map(|mut n| {
                    n.clamp = clamp;
                    n
                })
            })
            .transpose()?;
        Ok(FittedPipeline {
            pipeline: self.clone(),
            normalizer,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub pipeline: Pipeline,
    pub normalizer: Option<Normalizer>,
}

impl FittedPipeline {
    /// Runs every stage. `salt` keys the bootstrap stream, so different
    /// nodes resample independently under one pipeline seed.
    pub fn transform_train(&self, ds: &Dataset, salt: u64) -> Result<Dataset> {
        self.run(ds, Some(seed::derive(self.pipeline.seed, &[salt])))
    }

    /// Runs the inference-side stages only (no bootstrapping).
    pub fn transform_eval(&self, ds: &Dataset) -> Result<Dataset> {
        self.run(ds, None)
    }

    fn run(&self, ds: &Dataset, bootstrap_seed: Option<u64>) -> Result<Dataset> {
        let mut current = ds.clone();
        for stage in &self.pipeline.stages {
            if stage.train_only() && bootstrap_seed.is_none() {
                continue;
            }
            current = match stage {
                Stage::Normalize { .. } => {
                    let n = self
                        .normalizer
                        .as_ref()
                        .ok_or_else(|| Error::Missing("pipeline was not fitted".into()))?;
                    apply_normalizer(n, &current)?
                }
                Stage::TemporalAverage(avg) => temporal_average(&current, avg)?,
                Stage::Bootstrap { target } => {
                    bootstrap_balance(&current, *target, bootstrap_seed.expect("checked above"))?
                }
            };
        }
        Ok(current)
    }
}
