use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, CleaningPolicy, Schema, SplitSpec, SyntheticSpec, BENIGN};
use crate::neuralnet::{ModelArch, TrainConfig};
use crate::preprocess::PipelineConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Central,
    Fed,
    FedBootstrap,
    FedTempav,
    Tabfids,
}

impl Approach {
    pub const ALL: [Approach; 5] = [
        Approach::Central,
        Approach::Fed,
        Approach::FedBootstrap,
        Approach::FedTempav,
        Approach::Tabfids,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Approach::Central => "central",
            Approach::Fed => "fed",
            Approach::FedBootstrap => "fed_bootstrap",
            Approach::FedTempav => "fed_tempav",
            Approach::Tabfids => "tabfids",
        }
    }

    pub fn is_federated(&self) -> bool {
        *self != Approach::Central
    }

    /// Base pipeline with this approach's bootstrap / averaging switches.
    pub fn pipeline(&self, base: &PipelineConfig) -> PipelineConfig {
        let (use_bootstrap, use_temporal_avg) = match self {
            Approach::Central | Approach::Fed => (false, false),
            Approach::FedBootstrap => (true, false),
            Approach::FedTempav => (false, true),
            Approach::Tabfids => (true, true),
        };
        PipelineConfig {
            use_bootstrap,
            use_temporal_avg,
            ..base.clone()
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL.into_iter().find(|a| a.tag() == s.trim()).ok_or_else(|| {
            Error::Config(vec![format!(
                "unknown approach {s:?} (expected one of central, fed, fed_bootstrap, fed_tempav, tabfids)"
            )])
        })
    }
}

/// Which model scores a federated node's row of the matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTarget {
    /// The node's model after its final round of local training.
    #[default]
    Local,
    /// The final aggregated model.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        paths: Vec<PathBuf>,
        /// Schema file; the built-in CIC-IDS 2017 schema when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<PathBuf>,
        #[serde(default)]
        cleaning: CleaningPolicy,
        /// Attack classes to study; all present classes when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attacks: Option<Vec<ClassId>>,
    },
    Synthetic {
        /// Spec file; mutually exclusive with `spec`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec_file: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec: Option<SyntheticSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attacks: Option<Vec<ClassId>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub channels: [usize; 4],
    pub kernel_size: usize,
    pub stride: usize,
    pub dropout: f64,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: [32, 64, 64, 128],
            kernel_size: 3,
            stride: 1,
            dropout: 0.5,
            hidden: 128,
        }
    }
}

impl ModelConfig {
    pub fn arch(&self, input_length: usize) -> ModelArch {
        let mut arch = ModelArch::with_widths(input_length, self.channels, self.hidden);
        for c in &mut arch.conv {
            c.kernel_size = self.kernel_size;
            c.stride = self.stride;
        }
        arch.dropout_rate = self.dropout;
        arch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationSettings {
    pub rounds: usize,
    /// Expected node count; 0 accepts one node per studied attack.
    pub nodes: usize,
    pub parallel: bool,
    pub seed: u64,
}

impl Default for FederationSettings {
    fn default() -> Self {
        Self {
            rounds: 20,
            nodes: 0,
            parallel: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub approaches: Vec<Approach>,
    pub evaluate: EvalTarget,
    pub threshold: f64,
    /// Epochs for each centralized model; rounds x local epochs when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub central_epochs: Option<usize>,
    /// Write a global checkpoint every this many rounds; 0 keeps only the last.
    pub checkpoint_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub federation: FederationSettings,
    /// Shared preprocessing settings; each approach sets its own switches.
    pub pipeline: PipelineConfig,
    /// Full per-approach overrides, keyed by approach tag.
    pub pipelines: BTreeMap<String, PipelineConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            approaches: Approach::ALL.to_vec(),
            evaluate: EvalTarget::Local,
            threshold: crate::evaluation::THRESHOLD,
            central_epochs: None,
            checkpoint_every: 0,
            data: None,
            split: SplitSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            federation: FederationSettings::default(),
            pipeline: PipelineConfig::default(),
            pipelines: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        match &mut self.data {
            Some(DataSource::Csv { paths, schema, .. }) => {
                paths.iter_mut().for_each(fix);
                if let Some(s) = schema {
                    fix(s);
                }
            }
            Some(DataSource::Synthetic { spec_file: Some(s), .. }) => fix(s),
            _ => {}
        }
    }

    pub fn central_epochs(&self) -> usize {
        self.central_epochs
            .unwrap_or(self.federation.rounds * self.train.local_epochs)
    }

    /// Pipeline settings for one approach: the override if given, else the
    /// shared settings with the approach's switches.
    pub fn pipeline_for(&self, approach: Approach) -> PipelineConfig {
        self.pipelines
            .get(approach.tag())
            .cloned()
            .unwrap_or_else(|| approach.pipeline(&self.pipeline))
    }

    pub fn schema(&self) -> Result<Schema> {
        match &self.data {
            Some(DataSource::Csv { schema: Some(path), .. }) => Schema::from_file(path),
            _ => Ok(Schema::cicids2017()),
        }
    }

    /// The synthetic spec, inline or read from its file.
    pub fn synthetic_spec(&self) -> Result<Option<SyntheticSpec>> {
        match &self.data {
            Some(DataSource::Synthetic { spec: Some(s), .. }) => Ok(Some(s.clone())),
            Some(DataSource::Synthetic {
                spec_file: Some(path), ..
            }) => read_synthetic_spec(path).map(Some),
            _ => Ok(None),
        }
    }

    /// Every semantic problem, each prefixed with its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut push = |field: &str, e: &dyn fmt::Display| errs.push(format!("{field}: {e}"));

        if self.approaches.is_empty() {
            push("approaches", &"at least one approach is required");
        }
        let mut seen = BTreeSet::new();
        for a in &self.approaches {
            if !seen.insert(a) {
                push("approaches", &format!("{a} listed twice"));
            }
        }
        if !(0.0..1.0).contains(&self.threshold) {
            push("threshold", &format!("{} must lie in [0, 1)", self.threshold));
        }
        if self.central_epochs == Some(0) {
            push("central_epochs", &"must be at least 1");
        }
        if let Err(e) = self.split.validate() {
            push("split", &e);
        }
        if let Err(e) = self.train.validate() {
            push("train", &e);
        }
        if self.federation.rounds == 0 {
            push("federation.rounds", &"must be at least 1");
        }
        if let Err(e) = self.pipeline.validate() {
            push("pipeline", &e);
        }
        for (tag, p) in &self.pipelines {
            if tag.parse::<Approach>().is_err() {
                push(&format!("pipelines.{tag}"), &"unknown approach");
            }
            if let Err(e) = p.validate() {
                push(&format!("pipelines.{tag}"), &e);
            }
        }
        let m = &self.model;
        if m.channels.contains(&0) || m.hidden == 0 || m.kernel_size == 0 || m.stride == 0 {
            push("model", &"channels, hidden, kernel_size and stride must be positive");
        }
        if !(0.0..1.0).contains(&m.dropout) {
            push("model.dropout", &format!("{} must lie in [0, 1)", m.dropout));
        }

        let mut known_features = None;
        match &self.data {
            None => push("data", &"section is required"),
            Some(DataSource::Csv {
                paths, schema, attacks, ..
            }) => {
                if paths.is_empty() {
                    push("data.paths", &"at least one CSV file is required");
                }
                for p in paths {
                    if !p.is_file() {
                        push("data.paths", &format!("{} does not exist", p.display()));
                    }
                }
                if let Some(s) = schema {
                    if !s.is_file() {
                        push("data.schema", &format!("{} does not exist", s.display()));
                    } else if let Err(e) = Schema::from_file(s) {
                        push("data.schema", &e);
                    }
                }
                check_attacks(attacks, &mut push);
                if let Ok(Schema {
                    feature_columns: Some(cols),
                    ..
                }) = self.schema()
                {
                    known_features = Some(cols.len());
                }
            }
            Some(DataSource::Synthetic {
                spec_file,
                spec,
                attacks,
            }) => {
                match (spec_file, spec) {
                    (Some(_), Some(_)) => push("data", &"give either spec_file or spec, not both"),
                    (None, None) => push("data", &"synthetic source needs spec_file or spec"),
                    (Some(path), None) if !path.is_file() => {
                        push("data.spec_file", &format!("{} does not exist", path.display()))
                    }
                    _ => match self.synthetic_spec() {
                        Ok(Some(s)) => {
                            known_features = Some(s.feature_count);
                            if let Some(list) = attacks {
                                for a in list {
                                    if !s.classes.iter().any(|c| c.label == *a) {
                                        push("data.attacks", &format!("class {a} is not generated"));
                                    }
                                }
                            }
                        }
                        Ok(None) => {}
                        Err(e) => push(if spec.is_some() { "data.spec" } else { "data.spec_file" }, &e),
                    },
                }
                check_attacks(attacks, &mut push);
            }
        }
        if let Some(f) = known_features {
            if let Err(e) = self.model.arch(f).validate() {
                push("model", &e);
            }
        }
        errs
    }

    /// TOML rendering with every default made explicit.
    pub fn snapshot(&self) -> Result<String> {
        let mut full = self.clone();
        full.central_epochs = Some(self.central_epochs());
        for &a in &self.approaches {
            full.pipelines.insert(a.tag().to_string(), self.pipeline_for(a));
        }
        if let Some(DataSource::Synthetic {
            spec_file,
            spec,
            attacks,
        }) = &self.data
        {
            if spec_file.is_some() {
                full.data = Some(DataSource::Synthetic {
                    spec_file: None,
                    spec: self.synthetic_spec()?,
                    attacks: attacks.clone(),
                });
            } else {
                full.data = Some(DataSource::Synthetic {
                    spec_file: None,
                    spec: spec.clone(),
                    attacks: attacks.clone(),
                });
            }
        }
        toml::to_string(&full).map_err(|e| Error::Serialize(e.to_string()))
    }
}

fn check_attacks(attacks: &Option<Vec<ClassId>>, push: &mut impl FnMut(&str, &dyn fmt::Display)) {
    if let Some(list) = attacks {
        if list.is_empty() {
            push("data.attacks", &"list is empty");
        }
        if list.contains(&BENIGN) {
            push("data.attacks", &"0 is benign, not an attack");
        }
        let unique: BTreeSet<_> = list.iter().collect();
        if unique.len() != list.len() {
            push("data.attacks", &"duplicate entries");
        }
    }
}

pub fn read_synthetic_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: SyntheticSpec =
        toml::from_str(&text).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

/// Reads, parses and validates a config file, reporting every problem found.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = ExperimentConfig::from_toml_str(&text, base)?;
    let problems = cfg.problems();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems))
    }
}
