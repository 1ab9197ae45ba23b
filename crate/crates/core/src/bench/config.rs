use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::DatasetConfig;
use crate::error::{Error, Result};
use crate::federation::{FederationConfig, ModelConfig, OptimConfig, Settings, Strategy, SubspaceConfig, Weighting};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Train every arm for the configured rounds.
    #[default]
    Run,
    /// One-round comparison of teacher weightings, including the ceiling.
    Ablate,
    /// Projection vs prototype domain classification.
    ProbeDomains,
    /// Server data replaced by the first client's domain.
    ProbeOverlap,
    /// Upload/download byte accounting.
    Comm,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::Ablate => "ablate",
            ExperimentKind::ProbeDomains => "probe_domains",
            ExperimentKind::ProbeOverlap => "probe_overlap",
            ExperimentKind::Comm => "comm",
        }
    }
}

/// One compared configuration: a strategy plus, for distillation, a
/// weighting. Written `strategy` or `strategy:weighting`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Arm {
    pub strategy: Strategy,
    pub weighting: Weighting,
}

impl Arm {
    pub fn new(strategy: Strategy, weighting: Weighting) -> Self {
        let weighting = match strategy {
            Strategy::FedD3a => weighting,
            _ => Weighting::Avg,
        };
        Self { strategy, weighting }
    }

    pub fn label(&self) -> String {
        match self.strategy {
            Strategy::FedD3a if self.weighting != Weighting::Soft => {
                format!("{}:{}", self.strategy, self.weighting.name())
            }
            _ => self.strategy.to_string(),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (st, w) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let strategy: Strategy = st.trim().parse()?;
        let weighting = match w {
            Some(w) => {
                if strategy != Strategy::FedD3a {
                    return Err(Error::Config(format!("arm `{s}`: only fedd3a takes a weighting")));
                }
                w.trim().parse()?
            }
            None => Weighting::Soft,
        };
        Ok(Arm::new(strategy, weighting))
    }
}

impl Serialize for Arm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Arm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub name: String,
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    /// Compared arms; empty means the single arm described by
    /// `[federation]`.
    pub arms: Vec<Arm>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            kind: ExperimentKind::Run,
            seeds: vec![0],
            arms: Vec::new(),
        }
    }
}

/// Settings of the projection-vs-prototype probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub num_clients: usize,
    pub input_dim: usize,
    pub subspace_dim: usize,
    pub mean_scale: f64,
    pub spread: f64,
    pub noise_std: f64,
    /// Training samples per client (used to build projections/prototypes).
    pub train_n: usize,
    /// Held-out samples per client.
    pub test_n: usize,
    pub hidden_dims: Vec<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            num_clients: 10,
            input_dim: 64,
            subspace_dim: 4,
            mean_scale: 0.5,
            spread: 1.0,
            noise_std: 0.05,
            train_n: 100,
            test_n: 100,
            hidden_dims: vec![64],
        }
    }
}

/// Reference model for the projection overhead ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommConfig {
    pub reference_feature_dim: usize,
    pub reference_total_params: u64,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            reference_feature_dim: 512,
            reference_total_params: 21_800_000,
        }
    }
}

/// Settings of the domain classifier behind the `ceiling` weighting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeilingConfig {
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for CeilingConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32],
            epochs: 30,
            learning_rate: 0.05,
        }
    }
}

/// A complete experiment description, loaded from TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub dataset: DatasetConfig,
    pub federation: FederationConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub subspace: SubspaceConfig,
    pub ceiling: CeilingConfig,
    pub probe: ProbeConfig,
    pub comm: CommConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn settings(&self) -> Settings {
        Settings {
            federation: self.federation.clone(),
            optim: self.optim.clone(),
            model: self.model.clone(),
            subspace: self.subspace.clone(),
        }
    }

    /// Settings with `arm`'s strategy and weighting swapped in.
    pub fn settings_for(&self, arm: Arm) -> Settings {
        let mut s = self.settings();
        s.federation.strategy = arm.strategy;
        s.federation.weighting = arm.weighting;
        s
    }

    pub fn arms(&self) -> Vec<Arm> {
        if self.experiment.arms.is_empty() {
            vec![Arm::new(self.federation.strategy, self.federation.weighting)]
        } else {
            self.experiment.arms.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must not be empty".into()));
        }
        if self.experiment.name.is_empty()
            || !self
                .experiment
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::Config(format!(
                "experiment.name `{}` must be non-empty and use only [A-Za-z0-9._-]",
                self.experiment.name
            )));
        }
        self.dataset.validate().map_err(|e| e.context("dataset"))?;
        for arm in self.arms() {
            self.settings_for(arm)
                .validate()
                .map_err(|e| e.context(format!("arm {arm}")))?;
        }
        let p = &self.probe;
        if p.num_clients == 0 || p.train_n == 0 || p.test_n == 0 || p.hidden_dims.is_empty() {
            return Err(Error::Config("probe needs clients, samples and a hidden layer".into()));
        }
        if self.ceiling.hidden_dims.is_empty() || self.ceiling.epochs == 0 {
            return Err(Error::Config("ceiling needs a hidden layer and >= 1 epoch".into()));
        }
        if self.comm.reference_feature_dim == 0 || self.comm.reference_total_params == 0 {
            return Err(Error::Config("comm reference model must be non-empty".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the whole config.
    pub fn hash(&self) -> String {
        digest(self)
    }

    /// Per-section hashes, keyed by section name.
    pub fn section_hashes(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("experiment", digest(&self.experiment)),
            ("dataset", digest(&self.dataset)),
            ("federation", digest(&self.federation)),
            ("model", digest(&self.model)),
            ("optim", digest(&self.optim)),
            ("subspace", digest(&self.subspace)),
            ("ceiling", digest(&self.ceiling)),
            ("probe", digest(&self.probe)),
            ("comm", digest(&self.comm)),
        ])
    }
}

fn digest<T: Serialize>(value: &T) -> String {
    // struct fields serialize in declaration order, so this is canonical
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| e.context(format!("config {}", path.display())))
}
