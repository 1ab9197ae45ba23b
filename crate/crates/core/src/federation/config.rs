use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::KlDirection;
use crate::subspace::{Accumulation, ProjectionVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    FedAvg,
    FedProx,
    #[serde(rename = "feddf")]
    FedDf,
    #[serde(rename = "fedd3a")]
    FedD3a,
}

impl Strategy {
    pub fn distills(self) -> bool {
        matches!(self, Strategy::FedDf | Strategy::FedD3a)
    }

    pub fn uploads_projection(self) -> bool {
        self == Strategy::FedD3a
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx => "fedprox",
            Strategy::FedDf => "feddf",
            Strategy::FedD3a => "fedd3a",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fedavg" => Ok(Strategy::FedAvg),
            "fedprox" => Ok(Strategy::FedProx),
            "feddf" => Ok(Strategy::FedDf),
            "fedd3a" => Ok(Strategy::FedD3a),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected fedavg, fedprox, feddf or fedd3a)"
            ))),
        }
    }
}

/// How per-sample teacher weights are formed during server distillation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every teacher weighted `1/m`.
    Avg,
    /// Softmax of fresh standard-normal noise per sample.
    Random,
    /// Softmax of standardized subspace affinities.
    #[default]
    Soft,
    /// Only the teacher with the largest soft weight.
    Onehot,
    /// Posterior of a domain classifier trained on pooled client data
    /// (simulation-only upper bound).
    Ceiling,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Avg => "avg",
            Weighting::Random => "random",
            Weighting::Soft => "soft",
            Weighting::Onehot => "onehot",
            Weighting::Ceiling => "ceiling",
        }
    }

    pub fn needs_projections(self) -> bool {
        matches!(self, Weighting::Soft | Weighting::Onehot)
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avg" => Ok(Weighting::Avg),
            "random" => Ok(Weighting::Random),
            "soft" => Ok(Weighting::Soft),
            "onehot" => Ok(Weighting::Onehot),
            "ceiling" => Ok(Weighting::Ceiling),
            other => Err(Error::Config(format!("unknown weighting `{other}`"))),
        }
    }
}

/// Which backbone embeds server samples when scoring affinities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityBackbone {
    /// The global model broadcast at the start of the round (the one clients
    /// used to build their projections).
    #[default]
    Broadcast,
    /// The student being distilled, re-evaluated every batch.
    Student,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub strategy: Strategy,
    pub weighting: Weighting,
    /// Clients sampled per round; `0` selects every client.
    pub clients_per_round: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub distill_epochs: usize,
    pub kl_direction: KlDirection,
    pub affinity_backbone: AffinityBackbone,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::FedD3a,
            weighting: Weighting::Soft,
            clients_per_round: 0,
            rounds: 30,
            local_epochs: 1,
            distill_epochs: 1,
            kl_direction: KlDirection::StudentFirst,
            affinity_backbone: AffinityBackbone::Broadcast,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// FedProx proximal coefficient.
    pub mu: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            lr_min: 1e-4,
            momentum: 0.9,
            batch_size: 64,
            mu: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden widths of the global model; the last one is the feature size.
    pub hidden_dims: Vec<usize>,
    /// Per-client hidden widths (assigned round-robin). Non-empty switches
    /// the run to heterogeneous aggregation.
    pub client_hidden_dims: Vec<Vec<usize>>,
    /// Weight of the client-side distillation term in heterogeneous mode.
    pub lambda_kd: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 16],
            client_hidden_dims: Vec::new(),
            lambda_kd: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn heterogeneous(&self) -> bool {
        !self.client_hidden_dims.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubspaceConfig {
    pub ridge_alpha: f64,
    pub accumulation: AccumulationMode,
    /// Batch size for `batch_mean` accumulation.
    pub batch_size: usize,
    pub projection_variant: ProjectionVariant,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulationMode {
    #[default]
    PerSample,
    BatchMean,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self {
            ridge_alpha: 1e-2,
            accumulation: AccumulationMode::PerSample,
            batch_size: 32,
            projection_variant: ProjectionVariant::Scaled,
        }
    }
}

impl SubspaceConfig {
    pub fn accumulation(&self) -> Accumulation {
        match self.accumulation {
            AccumulationMode::PerSample => Accumulation::PerSample,
            AccumulationMode::BatchMean => Accumulation::BatchMean {
                batch_size: self.batch_size,
            },
        }
    }
}

/// Everything the round loop needs besides the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub federation: FederationConfig,
    pub optim: OptimConfig,
    pub model: ModelConfig,
    pub subspace: SubspaceConfig,
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        let f = &self.federation;
        if self.model.heterogeneous() && !f.strategy.distills() {
            return Err(Error::Strategy {
                strategy: f.strategy.to_string(),
                reason: "parameter averaging cannot combine heterogeneous client models".into(),
            });
        }
        if f.rounds == 0 {
            return Err(Error::Config("federation.rounds must be >= 1".into()));
        }
        if f.strategy.distills() && f.distill_epochs == 0 {
            return Err(Error::Config("distillation needs distill_epochs >= 1".into()));
        }
        if !(self.subspace.ridge_alpha > 0.0) {
            return Err(Error::Config("subspace.ridge_alpha must be > 0".into()));
        }
        if self.optim.batch_size == 0 || self.subspace.batch_size == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if !(self.optim.mu >= 0.0) || !(self.optim.lr0 > 0.0) || !(self.optim.lr_min >= 0.0) {
            return Err(Error::Config(
                "optimizer settings must be non-negative (lr0 > 0)".into(),
            ));
        }
        if self.model.hidden_dims.is_empty() || self.model.client_hidden_dims.iter().any(|h| h.is_empty()) {
            return Err(Error::Config("every model needs at least one hidden layer".into()));
        }
        Ok(())
    }

    /// The weighting actually used: FedDF always weights teachers uniformly,
    /// and only FedD3A honours the configured one.
    pub fn effective_weighting(&self) -> Weighting {
        match self.federation.strategy {
            Strategy::FedDf => Weighting::Avg,
            _ => self.federation.weighting,
        }
    }
}
