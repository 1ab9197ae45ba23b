//! Client/server round loop for FedAvg, FedProx, FedDF and FedD3A.
//!
//! FedDF and FedD3A share one code path: both distill the uploaded client
//! models into a server student on unlabeled data, and differ only in how
//! per-sample teacher weights are formed.

mod client;
mod config;
mod round;
mod server;

pub use client::{local_train, ClientState, ClientUpdate, LocalRound};
pub use config::{
    AccumulationMode, AffinityBackbone, FederationConfig, ModelConfig, OptimConfig, Settings, Strategy, SubspaceConfig,
    Weighting,
};
pub use round::{DomainAccuracy, RoundReport, ServerState, Simulation};
pub use server::{
    aggregate_fedavg, distill, pseudo_labels, sample_clients, sample_weights, DistillSettings, DistillStats,
    DomainOracle, Teacher,
};
