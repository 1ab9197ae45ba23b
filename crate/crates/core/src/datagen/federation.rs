use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datagen::domain::{make_domain, DomainSpec, Geometry};
use crate::datagen::sets::{dirichlet_partition, sample_domain, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FederationMode {
    /// One client per client domain.
    #[default]
    CrossSilo,
    /// Each client domain is split into `clients_per_domain` label-skewed shards.
    CrossDevice,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerSource {
    /// Server samples come from the designated server domain.
    #[default]
    ServerDomain,
    /// Server samples are fresh draws from the first client's domain.
    FirstClient,
}

/// Declarative description of a synthetic federation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub mode: FederationMode,
    pub num_domains: usize,
    pub server_domain: usize,
    /// Explicit client domains; empty means every domain except the server's.
    pub client_domains: Vec<usize>,
    pub discrepancy_level: f64,
    pub clients_per_domain: usize,
    pub beta: f64,
    /// Training samples drawn per client domain.
    pub client_n: usize,
    pub server_n: usize,
    /// Held-out evaluation samples per client domain.
    pub test_n: usize,
    pub server_source: ServerSource,
    /// Fraction of server samples drawn from the client domains (uniformly
    /// over them) instead of the server's own domain.
    pub server_mixture: f64,
    pub geometry: Geometry,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            mode: FederationMode::CrossSilo,
            num_domains: 5,
            server_domain: 0,
            client_domains: Vec::new(),
            discrepancy_level: 1.0,
            clients_per_domain: 5,
            beta: 1.0,
            client_n: 400,
            server_n: 500,
            test_n: 300,
            server_source: ServerSource::ServerDomain,
            server_mixture: 0.0,
            geometry: Geometry::default(),
        }
    }
}

impl DatasetConfig {
    pub fn resolved_client_domains(&self) -> Vec<usize> {
        if self.client_domains.is_empty() {
            (0..self.num_domains).filter(|&d| d != self.server_domain).collect()
        } else {
            self.client_domains.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let clients = self.resolved_client_domains();
        if clients.is_empty() {
            return Err(Error::Config("federation needs at least one client domain".into()));
        }
        let unique: BTreeSet<_> = clients.iter().collect();
        if unique.len() != clients.len() {
            return Err(Error::Config(format!("duplicate client domains in {clients:?}")));
        }
        if self.mode == FederationMode::CrossSilo && clients.contains(&self.server_domain) {
            return Err(Error::Config(format!(
                "server domain {} is also a client domain in cross-silo mode",
                self.server_domain
            )));
        }
        if self.mode == FederationMode::CrossDevice {
            if self.clients_per_domain == 0 {
                return Err(Error::Config("clients_per_domain must be >= 1".into()));
            }
            if !(self.beta > 0.0) {
                return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
            }
        }
        if self.client_n == 0 || self.server_n == 0 || self.test_n == 0 {
            return Err(Error::Config("client_n, server_n and test_n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.server_mixture) {
            return Err(Error::Config(format!(
                "server_mixture must be in [0, 1], got {}",
                self.server_mixture
            )));
        }
        if !self.discrepancy_level.is_finite() {
            return Err(Error::Config("discrepancy_level must be finite".into()));
        }
        Ok(())
    }
}

/// Materialized clients plus the server's unlabeled pool and evaluation sets.
#[derive(Clone, Debug)]
pub struct FederatedDataset {
    pub clients: Vec<LabeledSet>,
    pub server_unlabeled: UnlabeledSet,
    /// One held-out labelled set per distinct client domain, ascending by id.
    pub server_eval: Vec<LabeledSet>,
    pub eval_domains: Vec<usize>,
    pub client_domain_of: Vec<usize>,
    pub lambda_weights: Vec<f64>,
    pub domains: Vec<DomainSpec>,
    pub num_classes: usize,
}

impl FederatedDataset {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn input_dim(&self) -> usize {
        self.clients[0].input_dim()
    }

    /// Importance of each evaluation domain: the summed `λ` of its clients.
    pub fn eval_weights(&self) -> Vec<f64> {
        self.eval_domains
            .iter()
            .map(|d| {
                self.client_domain_of
                    .iter()
                    .zip(&self.lambda_weights)
                    .filter(|(cd, _)| *cd == d)
                    .map(|(_, l)| l)
                    .sum()
            })
            .collect()
    }
}

const TAG_TRAIN: u64 = 0x7A_0000;
const TAG_TEST: u64 = 0x7E_0000;
const TAG_SERVER: u64 = 0x5E_0000;
const TAG_SPLIT: u64 = 0x5B_0000;

pub fn build_federation(cfg: &DatasetConfig, seed: u64) -> Result<FederatedDataset> {
    cfg.validate()?;
    let client_domains = cfg.resolved_client_domains();
    let max_id = client_domains.iter().copied().chain([cfg.server_domain]).max().unwrap();
    let domains = (0..=max_id)
        .map(|d| make_domain(seed, d, cfg.discrepancy_level, &cfg.geometry))
        .collect::<Result<Vec<_>>>()?;

    let mut clients = Vec::new();
    let mut client_domain_of = Vec::new();
    for &d in &client_domains {
        let mut rng = Rng::derive(seed, TAG_TRAIN + d as u64);
        let pool = sample_domain(&domains[d], cfg.client_n, &mut rng)?;
        match cfg.mode {
            FederationMode::CrossSilo => {
                clients.push(pool);
                client_domain_of.push(d);
            }
            FederationMode::CrossDevice => {
                let mut split_rng = Rng::derive(seed, TAG_SPLIT + d as u64);
                let mut parts = dirichlet_partition(&pool, cfg.clients_per_domain, cfg.beta, &mut split_rng)?;
                let mut attempts = 1;
                while parts.iter().any(|p| p.is_empty()) {
                    if attempts == 100 {
                        return Err(Error::Config(format!(
                            "could not split domain {d} into {} non-empty clients",
                            cfg.clients_per_domain
                        )));
                    }
                    parts = dirichlet_partition(&pool, cfg.clients_per_domain, cfg.beta, &mut split_rng)?;
                    attempts += 1;
                }
                client_domain_of.extend(std::iter::repeat_n(d, parts.len()));
                clients.extend(parts);
            }
        }
    }

    let server_spec = match cfg.server_source {
        ServerSource::ServerDomain => &domains[cfg.server_domain],
        ServerSource::FirstClient => &domains[client_domains[0]],
    };
    let mut server_rng = Rng::derive(seed, TAG_SERVER + server_spec.domain_id as u64);
    let n_mixed = (cfg.server_mixture * cfg.server_n as f64).round() as usize;
    let mut parts = Vec::new();
    if n_mixed < cfg.server_n {
        parts.push(sample_domain(server_spec, cfg.server_n - n_mixed, &mut server_rng)?);
    }
    if n_mixed > 0 {
        // fresh draws, never the clients' own samples
        let mut counts = vec![0usize; client_domains.len()];
        for _ in 0..n_mixed {
            counts[server_rng.index(client_domains.len())] += 1;
        }
        for (&d, &c) in client_domains.iter().zip(&counts) {
            if c > 0 {
                parts.push(sample_domain(&domains[d], c, &mut server_rng)?);
            }
        }
    }
    let refs: Vec<&LabeledSet> = parts.iter().collect();
    let pooled = LabeledSet::concat(&refs)?;
    let order = server_rng.permutation(pooled.len());
    let server_unlabeled = pooled.subset(&order).into_unlabeled();

    let eval_domains: Vec<usize> = client_domains
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let server_eval = eval_domains
        .iter()
        .map(|&d| sample_domain(&domains[d], cfg.test_n, &mut Rng::derive(seed, TAG_TEST + d as u64)))
        .collect::<Result<Vec<_>>>()?;

    let k = clients.len();
    Ok(FederatedDataset {
        clients,
        server_unlabeled,
        server_eval,
        eval_domains,
        client_domain_of,
        lambda_weights: vec![1.0 / k as f64; k],
        domains,
        num_classes: cfg.geometry.num_classes,
    })
}
