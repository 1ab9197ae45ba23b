use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{FederatedDataset, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::federation::client::{local_train, ClientState, ClientUpdate, LocalRound};
use crate::federation::config::Settings;
use crate::federation::server::{
    aggregate_fedavg, distill, sample_clients, DistillSettings, DistillStats, DomainOracle, Teacher,
};
use crate::neural::{accuracy, checkpoint_size, cosine_lr, forward, MlpArch, MlpParams};
use crate::numerics::Rng;

const TAG_INIT: u64 = 0x1A17;
const TAG_SERVER: u64 = 0x5E4E;
const TAG_CLIENT: u64 = 0xC11E_0000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub domain: usize,
    pub accuracy: f64,
}

/// Metrics of one communication round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based round index.
    pub round: usize,
    pub learning_rate: f64,
    pub selected: Vec<usize>,
    pub domain_accuracy: Vec<DomainAccuracy>,
    /// Client-weighted mean of the per-domain accuracies.
    pub mean_accuracy: f64,
    pub distill: Option<DistillStats>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Part of `bytes_up` spent on projection matrices.
    pub projection_bytes: u64,
    /// Excluded from determinism checks.
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug)]
pub struct ServerState {
    pub global_arch: MlpArch,
    pub global: MlpParams,
    pub unlabeled: UnlabeledSet,
    pub rng: Rng,
    pub oracle: Option<DomainOracle>,
    pub rounds_done: usize,
}

/// A full federation: clients, server and held-out evaluation sets.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub settings: Settings,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    pub eval_sets: Vec<LabeledSet>,
    pub eval_domains: Vec<usize>,
    pub eval_weights: Vec<f64>,
}

impl Simulation {
    pub fn new(data: FederatedDataset, settings: Settings, seed: u64) -> Result<Self> {
        settings.validate()?;
        let eval_weights = data.eval_weights();
        let input_dim = data.input_dim();
        let global_arch = MlpArch::new(input_dim, settings.model.hidden_dims.clone(), data.num_classes)?;
        let mut init = Rng::derive(seed, TAG_INIT);
        let global = MlpParams::init(&global_arch, &mut init);
        // client backbones may differ freely: projections and affinities are
        // always computed with the global backbone
        let hetero = &settings.model.client_hidden_dims;
        let mut clients = Vec::with_capacity(data.clients.len());
        for (k, (set, &domain)) in data.clients.into_iter().zip(&data.client_domain_of).enumerate() {
            let arch = if hetero.is_empty() {
                global_arch.clone()
            } else {
                MlpArch::new(input_dim, hetero[k % hetero.len()].clone(), data.num_classes)?
            };
            let client = ClientState::new(
                k,
                domain,
                arch,
                set,
                &mut init,
                Rng::derive(seed, TAG_CLIENT + k as u64),
            )
            .map_err(|e| e.context(format!("client {k}")))?;
            clients.push(client);
        }
        Ok(Self {
            settings,
            server: ServerState {
                global_arch,
                global,
                unlabeled: data.server_unlabeled,
                rng: Rng::derive(seed, TAG_SERVER),
                oracle: None,
                rounds_done: 0,
            },
            clients,
            eval_sets: data.server_eval,
            eval_domains: data.eval_domains,
            eval_weights,
        })
    }

    pub fn heterogeneous(&self) -> bool {
        self.settings.model.heterogeneous()
    }

    pub fn with_oracle(mut self, oracle: DomainOracle) -> Self {
        self.server.oracle = Some(oracle);
        self
    }

    pub fn global(&self) -> &MlpParams {
        &self.server.global
    }

    /// Local training for the selected clients from the current global model.
    pub fn train_clients(&mut self, selected: &[usize]) -> Result<Vec<ClientUpdate>> {
        let s = &self.settings;
        let round = LocalRound {
            global_arch: &self.server.global_arch,
            global: &self.server.global,
            learning_rate: cosine_lr(
                self.server.rounds_done,
                s.federation.rounds,
                s.optim.lr0,
                s.optim.lr_min,
            ),
            heterogeneous: s.model.heterogeneous(),
        };
        selected
            .iter()
            .map(|&k| local_train(&mut self.clients[k], round, s).map_err(|e| e.context(format!("client {k}"))))
            .collect()
    }

    /// Server step for a set of uploads: averaging, or distillation into a
    /// student initialized from the sample-weighted average (homogeneous) or
    /// the current global model (heterogeneous). Returns the new global model.
    pub fn aggregate(
        &mut self,
        updates: &[ClientUpdate],
        weighting: crate::federation::Weighting,
    ) -> Result<(MlpParams, Option<DistillStats>)> {
        let s = &self.settings;
        if !s.federation.strategy.distills() {
            return Ok((aggregate_fedavg(updates)?, None));
        }
        // same sample-weighted average FedAvg would return
        let mut student = if self.heterogeneous() {
            self.server.global.clone()
        } else {
            aggregate_fedavg(updates)?
        };
        let teachers: Vec<Teacher<'_>> = updates.iter().map(Teacher::from_update).collect();
        let ds = DistillSettings {
            weighting,
            epochs: s.federation.distill_epochs,
            batch_size: s.optim.batch_size,
            learning_rate: cosine_lr(
                self.server.rounds_done,
                s.federation.rounds,
                s.optim.lr0,
                s.optim.lr_min,
            ),
            momentum: s.optim.momentum,
            kl_direction: s.federation.kl_direction,
            affinity_backbone: s.federation.affinity_backbone,
        };
        let stats = distill(
            &self.server.global_arch,
            &mut student,
            &teachers,
            &self.server.unlabeled,
            Some((&self.server.global_arch, &self.server.global)),
            self.server.oracle.as_ref(),
            &ds,
            &mut self.server.rng,
        )?;
        Ok((student, Some(stats)))
    }

    pub fn evaluate(&self, params: &MlpParams) -> Result<Vec<DomainAccuracy>> {
        self.eval_sets
            .iter()
            .zip(&self.eval_domains)
            .map(|(set, &domain)| {
                let probs = forward(&self.server.global_arch, params, &set.features)?.probs;
                Ok(DomainAccuracy {
                    domain,
                    accuracy: accuracy(&probs, &set.labels),
                })
            })
            .collect()
    }

    pub fn weighted_accuracy(&self, acc: &[DomainAccuracy]) -> f64 {
        acc.iter().zip(&self.eval_weights).map(|(a, w)| a.accuracy * w).sum()
    }

    /// One communication round: sample, broadcast, train locally, upload,
    /// aggregate, evaluate.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let start = Instant::now();
        let s = &self.settings;
        let t = self.server.rounds_done;
        let lr = cosine_lr(t, s.federation.rounds, s.optim.lr0, s.optim.lr_min);
        let selected = sample_clients(self.clients.len(), s.federation.clients_per_round, &mut self.server.rng)?;
        let bytes_down = (selected.len() * checkpoint_size(&self.server.global)) as u64;
        let updates = self.train_clients(&selected)?;
        let bytes_up: u64 = updates.iter().map(|u| u.bytes_uploaded).sum();
        let projection_bytes: u64 = updates
            .iter()
            .map(|u| u.bytes_uploaded - checkpoint_size(&u.params) as u64)
            .sum();
        let weighting = self.settings.effective_weighting();
        let (global, stats) = self.aggregate(&updates, weighting)?;
        let domain_accuracy = self.evaluate(&global)?;
        self.server.global = global;
        self.server.rounds_done += 1;
        Ok(RoundReport {
            round: t + 1,
            learning_rate: lr,
            selected,
            mean_accuracy: self.weighted_accuracy(&domain_accuracy),
            domain_accuracy,
            distill: stats,
            bytes_up,
            bytes_down,
            projection_bytes,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Heterogeneous variant of [`Simulation::run_round`]; errors when the
    /// clients share the global architecture.
    pub fn run_heterogeneous_round(&mut self) -> Result<RoundReport> {
        if !self.heterogeneous() {
            return Err(Error::Config("no heterogeneous client architectures configured".into()));
        }
        self.run_round()
    }

    /// Runs the remaining rounds, calling `on_round` after each.
    pub fn run(&mut self, mut on_round: impl FnMut(&RoundReport)) -> Result<Vec<RoundReport>> {
        let mut reports = Vec::new();
        while self.server.rounds_done < self.settings.federation.rounds {
            let r = self.run_round()?;
            on_round(&r);
            reports.push(r);
        }
        Ok(reports)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_federation, DatasetConfig, Geometry};
    use crate::federation::{Strategy, Weighting};

    fn data(seed: u64) -> FederatedDataset {
        let cfg = DatasetConfig {
            num_domains: 3,
            client_n: 60,
            server_n: 40,
            test_n: 30,
            geometry: Geometry {
                input_dim: 6,
                num_classes: 3,
                ..Geometry::default()
            },
            ..DatasetConfig::default()
        };
        build_federation(&cfg, seed).unwrap()
    }

    fn settings(strategy: Strategy) -> Settings {
        let mut s = Settings::default();
        s.federation.strategy = strategy;
        s.federation.rounds = 2;
        s.optim.batch_size = 16;
        s.model.hidden_dims = vec![8, 4];
        if strategy != Strategy::FedD3a {
            s.federation.weighting = Weighting::Avg;
        }
        s
    }

    #[test]
    fn byte_accounting() {
        let mut sim = Simulation::new(data(1), settings(Strategy::FedD3a), 7).unwrap();
        let r = sim.run_round().unwrap();
        let ckpt = checkpoint_size(sim.global()) as u64;
        assert_eq!(r.bytes_down, 2 * ckpt);
        assert_eq!(r.projection_bytes, 2 * (28 + 8 * 16));
        assert_eq!(r.bytes_up, 2 * ckpt + r.projection_bytes);
        let d = r.distill.unwrap();
        assert_eq!(d.losses.len(), 3);
        assert!((d.mean_weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut sim = Simulation::new(data(2), settings(Strategy::FedD3a), 3).unwrap();
            let mut reps = sim.run(|_| {}).unwrap();
            reps.iter_mut().for_each(|r| r.wall_time_ms = 0.0);
            (reps, sim.server.global)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn averaging_never_reads_server_pool() {
        for st in [Strategy::FedAvg, Strategy::FedProx] {
            let mut sim = Simulation::new(data(3), settings(st), 3).unwrap();
            sim.run(|_| {}).unwrap();
            assert_eq!(sim.server.unlabeled.feature_reads(), 0);
            assert_eq!(sim.server.unlabeled.label_reads(), 0);
        }
        let mut sim = Simulation::new(data(3), settings(Strategy::FedDf), 3).unwrap();
        sim.run(|_| {}).unwrap();
        assert!(sim.server.unlabeled.feature_reads() > 0);
        assert_eq!(sim.server.unlabeled.label_reads(), 0);
    }

    #[test]
    fn hetero_requires_distillation() {
        let mut s = settings(Strategy::FedAvg);
        s.model.client_hidden_dims = vec![vec![5, 4]];
        assert!(matches!(Simulation::new(data(1), s, 1), Err(Error::Strategy { .. })));
        let mut s = settings(Strategy::FedD3a);
        s.model.client_hidden_dims = vec![vec![5], vec![12, 7]];
        let mut sim = Simulation::new(data(1), s, 1).unwrap();
        assert_eq!(sim.clients[1].arch.hidden_dims, vec![12, 7]);
        let r = sim.run_heterogeneous_round().unwrap();
        // projections live in the global feature space
        assert_eq!(r.projection_bytes, 2 * (28 + 8 * 16));
        let mut s = settings(Strategy::FedD3a);
        s.model.client_hidden_dims = Vec::new();
        let mut sim = Simulation::new(data(1), s, 1).unwrap();
        assert!(sim.run_heterogeneous_round().is_err());
    }
}
