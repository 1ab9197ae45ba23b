use crate::datagen::LabeledSet;
use crate::error::{Error, Result};
use crate::federation::config::{Settings, Strategy};
use crate::neural::{
    backward, checkpoint_size, decode_checkpoint, encode_checkpoint, features, forward, sgd_step, LossSpec, MlpArch,
    MlpParams, Optimizer,
};
use crate::numerics::Rng;
use crate::subspace::{
    deserialize_projection, projection_from_features, projection_wire_size, serialize_projection, ProjectionMatrix,
};

#[derive(Clone, Debug)]
pub struct ClientState {
    pub client_id: usize,
    pub domain_id: usize,
    pub arch: MlpArch,
    pub params: MlpParams,
    pub dataset: LabeledSet,
    pub rng: Rng,
}

/// What a client sends back after a round of local training.
#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub domain_id: usize,
    pub arch: MlpArch,
    pub params: MlpParams,
    pub projection: Option<ProjectionMatrix>,
    pub num_samples: usize,
    pub bytes_uploaded: u64,
}

/// Round-level knobs handed to [`local_train`].
#[derive(Clone, Copy, Debug)]
pub struct LocalRound<'a> {
    pub global_arch: &'a MlpArch,
    pub global: &'a MlpParams,
    pub learning_rate: f64,
    pub heterogeneous: bool,
}

impl ClientState {
    pub fn new(
        client_id: usize,
        domain_id: usize,
        arch: MlpArch,
        dataset: LabeledSet,
        init_rng: &mut Rng,
        rng: Rng,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("client dataset"));
        }
        if dataset.input_dim() != arch.input_dim {
            return Err(Error::dims(
                "ClientState::new",
                format!(
                    "data has {} features, arch expects {}",
                    dataset.input_dim(),
                    arch.input_dim
                ),
            ));
        }
        let params = MlpParams::init(&arch, init_rng);
        Ok(Self {
            client_id,
            domain_id,
            arch,
            params,
            dataset,
            rng,
        })
    }
}

/// Runs local epochs on `client` and packages the upload.
///
/// In homogeneous mode the client starts from the broadcast global model;
/// in heterogeneous mode it keeps its own architecture and parameters and
/// adds a distillation term toward the global model's predictions. FedD3A
/// clients build their projection from the global backbone's features of
/// their data before any local update.
pub fn local_train(client: &mut ClientState, round: LocalRound<'_>, settings: &Settings) -> Result<ClientUpdate> {
    let fed = &settings.federation;
    let optim = &settings.optim;
    let x = &client.dataset.features;

    let projection = if fed.strategy.uploads_projection() {
        let z = features(round.global_arch, round.global, x)?;
        let sub = &settings.subspace;
        Some(projection_from_features(
            &z,
            sub.ridge_alpha,
            sub.accumulation(),
            sub.projection_variant,
        )?)
    } else {
        None
    };

    if !round.heterogeneous {
        if !round.global.matches(&client.arch) {
            return Err(Error::LayoutMismatch(format!(
                "client {} architecture differs from the global model",
                client.client_id
            )));
        }
        client.params = round.global.clone();
    }

    let prox = fed.strategy == Strategy::FedProx && optim.mu > 0.0;
    let mut opt = Optimizer::new(round.learning_rate, optim.momentum);
    let n = client.dataset.len();
    for _ in 0..fed.local_epochs {
        let order = client.rng.permutation(n);
        for chunk in order.chunks(optim.batch_size) {
            let xb = x.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| client.dataset.labels[i]).collect();
            let teacher;
            let mut spec = LossSpec::cross_entropy(&yb);
            if round.heterogeneous && settings.model.lambda_kd > 0.0 {
                teacher = forward(round.global_arch, round.global, &xb)?.probs;
                spec = spec.with_kd(&teacher, settings.model.lambda_kd, fed.kl_direction);
            }
            if prox {
                spec = spec.with_prox(round.global, optim.mu);
            }
            let (_, grads) = backward(&client.arch, &client.params, &xb, &spec)?;
            sgd_step(&mut client.params, &grads, &mut opt)?;
        }
    }
    if !client.params.is_finite() {
        return Err(Error::NonFinite { op: "local_train" });
    }

    transmit(client, projection)
}

/// Serializes the upload and decodes it the way the server would, so the
/// byte count and the received values both come from the wire form.
fn transmit(client: &ClientState, projection: Option<ProjectionMatrix>) -> Result<ClientUpdate> {
    let ckpt = encode_checkpoint(&client.params);
    debug_assert_eq!(ckpt.len(), checkpoint_size(&client.params));
    let params = decode_checkpoint(&ckpt)?;
    let mut bytes = ckpt.len() as u64;
    let projection = match projection {
        Some(p) => {
            let wire = serialize_projection(&p);
            debug_assert_eq!(wire.len(), projection_wire_size(p.dim()));
            bytes += wire.len() as u64;
            Some(deserialize_projection(&wire)?)
        }
        None => None,
    };
    Ok(ClientUpdate {
        client_id: client.client_id,
        domain_id: client.domain_id,
        arch: client.arch.clone(),
        params,
        projection,
        num_samples: client.dataset.len(),
        bytes_uploaded: bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_domain, sample_domain, Geometry};
    use crate::federation::config::Settings;

    fn setup(strategy: Strategy) -> (ClientState, MlpArch, MlpParams, Settings) {
        let g = Geometry {
            input_dim: 8,
            num_classes: 3,
            ..Geometry::default()
        };
        let spec = make_domain(1, 1, 0.5, &g).unwrap();
        let data = sample_domain(&spec, 90, &mut Rng::seed_from_u64(2)).unwrap();
        let arch = MlpArch::new(8, vec![6, 4], 3).unwrap();
        let mut init = Rng::seed_from_u64(3);
        let global = MlpParams::init(&arch, &mut init);
        let client = ClientState::new(0, 1, arch.clone(), data, &mut init, Rng::seed_from_u64(4)).unwrap();
        let mut s = Settings::default();
        s.federation.strategy = strategy;
        s.optim.batch_size = 16;
        (client, arch, global, s)
    }

    #[test]
    fn upload_sizes() {
        let (mut c, arch, global, s) = setup(Strategy::FedD3a);
        let round = LocalRound {
            global_arch: &arch,
            global: &global,
            learning_rate: 0.05,
            heterogeneous: false,
        };
        let u = local_train(&mut c, round, &s).unwrap();
        let p = u.projection.as_ref().unwrap();
        assert_eq!(p.dim(), 4);
        assert_eq!(p.sample_count(), 90);
        assert_eq!(
            u.bytes_uploaded as usize,
            checkpoint_size(&u.params) + projection_wire_size(4)
        );
        assert_ne!(u.params, global);

        let (mut c, arch, global, s) = setup(Strategy::FedAvg);
        let round = LocalRound {
            global_arch: &arch,
            global: &global,
            learning_rate: 0.05,
            heterogeneous: false,
        };
        let u = local_train(&mut c, round, &s).unwrap();
        assert!(u.projection.is_none());
        assert_eq!(u.bytes_uploaded as usize, checkpoint_size(&u.params));
    }

    #[test]
    fn prox_with_zero_mu_matches_fedavg() {
        let (mut a, arch, global, s) = setup(Strategy::FedAvg);
        let (mut b, _, _, mut sp) = setup(Strategy::FedProx);
        sp.optim.mu = 0.0;
        let round = LocalRound {
            global_arch: &arch,
            global: &global,
            learning_rate: 0.05,
            heterogeneous: false,
        };
        let ua = local_train(&mut a, round, &s).unwrap();
        let ub = local_train(&mut b, round, &sp).unwrap();
        assert_eq!(ua.params, ub.params);
    }

    #[test]
    fn prox_pulls_toward_anchor() {
        let (mut a, arch, global, s) = setup(Strategy::FedAvg);
        let (mut b, _, _, mut sp) = setup(Strategy::FedProx);
        sp.optim.mu = 5.0;
        let round = LocalRound {
            global_arch: &arch,
            global: &global,
            learning_rate: 0.05,
            heterogeneous: false,
        };
        let da = local_train(&mut a, round, &s)
            .unwrap()
            .params
            .squared_distance(&global)
            .unwrap();
        let db = local_train(&mut b, round, &sp)
            .unwrap()
            .params
            .squared_distance(&global)
            .unwrap();
        assert!(db < da, "{db} >= {da}");
    }
}
