use serde::{Deserialize, Serialize};

use crate::datagen::UnlabeledSet;
use crate::error::{Error, Result};
use crate::federation::client::ClientUpdate;
use crate::federation::config::{AffinityBackbone, Weighting};
use crate::neural::{
    average_params, backward, features, forward, sgd_step, KlDirection, LossSpec, MlpArch, MlpParams, Optimizer,
};
use crate::numerics::{argmax, softmax, Matrix, Rng};
use crate::subspace::{affinity, weights_from_affinities, ProjectionMatrix};

/// Picks `m` of `k` clients without replacement, returned in ascending order.
/// Selecting everyone (`m == 0` or `m >= k`) consumes no randomness.
pub fn sample_clients(k: usize, m: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::EmptyInput("sample_clients"));
    }
    if m == 0 || m >= k {
        return Ok((0..k).collect());
    }
    let mut pool: Vec<usize> = (0..k).collect();
    for i in 0..m {
        let j = i + rng.index(k - i);
        pool.swap(i, j);
    }
    let mut chosen = pool[..m].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Sample-count weighted parameter average.
pub fn aggregate_fedavg(updates: &[ClientUpdate]) -> Result<MlpParams> {
    if updates.is_empty() {
        return Err(Error::EmptyInput("aggregate_fedavg"));
    }
    let total: usize = updates.iter().map(|u| u.num_samples).sum();
    if total == 0 {
        return Err(Error::EmptyInput("aggregate_fedavg: no samples"));
    }
    let w: Vec<f64> = updates.iter().map(|u| u.num_samples as f64 / total as f64).collect();
    let params: Vec<&MlpParams> = updates.iter().map(|u| &u.params).collect();
    average_params(&params, Some(&w))
}

/// A teacher model as seen by the server during distillation.
#[derive(Clone, Copy, Debug)]
pub struct Teacher<'a> {
    pub arch: &'a MlpArch,
    pub params: &'a MlpParams,
    pub projection: Option<&'a ProjectionMatrix>,
    pub domain_id: usize,
}

impl<'a> Teacher<'a> {
    pub fn from_update(u: &'a ClientUpdate) -> Self {
        Self {
            arch: &u.arch,
            params: &u.params,
            projection: u.projection.as_ref(),
            domain_id: u.domain_id,
        }
    }
}

/// Domain classifier used by the `ceiling` weighting. Class `k` of the model
/// corresponds to `domains[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainOracle {
    pub arch: MlpArch,
    pub params: MlpParams,
    pub domains: Vec<usize>,
}

impl DomainOracle {
    pub fn posterior(&self, x: &Matrix) -> Result<Matrix> {
        Ok(forward(&self.arch, &self.params, x)?.probs)
    }
}

/// Per-sample teacher weights, `n x m`, rows summing to one.
///
/// `feats` holds the backbone features of `x` (needed by `soft` and
/// `onehot`); `oracle` is needed by `ceiling`; `rng` feeds `random`.
pub fn sample_weights(
    weighting: Weighting,
    teachers: &[Teacher<'_>],
    x: &Matrix,
    feats: Option<&Matrix>,
    oracle: Option<&DomainOracle>,
    rng: &mut Rng,
) -> Result<Matrix> {
    let m = teachers.len();
    if m == 0 {
        return Err(Error::EmptyInput("sample_weights: no teachers"));
    }
    let n = x.rows();
    let mut w = Matrix::zeros(n, m);
    match weighting {
        Weighting::Avg => w.as_mut_slice().fill(1.0 / m as f64),
        Weighting::Random => {
            for r in 0..n {
                let noise = rng.normal_vec(m, 0.0, 1.0);
                w.row_mut(r).copy_from_slice(&softmax(&noise)?);
            }
        }
        Weighting::Soft | Weighting::Onehot => {
            let feats = feats.ok_or(Error::MissingLossInput("server features"))?;
            if feats.rows() != n {
                return Err(Error::dims(
                    "sample_weights",
                    format!("{} feature rows for {n} samples", feats.rows()),
                ));
            }
            let projections = teachers
                .iter()
                .map(|t| {
                    t.projection.ok_or_else(|| Error::Strategy {
                        strategy: weighting.name().into(),
                        reason: "a teacher uploaded no projection".into(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            for r in 0..n {
                let z = feats.row(r);
                let raw = projections.iter().map(|p| affinity(p, z)).collect::<Result<Vec<_>>>()?;
                let tw = weights_from_affinities(raw)?;
                let row = w.row_mut(r);
                if weighting == Weighting::Onehot {
                    row[argmax(&tw.weights)] = 1.0;
                } else {
                    row.copy_from_slice(&tw.weights);
                }
            }
        }
        Weighting::Ceiling => {
            let oracle = oracle.ok_or_else(|| Error::Strategy {
                strategy: "ceiling".into(),
                reason: "no domain oracle was provided".into(),
            })?;
            let slot = teachers
                .iter()
                .map(|t| {
                    oracle
                        .domains
                        .iter()
                        .position(|&d| d == t.domain_id)
                        .ok_or_else(|| Error::Strategy {
                            strategy: "ceiling".into(),
                            reason: format!("oracle does not know domain {}", t.domain_id),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut share = vec![0usize; oracle.domains.len()];
            for &s in &slot {
                share[s] += 1;
            }
            let post = oracle.posterior(x)?;
            for r in 0..n {
                let pr = post.row(r);
                let row = w.row_mut(r);
                for (i, &s) in slot.iter().enumerate() {
                    row[i] = pr[s] / share[s] as f64;
                }
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|v| *v /= total);
                } else {
                    row.fill(1.0 / m as f64);
                }
            }
        }
    }
    Ok(w)
}

/// Weighted mixture of teacher predictions, row by row.
pub fn pseudo_labels(teacher_probs: &[&Matrix], weights: &Matrix) -> Result<Matrix> {
    let first = teacher_probs.first().ok_or(Error::EmptyInput("pseudo_labels"))?;
    let (n, c) = first.shape();
    if weights.shape() != (n, teacher_probs.len()) || teacher_probs.iter().any(|t| t.shape() != (n, c)) {
        return Err(Error::dims(
            "pseudo_labels",
            "teacher outputs and weights disagree".to_string(),
        ));
    }
    let mut y = Matrix::zeros(n, c);
    for r in 0..n {
        let wr = weights.row(r);
        let out = y.row_mut(r);
        for (t, &a) in teacher_probs.iter().zip(wr) {
            for (o, v) in out.iter_mut().zip(t.row(r)) {
                *o += a * v;
            }
        }
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillSettings {
    pub weighting: Weighting,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub kl_direction: KlDirection,
    pub affinity_backbone: AffinityBackbone,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DistillStats {
    /// Loss of every distillation batch, in order.
    pub losses: Vec<f64>,
    /// Mean weight each teacher received over all server samples and epochs.
    pub mean_weights: Vec<f64>,
}

/// Trains `student` to match the weighted teacher ensemble on the server's
/// unlabeled samples.
///
/// `broadcast` is the backbone used to embed server samples when the
/// affinity backbone is [`AffinityBackbone::Broadcast`].
#[allow(clippy::too_many_arguments)]
pub fn distill(
    student_arch: &MlpArch,
    student: &mut MlpParams,
    teachers: &[Teacher<'_>],
    server: &UnlabeledSet,
    broadcast: Option<(&MlpArch, &MlpParams)>,
    oracle: Option<&DomainOracle>,
    settings: &DistillSettings,
    rng: &mut Rng,
) -> Result<DistillStats> {
    if teachers.is_empty() {
        return Err(Error::EmptyInput("distill: no teachers"));
    }
    if server.is_empty() {
        return Err(Error::EmptyInput("distill: empty server set"));
    }
    let x = server.features();
    let n = x.rows();
    let m = teachers.len();
    let teacher_probs = teachers
        .iter()
        .map(|t| Ok(forward(t.arch, t.params, x)?.probs))
        .collect::<Result<Vec<_>>>()?;
    let teacher_refs: Vec<&Matrix> = teacher_probs.iter().collect();

    let needs_feats = matches!(settings.weighting, Weighting::Soft | Weighting::Onehot);
    let per_batch_feats = needs_feats && settings.affinity_backbone == AffinityBackbone::Student;
    let static_weights = if settings.weighting == Weighting::Random || per_batch_feats {
        None
    } else {
        let feats = if needs_feats {
            let (arch, params) = broadcast.ok_or(Error::MissingLossInput("broadcast backbone"))?;
            Some(features(arch, params, x)?)
        } else {
            None
        };
        Some(sample_weights(
            settings.weighting,
            teachers,
            x,
            feats.as_ref(),
            oracle,
            rng,
        )?)
    };
    let static_targets = match &static_weights {
        Some(w) => Some(pseudo_labels(&teacher_refs, w)?),
        None => None,
    };

    let mut opt = Optimizer::new(settings.learning_rate, settings.momentum);
    let mut stats = DistillStats {
        losses: Vec::new(),
        mean_weights: vec![0.0; m],
    };
    let mut weight_rows = 0usize;
    let batch_size = settings.batch_size.max(1);
    for _ in 0..settings.epochs {
        let order = rng.permutation(n);
        for chunk in order.chunks(batch_size) {
            let xb = x.select_rows(chunk);
            let (wb, yb) = match (&static_weights, &static_targets) {
                (Some(w), Some(y)) => (w.select_rows(chunk), y.select_rows(chunk)),
                _ => {
                    let feats = if per_batch_feats {
                        Some(features(student_arch, student, &xb)?)
                    } else {
                        None
                    };
                    let wb = sample_weights(settings.weighting, teachers, &xb, feats.as_ref(), oracle, rng)?;
                    let tb: Vec<Matrix> = teacher_probs.iter().map(|t| t.select_rows(chunk)).collect();
                    let tb_refs: Vec<&Matrix> = tb.iter().collect();
                    let yb = pseudo_labels(&tb_refs, &wb)?;
                    (wb, yb)
                }
            };
            for r in 0..wb.rows() {
                for (acc, v) in stats.mean_weights.iter_mut().zip(wb.row(r)) {
                    *acc += v;
                }
            }
            weight_rows += wb.rows();
            let spec = LossSpec::distill(&yb, settings.kl_direction);
            let (loss, grads) = backward(student_arch, student, &xb, &spec)?;
            sgd_step(student, &grads, &mut opt)?;
            stats.losses.push(loss);
        }
    }
    if weight_rows > 0 {
        stats.mean_weights.iter_mut().for_each(|v| *v /= weight_rows as f64);
    }
    if !student.is_finite() {
        return Err(Error::NonFinite { op: "distill" });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_without_replacement() {
        let mut rng = Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = sample_clients(25, 5, &mut rng).unwrap();
            assert_eq!(s.len(), 5);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 25));
        }
        let mut a = Rng::seed_from_u64(2);
        let before = a.clone().next_u64();
        assert_eq!(sample_clients(4, 0, &mut a).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(sample_clients(4, 9, &mut a).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(a.next_u64(), before);
        assert!(sample_clients(0, 1, &mut a).is_err());
    }

    #[test]
    fn sampling_covers_everyone() {
        let mut rng = Rng::seed_from_u64(3);
        let mut hits = [0usize; 10];
        for _ in 0..2000 {
            for i in sample_clients(10, 3, &mut rng).unwrap() {
                hits[i] += 1;
            }
        }
        // each client expected 600 times
        assert!(hits.iter().all(|&h| (500..700).contains(&h)), "{hits:?}");
    }

    #[test]
    fn pseudo_label_mixture() {
        let t1 = Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.5]]).unwrap();
        let t2 = Matrix::from_rows(&[[0.0, 1.0], [0.1, 0.9]]).unwrap();
        let w = Matrix::from_rows(&[[0.25, 0.75], [1.0, 0.0]]).unwrap();
        let y = pseudo_labels(&[&t1, &t2], &w).unwrap();
        assert_eq!(y.as_slice(), &[0.25, 0.75, 0.5, 0.5]);
    }

    #[test]
    fn avg_and_random_rows_normalized() {
        let arch = MlpArch::new(2, vec![3], 2).unwrap();
        let p = MlpParams::zeros(&arch);
        let t = Teacher {
            arch: &arch,
            params: &p,
            projection: None,
            domain_id: 0,
        };
        let x = Matrix::zeros(4, 2);
        let mut rng = Rng::seed_from_u64(1);
        let avg = sample_weights(Weighting::Avg, &[t, t, t], &x, None, None, &mut rng).unwrap();
        assert!(avg.as_slice().iter().all(|&v| v == 1.0 / 3.0));
        let rnd = sample_weights(Weighting::Random, &[t, t, t], &x, None, None, &mut rng).unwrap();
        for r in 0..4 {
            assert!((rnd.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(sample_weights(Weighting::Soft, &[t], &x, Some(&Matrix::zeros(4, 3)), None, &mut rng).is_err());
        assert!(sample_weights(Weighting::Ceiling, &[t], &x, None, None, &mut rng).is_err());
    }
}
