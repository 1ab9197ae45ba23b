use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::neural::loss::{backward, LossSpec};
use crate::neural::mlp::{MlpArch, MlpParams};
use crate::numerics::{Matrix, Rng};

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `w ← w − lr·v`.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Option<MlpParams>,
}

impl Optimizer {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: None,
        }
    }

    pub fn velocity(&self) -> Option<&MlpParams> {
        self.velocity.as_ref()
    }
}

pub fn sgd_step(params: &mut MlpParams, grads: &MlpParams, opt: &mut Optimizer) -> Result<()> {
    params.check_layout(grads, "sgd_step")?;
    let v = opt.velocity.get_or_insert_with(|| grads.zeros_like());
    params.check_layout(v, "sgd_step velocity")?;
    let (mu, lr) = (opt.momentum, opt.learning_rate);
    for ((w, vi), g) in params.values_mut().zip(v.values_mut()).zip(grads.values()) {
        *vi = mu * *vi + g;
        *w -= lr * *vi;
    }
    if !params.is_finite() {
        return Err(Error::NonFinite { op: "sgd_step" });
    }
    Ok(())
}

/// Cosine decay from `lr0` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64, lr_min: f64) -> f64 {
    let total = total.max(1);
    let frac = t.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * frac).cos())
}

/// Plain supervised training loop with cross-entropy; returns the final
/// epoch's mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn fit_classifier(
    arch: &MlpArch,
    params: &mut MlpParams,
    x: &Matrix,
    labels: &[usize],
    epochs: usize,
    batch_size: usize,
    opt: &mut Optimizer,
    rng: &mut Rng,
) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("fit_classifier"));
    }
    let batch_size = batch_size.max(1);
    let mut last = f64::NAN;
    for _ in 0..epochs {
        let order = rng.permutation(x.rows());
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size) {
            let xb = x.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, g) = backward(arch, params, &xb, &LossSpec::cross_entropy(&yb))?;
            sgd_step(params, &g, opt)?;
            total += loss;
            batches += 1;
        }
        last = total / batches as f64;
    }
    Ok(last)
}
