use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::mlp::{trace, MlpArch, MlpParams};
use crate::numerics::Matrix;

/// Probabilities are clamped to this floor inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Argument order of the distillation divergence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(student ‖ teacher)`, the order used by the distillation objective.
    #[default]
    StudentFirst,
    /// `KL(teacher ‖ student)`, the more common choice in the KD literature.
    TeacherFirst,
}

fn check_probs(a: &Matrix, b: &Matrix, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean negative log-likelihood of the labelled class.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != probs.rows() {
        return Err(Error::dims(
            "cross_entropy",
            format!("{} labels for {} rows", labels.len(), probs.rows()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("cross_entropy"));
    }
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                probs.cols()
            )));
        }
        total -= probs[(r, y)].clamp(PROB_FLOOR, 1.0).ln();
    }
    Ok(total / labels.len() as f64)
}

fn kl_row(s: &[f64], t: &[f64]) -> f64 {
    s.iter()
        .zip(t)
        .map(|(&si, &ti)| {
            let si = si.max(PROB_FLOOR);
            si * (si.ln() - ti.max(PROB_FLOOR).ln())
        })
        .sum()
}

/// Batch mean of `Σ_c s_c ln(s_c / t_c)`.
pub fn kl_div(student: &Matrix, teacher: &Matrix) -> Result<f64> {
    check_probs(student, teacher, "kl_div")?;
    if student.rows() == 0 {
        return Err(Error::EmptyInput("kl_div"));
    }
    let total: f64 = (0..student.rows())
        .map(|r| kl_row(student.row(r), teacher.row(r)))
        .sum();
    Ok(total / student.rows() as f64)
}

/// Distillation divergence in the requested argument order.
pub fn kd_loss(student: &Matrix, teacher: &Matrix, dir: KlDirection) -> Result<f64> {
    match dir {
        KlDirection::StudentFirst => kl_div(student, teacher),
        KlDirection::TeacherFirst => kl_div(teacher, student),
    }
}

/// `(μ/2) Σ ‖w − w_anchor‖²`.
pub fn prox_term(params: &MlpParams, anchor: &MlpParams, mu: f64) -> Result<f64> {
    let d = params.squared_distance(anchor)?;
    Ok(if mu == 0.0 { 0.0 } else { 0.5 * mu * d })
}

/// Ingredients of a composite objective
/// `ce_weight·CE + kd_weight·KL + prox`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossSpec<'a> {
    pub labels: Option<&'a [usize]>,
    pub ce_weight: f64,
    pub teacher: Option<&'a Matrix>,
    pub kd_weight: f64,
    pub kl_direction: KlDirection,
    pub anchor: Option<&'a MlpParams>,
    pub prox_mu: f64,
}

impl<'a> LossSpec<'a> {
    pub fn cross_entropy(labels: &'a [usize]) -> Self {
        Self {
            labels: Some(labels),
            ce_weight: 1.0,
            ..Self::default()
        }
    }

    pub fn distill(teacher: &'a Matrix, dir: KlDirection) -> Self {
        Self {
            teacher: Some(teacher),
            kd_weight: 1.0,
            kl_direction: dir,
            ..Self::default()
        }
    }

    pub fn with_kd(mut self, teacher: &'a Matrix, weight: f64, dir: KlDirection) -> Self {
        self.teacher = Some(teacher);
        self.kd_weight = weight;
        self.kl_direction = dir;
        self
    }

    pub fn with_prox(mut self, anchor: &'a MlpParams, mu: f64) -> Self {
        self.anchor = Some(anchor);
        self.prox_mu = mu;
        self
    }

    fn validate(&self, n: usize, classes: usize) -> Result<()> {
        if self.ce_weight != 0.0 {
            let labels = self.labels.ok_or(Error::MissingLossInput("labels"))?;
            if labels.len() != n {
                return Err(Error::dims(
                    "loss",
                    format!("{} labels for a batch of {n}", labels.len()),
                ));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
                return Err(Error::InvalidArgument(format!(
                    "label {bad} out of range for {classes} classes"
                )));
            }
        }
        if self.kd_weight != 0.0 {
            let t = self.teacher.ok_or(Error::MissingLossInput("teacher probabilities"))?;
            if t.shape() != (n, classes) {
                return Err(Error::dims(
                    "loss",
                    format!("teacher probs {:?}, expected ({n}, {classes})", t.shape()),
                ));
            }
        }
        if self.prox_mu != 0.0 && self.anchor.is_none() {
            return Err(Error::MissingLossInput("proximal anchor"));
        }
        Ok(())
    }
}

/// Objective value for `spec` at `params`.
pub fn loss_value(arch: &MlpArch, params: &MlpParams, x: &Matrix, spec: &LossSpec<'_>) -> Result<f64> {
    let t = trace(arch, params, x)?;
    spec.validate(x.rows(), arch.num_classes)?;
    objective(params, &t.probs, spec)
}

fn objective(params: &MlpParams, probs: &Matrix, spec: &LossSpec<'_>) -> Result<f64> {
    let mut total = 0.0;
    if spec.ce_weight != 0.0 {
        total += spec.ce_weight * cross_entropy(probs, spec.labels.unwrap())?;
    }
    if spec.kd_weight != 0.0 {
        total += spec.kd_weight * kd_loss(probs, spec.teacher.unwrap(), spec.kl_direction)?;
    }
    if spec.prox_mu != 0.0 {
        total += prox_term(params, spec.anchor.unwrap(), spec.prox_mu)?;
    }
    Ok(total)
}

/// Analytic gradient of the batch-mean objective, plus the objective value.
pub fn backward(arch: &MlpArch, params: &MlpParams, x: &Matrix, spec: &LossSpec<'_>) -> Result<(f64, MlpParams)> {
    let t = trace(arch, params, x)?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyInput("backward"));
    }
    spec.validate(n, arch.num_classes)?;
    let value = objective(params, &t.probs, spec)?;

    // dL/dlogits
    let probs = &t.probs;
    let c = arch.num_classes;
    let inv_n = 1.0 / n as f64;
    let mut delta = Matrix::zeros(n, c);
    for r in 0..n {
        let s = probs.row(r);
        let d = delta.row_mut(r);
        if spec.ce_weight != 0.0 {
            let y = spec.labels.unwrap()[r];
            let w = spec.ce_weight * inv_n;
            for (j, dj) in d.iter_mut().enumerate() {
                *dj += w * (s[j] - if j == y { 1.0 } else { 0.0 });
            }
        }
        if spec.kd_weight != 0.0 {
            let tr = spec.teacher.unwrap().row(r);
            let w = spec.kd_weight * inv_n;
            match spec.kl_direction {
                KlDirection::StudentFirst => {
                    // d/dz_j Σ s ln(s/t) = s_j (ln(s_j/t_j) − Σ_c s_c ln(s_c/t_c))
                    let logs: Vec<f64> = s
                        .iter()
                        .zip(tr)
                        .map(|(&si, &ti)| si.max(PROB_FLOOR).ln() - ti.max(PROB_FLOOR).ln())
                        .collect();
                    let inner: f64 = s.iter().zip(&logs).map(|(si, l)| si * l).sum();
                    for (j, dj) in d.iter_mut().enumerate() {
                        *dj += w * s[j] * (logs[j] - inner);
                    }
                }
                KlDirection::TeacherFirst => {
                    let tsum: f64 = tr.iter().sum();
                    for (j, dj) in d.iter_mut().enumerate() {
                        *dj += w * (s[j] * tsum - tr[j]);
                    }
                }
            }
        }
    }

    let mut grads = params.zeros_like();
    let n_layers = params.layers.len();
    for l in (0..n_layers).rev() {
        let input = &t.acts[l];
        let g = &mut grads.layers[l];
        g.weights = input.t_matmul_unchecked(&delta);
        for r in 0..n {
            for (b, v) in g.bias.iter_mut().zip(delta.row(r)) {
                *b += v;
            }
        }
        if l > 0 {
            let mut next = delta.matmul_t_unchecked(&params.layers[l].weights);
            // tanh'(z) = 1 − a²
            for (v, a) in next.as_mut_slice().iter_mut().zip(input.as_slice()) {
                *v *= 1.0 - a * a;
            }
            delta = next;
        }
    }

    if spec.prox_mu != 0.0 {
        let anchor = spec.anchor.unwrap();
        params.check_layout(anchor, "prox gradient")?;
        for ((g, w), a) in grads.values_mut().zip(params.values()).zip(anchor.values()) {
            *g += spec.prox_mu * (w - a);
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite { op: "backward" });
    }
    Ok((value, grads))
}
