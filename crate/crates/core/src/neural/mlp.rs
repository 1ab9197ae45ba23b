use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_in_place, Matrix, Rng};

/// Feed-forward tanh classifier layout.
///
/// The last hidden layer is the backbone output `B(x)`; one linear layer maps
/// it to class logits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

impl MlpArch {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_dims,
            num_classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidArgument(
                "an MLP needs at least one hidden layer (the backbone)".into(),
            ));
        }
        if self.input_dim == 0 || self.num_classes == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        *self.hidden_dims.last().expect("validated arch")
    }

    /// `(fan_in, fan_out)` for every layer including the classifier head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`; a layer computes `x · W + b`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Gaussian weights with std `1/sqrt(fan_in)`, zero biases.
    pub fn init(arch: &MlpArch, rng: &mut Rng) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| {
                let std = 1.0 / (i as f64).sqrt();
                Layer {
                    weights: Matrix::from_vec(i, o, rng.normal_vec(i * o, 0.0, std)).expect("finite gaussian draws"),
                    bias: vec![0.0; o],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(arch: &MlpArch) -> Self {
        Self {
            layers: arch
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer {
                    weights: Matrix::zeros(i, o),
                    bias: vec![0.0; o],
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights.shape()).collect()
    }

    pub fn same_layout(&self, other: &MlpParams) -> bool {
        self.shapes() == other.shapes()
    }

    pub fn matches(&self, arch: &MlpArch) -> bool {
        self.shapes() == arch.layer_shapes() && self.layers.iter().all(|l| l.bias.len() == l.weights.cols())
    }

    pub(crate) fn check_layout(&self, other: &MlpParams, op: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )))
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// All parameters as a flat iterator (weights then bias, layer by layer).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += a * other`; layouts must already agree.
    pub(crate) fn axpy(&mut self, a: f64, other: &MlpParams) {
        for (x, y) in self.values_mut().zip(other.values()) {
            *x += a * y;
        }
    }

    pub fn squared_distance(&self, other: &MlpParams) -> Result<f64> {
        self.check_layout(other, "squared_distance")?;
        Ok(self.values().zip(other.values()).map(|(a, b)| (a - b) * (a - b)).sum())
    }
}

/// Output of [`forward`].
#[derive(Clone, Debug)]
pub struct Forward {
    /// Backbone output, `n x feature_dim`.
    pub features: Matrix,
    /// Class probabilities, `n x num_classes`.
    pub probs: Matrix,
}

/// Per-layer activations kept for backpropagation. `acts[0]` is the input,
/// `acts[l]` the tanh output of hidden layer `l`, and `probs` the softmax.
pub(crate) struct Trace {
    pub acts: Vec<Matrix>,
    pub probs: Matrix,
}

fn check_input(arch: &MlpArch, params: &MlpParams, x: &Matrix) -> Result<()> {
    if x.cols() != arch.input_dim {
        return Err(Error::dims(
            "forward",
            format!("input has {} columns, arch expects {}", x.cols(), arch.input_dim),
        ));
    }
    if !params.matches(arch) {
        return Err(Error::LayoutMismatch(format!(
            "params {:?} do not match arch {:?}",
            params.shapes(),
            arch.layer_shapes()
        )));
    }
    Ok(())
}

fn affine(x: &Matrix, layer: &Layer) -> Matrix {
    let mut z = x.matmul_unchecked(&layer.weights);
    let cols = z.cols();
    for r in 0..z.rows() {
        for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    debug_assert_eq!(cols, layer.bias.len());
    z
}

pub(crate) fn trace(arch: &MlpArch, params: &MlpParams, x: &Matrix) -> Result<Trace> {
    check_input(arch, params, x)?;
    let n_hidden = arch.hidden_dims.len();
    let mut acts = Vec::with_capacity(n_hidden + 1);
    acts.push(x.clone());
    for layer in &params.layers[..n_hidden] {
        let mut z = affine(acts.last().unwrap(), layer);
        z.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        acts.push(z);
    }
    let mut probs = affine(acts.last().unwrap(), &params.layers[n_hidden]);
    for r in 0..probs.rows() {
        softmax_in_place(probs.row_mut(r));
    }
    if !probs.is_finite() {
        return Err(Error::NonFinite { op: "forward" });
    }
    Ok(Trace { acts, probs })
}

pub fn forward(arch: &MlpArch, params: &MlpParams, x: &Matrix) -> Result<Forward> {
    let mut t = trace(arch, params, x)?;
    let features = t.acts.pop().expect("at least one hidden layer");
    Ok(Forward {
        features,
        probs: t.probs,
    })
}

/// Backbone features only (skips the classifier head).
pub fn features(arch: &MlpArch, params: &MlpParams, x: &Matrix) -> Result<Matrix> {
    check_input(arch, params, x)?;
    let mut a = x.clone();
    for layer in &params.layers[..arch.hidden_dims.len()] {
        a = affine(&a, layer);
        a.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
    }
    Ok(a)
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = (0..probs.rows())
        .filter(|&r| crate::numerics::argmax(probs.row(r)) == labels[r])
        .count();
    hits as f64 / labels.len() as f64
}

/// Weighted mean of parameter bundles; uniform when `weights` is `None`.
pub fn average_params(models: &[&MlpParams], weights: Option<&[f64]>) -> Result<MlpParams> {
    let first = models.first().ok_or(Error::EmptyInput("average_params"))?;
    for m in &models[1..] {
        first.check_layout(m, "average_params")?;
    }
    let uniform;
    let w = match weights {
        Some(w) => {
            if w.len() != models.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} weights for {} models",
                    w.len(),
                    models.len()
                )));
            }
            let s: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "averaging weights must be non-negative and sum to 1 (sum {s})"
                )));
            }
            w
        }
        None => {
            uniform = vec![1.0 / models.len() as f64; models.len()];
            &uniform[..]
        }
    };
    let mut out = first.zeros_like();
    for (m, &wi) in models.iter().zip(w) {
        out.axpy(wi, m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> MlpArch {
        MlpArch::new(3, vec![4], 2).unwrap()
    }

    #[test]
    fn zero_params_give_uniform_probs() {
        let a = MlpArch::new(3, vec![5, 4], 7).unwrap();
        let p = MlpParams::zeros(&a);
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 0.0, 1.0]]).unwrap();
        let f = forward(&a, &p, &x).unwrap();
        for v in f.probs.as_slice() {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
        assert_eq!(f.features.shape(), (2, 4));
    }

    #[test]
    fn hand_checked_logits() {
        // one hidden unit layer of width 2 with identity weights, head = identity
        let a = MlpArch::new(2, vec![2], 2).unwrap();
        let p = MlpParams {
            layers: vec![
                Layer {
                    weights: Matrix::identity(2),
                    bias: vec![0.0, 0.0],
                },
                Layer {
                    weights: Matrix::identity(2),
                    bias: vec![0.0, 0.0],
                },
            ],
        };
        let x = Matrix::from_rows(&[[0.5, -0.25]]).unwrap();
        let f = forward(&a, &p, &x).unwrap();
        let h = [0.5f64.tanh(), (-0.25f64).tanh()];
        assert!((f.features[(0, 0)] - h[0]).abs() < 1e-15);
        let e0 = h[0].exp();
        let e1 = h[1].exp();
        assert!((f.probs[(0, 0)] - e0 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one() {
        let a = MlpArch::new(3, vec![8, 6], 5).unwrap();
        let p = MlpParams::init(&a, &mut Rng::seed_from_u64(2));
        let x = Matrix::from_vec(4, 3, Rng::seed_from_u64(3).normal_vec(12, 0.0, 10.0)).unwrap();
        let f = forward(&a, &p, &x).unwrap();
        for r in 0..4 {
            assert!((f.probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let again = forward(&a, &p, &x).unwrap();
        assert_eq!(f.probs, again.probs);
    }

    #[test]
    fn forward_shape_mismatch() {
        let p = MlpParams::zeros(&arch());
        assert!(forward(&arch(), &p, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn average_examples() {
        let p = MlpParams::init(&arch(), &mut Rng::seed_from_u64(5));
        assert_eq!(average_params(&[&p], None).unwrap(), p);
        let mut neg = p.clone();
        neg.values_mut().for_each(|v| *v = -*v);
        let avg = average_params(&[&p, &neg], None).unwrap();
        assert!(avg.values().all(|&v| v == 0.0));
        let q = MlpParams::init(&arch(), &mut Rng::seed_from_u64(6));
        assert_eq!(average_params(&[&p, &q], Some(&[1.0, 0.0])).unwrap(), p);
    }

    #[test]
    fn average_rejects_heterogeneous() {
        let p = MlpParams::zeros(&arch());
        let q = MlpParams::zeros(&MlpArch::new(3, vec![5], 2).unwrap());
        assert!(matches!(average_params(&[&p, &q], None), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn average_commutes_with_permutation() {
        let mut rng = Rng::seed_from_u64(8);
        let ms: Vec<_> = (0..4).map(|_| MlpParams::init(&arch(), &mut rng)).collect();
        let a = average_params(&[&ms[0], &ms[1], &ms[2], &ms[3]], None).unwrap();
        let b = average_params(&[&ms[2], &ms[0], &ms[3], &ms[1]], None).unwrap();
        for (x, y) in a.values().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
