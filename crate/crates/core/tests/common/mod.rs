#![allow(dead_code)]

use std::path::PathBuf;

use fedkd::bench::{load_config, ExperimentConfig};
use fedkd::neural::{backward, loss_value, KlDirection, LossSpec, MlpArch, MlpParams};
use fedkd::numerics::{softmax, Matrix, Rng};
use fedkd::subspace::{projection_closed_form, projection_iterative};

pub const FD_STEP: f64 = 1e-5;
/// Absolute floor of the relative-error denominator, so that gradients
/// near zero are judged on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

pub fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    load_config(path).expect("shipped config loads")
}

pub fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, rng.normal_vec(rows * cols, 0.0, 1.0)).unwrap()
}

/// Rows of random probability vectors.
pub fn random_probs(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let logits = rng.normal_vec(cols, 0.0, 1.5);
        m.row_mut(r).copy_from_slice(&softmax(&logits).unwrap());
    }
    m
}

/// Named loss setups covering every objective term and their combinations.
pub struct LossCase {
    pub name: &'static str,
    pub labels: Vec<usize>,
    pub teacher: Matrix,
    pub anchor: MlpParams,
    pub build: fn(&LossCase) -> LossSpec<'_>,
}

pub fn loss_cases(arch: &MlpArch, n: usize, rng: &mut Rng) -> Vec<LossCase> {
    let labels: Vec<usize> = (0..n).map(|_| rng.index(arch.num_classes)).collect();
    let teacher = random_probs(rng, n, arch.num_classes);
    let anchor = MlpParams::init(arch, rng);
    let mk = |name, build| LossCase {
        name,
        labels: labels.clone(),
        teacher: teacher.clone(),
        anchor: anchor.clone(),
        build,
    };
    vec![
        mk("cross_entropy", |c| LossSpec::cross_entropy(&c.labels)),
        mk("kl_student_first", |c| {
            LossSpec::distill(&c.teacher, KlDirection::StudentFirst)
        }),
        mk("kl_teacher_first", |c| {
            LossSpec::distill(&c.teacher, KlDirection::TeacherFirst)
        }),
        mk("prox", |c| {
            let mut s = LossSpec::cross_entropy(&c.labels);
            s.ce_weight = 0.0;
            s.labels = None;
            s.with_prox(&c.anchor, 0.3)
        }),
        mk("ce_plus_prox", |c| {
            LossSpec::cross_entropy(&c.labels).with_prox(&c.anchor, 0.1)
        }),
        mk("ce_plus_kd", |c| {
            LossSpec::cross_entropy(&c.labels).with_kd(&c.teacher, 0.5, KlDirection::StudentFirst)
        }),
        mk("ce_kd_prox", |c| {
            LossSpec::cross_entropy(&c.labels)
                .with_kd(&c.teacher, 0.7, KlDirection::TeacherFirst)
                .with_prox(&c.anchor, 0.05)
        }),
    ]
}

/// Worst relative error over `per_layer` random weight coordinates and
/// every bias of each layer, and the number of coordinates probed per layer.
pub fn gradient_check(
    arch: &MlpArch,
    params: &MlpParams,
    x: &Matrix,
    spec: &LossSpec<'_>,
    per_layer: usize,
    rng: &mut Rng,
) -> (f64, Vec<usize>) {
    let (_, grads) = backward(arch, params, x, spec).unwrap();
    let f = |p: &MlpParams| loss_value(arch, p, x, spec).unwrap();
    let mut worst = 0.0_f64;
    let mut probed = Vec::new();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR);
    for l in 0..params.layers.len() {
        let (rows, cols) = params.layers[l].weights.shape();
        let mut count = 0;
        for _ in 0..per_layer {
            let (i, j) = (rng.index(rows), rng.index(cols));
            let mut plus = params.clone();
            plus.layers[l].weights[(i, j)] += FD_STEP;
            let mut minus = params.clone();
            minus.layers[l].weights[(i, j)] -= FD_STEP;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel(grads.layers[l].weights[(i, j)], numeric));
            count += 1;
        }
        for j in 0..cols {
            let mut plus = params.clone();
            plus.layers[l].bias[j] += FD_STEP;
            let mut minus = params.clone();
            minus.layers[l].bias[j] -= FD_STEP;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel(grads.layers[l].bias[j], numeric));
            count += 1;
        }
        probed.push(count);
    }
    (worst, probed)
}

/// Max-entry difference between the iterative and closed-form projectors.
pub fn projection_gap(n: usize, d: usize, alpha: f64, seed: u64) -> f64 {
    let mut rng = Rng::seed_from_u64(seed);
    let z = gaussian(&mut rng, n, d);
    let iter = projection_iterative(d, (0..n).map(|r| z.row(r)), alpha).unwrap();
    let closed = projection_closed_form(&z, alpha).unwrap();
    iter.matrix().max_abs_diff(closed.matrix()).unwrap()
}
