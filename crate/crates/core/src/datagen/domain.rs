use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix, Rng};

const TAG_BASE: u64 = 0xB45E;
const TAG_DOMAIN: u64 = 0xD0_0000;

/// Shared class geometry for every domain generated from one base seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub num_classes: usize,
    pub input_dim: usize,
    /// Norm of each class mean.
    pub class_separation: f64,
    /// Within-class Gaussian noise added before the domain transform;
    /// isotropic, or confined to the latent subspace when `latent_dim > 0`.
    pub noise_std: f64,
    /// Dimension of the shared subspace holding class means and noise;
    /// `0` uses the full input space.
    pub latent_dim: usize,
    /// Isotropic noise on top of the latent-subspace data.
    pub ambient_noise: f64,
    pub label_flip_prob: f64,
    /// Norm of the domain shift at discrepancy level 1.
    pub shift_scale: f64,
    /// Number of disjoint 2-planes rotated by the domain transform;
    /// `0` rotates every plane of a random orthonormal pairing.
    pub rotation_planes: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            num_classes: 10,
            input_dim: 32,
            class_separation: 3.0,
            noise_std: 0.5,
            latent_dim: 0,
            ambient_noise: 0.0,
            label_flip_prob: 0.0,
            shift_scale: 1.0,
            rotation_planes: 0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.input_dim < 2 {
            return Err(Error::Config(format!(
                "geometry needs >= 2 classes and >= 2 input dims (got {} / {})",
                self.num_classes, self.input_dim
            )));
        }
        if !(0.0..0.5).contains(&self.label_flip_prob) {
            return Err(Error::Config(format!(
                "label_flip_prob must lie in [0, 0.5), got {}",
                self.label_flip_prob
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.class_separation >= 0.0) || !(self.ambient_noise >= 0.0) {
            return Err(Error::Config("noise levels and class_separation must be >= 0".into()));
        }
        if self.latent_dim > self.input_dim {
            return Err(Error::Config(format!(
                "latent_dim {} exceeds input_dim {}",
                self.latent_dim, self.input_dim
            )));
        }
        if self.rotation_planes > self.input_dim / 2 {
            return Err(Error::Config(format!(
                "rotation_planes {} exceeds input_dim/2 = {}",
                self.rotation_planes,
                self.input_dim / 2
            )));
        }
        Ok(())
    }
}

/// `x ↦ linear·x + shift` with an orthogonal linear part.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineTransform {
    pub linear: Matrix,
    pub shift: Vec<f64>,
}

impl AffineTransform {
    pub fn identity(d: usize) -> Self {
        Self {
            linear: Matrix::identity(d),
            shift: vec![0.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.linear.mat_vec(x).expect("transform dimension");
        for (v, s) in y.iter_mut().zip(&self.shift) {
            *v += s;
        }
        y
    }

    /// Largest entry of `LᵀL − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let l = &self.linear;
        l.t_matmul_unchecked(l)
            .max_abs_diff(&Matrix::identity(l.rows()))
            .unwrap_or(f64::INFINITY)
    }
}

/// One generative domain: shared class means pushed through a
/// domain-specific rotation and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub domain_id: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    /// `num_classes x input_dim`, before the transform.
    pub class_means: Matrix,
    /// Optional per-class orthonormal row bases; samples get
    /// `class_spread · g·basis` of extra within-class variation.
    pub class_bases: Vec<Matrix>,
    pub class_spread: f64,
    pub transform: AffineTransform,
    pub noise_std: f64,
    pub label_flip_prob: f64,
}

/// Gram–Schmidt on Gaussian draws: `k` orthonormal vectors in `R^d`.
pub(crate) fn random_orthonormal(rng: &mut Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = rng.normal_vec(d, 0.0, 1.0);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Rotation by `theta` in the planes spanned by consecutive pairs of `basis`.
fn plane_rotation(d: usize, basis: &[Vec<f64>], planes: usize, theta: f64) -> Matrix {
    let mut r = Matrix::identity(d);
    let (c, s) = (theta.cos(), theta.sin());
    for p in 0..planes {
        let (a, b) = (&basis[2 * p], &basis[2 * p + 1]);
        for i in 0..d {
            for j in 0..d {
                r[(i, j)] += (c - 1.0) * (a[i] * a[j] + b[i] * b[j]) + s * (b[i] * a[j] - a[i] * b[j]);
            }
        }
    }
    r
}

/// Class means and, for a latent geometry, the shared latent basis.
fn base_class_means(base_seed: u64, g: &Geometry) -> (Matrix, Option<Matrix>) {
    let mut rng = Rng::derive(base_seed, TAG_BASE);
    let latent = (g.latent_dim > 0).then(|| {
        let rows = random_orthonormal(&mut rng, g.latent_dim, g.input_dim);
        Matrix::from_rows(&rows).expect("orthonormal rows")
    });
    let mut m = Matrix::zeros(g.num_classes, g.input_dim);
    for c in 0..g.num_classes {
        let v = match &latent {
            None => rng.normal_vec(g.input_dim, 0.0, 1.0),
            Some(u) => {
                let coef = rng.normal_vec(g.latent_dim, 0.0, 1.0);
                u.t_matmul_unchecked(&Matrix::from_vec(g.latent_dim, 1, coef).expect("column"))
                    .into_vec()
            }
        };
        let n = norm(&v).max(1e-12);
        for (dst, x) in m.row_mut(c).iter_mut().zip(&v) {
            *dst = x / n * g.class_separation;
        }
    }
    (m, latent)
}

/// Domain `domain_id` of the family seeded by `base_seed`.
///
/// The rotation angle is `discrepancy_level · π/2` and the shift norm is
/// `discrepancy_level · shift_scale`; level 0 is the identity.
pub fn make_domain(
    base_seed: u64,
    domain_id: usize,
    discrepancy_level: f64,
    geometry: &Geometry,
) -> Result<DomainSpec> {
    geometry.validate()?;
    if !discrepancy_level.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "discrepancy_level must be finite, got {discrepancy_level}"
        )));
    }
    let d = geometry.input_dim;
    let mut rng = Rng::derive(base_seed, TAG_DOMAIN + domain_id as u64);
    let transform = if discrepancy_level == 0.0 {
        AffineTransform::identity(d)
    } else {
        let basis = random_orthonormal(&mut rng, d, d);
        let planes = match geometry.rotation_planes {
            0 => d / 2,
            p => p,
        };
        let linear = plane_rotation(d, &basis, planes, discrepancy_level * FRAC_PI_2);
        let dir = random_orthonormal(&mut rng, 1, d).remove(0);
        let shift = dir
            .iter()
            .map(|x| x * discrepancy_level * geometry.shift_scale)
            .collect();
        AffineTransform { linear, shift }
    };
    let (class_means, latent) = base_class_means(base_seed, geometry);
    let (class_bases, class_spread, noise_std) = match latent {
        Some(u) => (
            vec![u; geometry.num_classes],
            geometry.noise_std,
            geometry.ambient_noise,
        ),
        None => (Vec::new(), 0.0, geometry.noise_std),
    };
    Ok(DomainSpec {
        domain_id,
        num_classes: geometry.num_classes,
        input_dim: d,
        class_means,
        class_bases,
        class_spread,
        transform,
        noise_std,
        label_flip_prob: geometry.label_flip_prob,
    })
}

/// Domain whose classes occupy mutually orthogonal subspaces.
///
/// Every class shares the offset `common`, gets a small class-specific mean
/// of norm `mean_scale` inside its own `subspace_dim`-dimensional subspace,
/// and varies with std `spread` along that subspace. Class means are close
/// to each other while the subspaces are disjoint.
pub fn make_subspace_domain(
    base_seed: u64,
    num_classes: usize,
    input_dim: usize,
    subspace_dim: usize,
    mean_scale: f64,
    spread: f64,
    noise_std: f64,
) -> Result<DomainSpec> {
    if num_classes * subspace_dim + 1 > input_dim {
        return Err(Error::InvalidArgument(format!(
            "{num_classes} classes x {subspace_dim} dims (+1 offset) do not fit in {input_dim} dims"
        )));
    }
    let mut rng = Rng::derive(base_seed, TAG_BASE ^ 0x5005);
    let basis = random_orthonormal(&mut rng, num_classes * subspace_dim + 1, input_dim);
    let common = &basis[num_classes * subspace_dim];
    let mut class_means = Matrix::zeros(num_classes, input_dim);
    let mut class_bases = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let rows = &basis[c * subspace_dim..(c + 1) * subspace_dim];
        for (j, m) in class_means.row_mut(c).iter_mut().enumerate() {
            *m = common[j] + mean_scale * rows[0][j];
        }
        class_bases.push(Matrix::from_rows(rows)?);
    }
    Ok(DomainSpec {
        domain_id: 0,
        num_classes,
        input_dim,
        class_means,
        class_bases,
        class_spread: spread,
        transform: AffineTransform::identity(input_dim),
        noise_std,
        label_flip_prob: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cosine;

    #[test]
    fn level_zero_is_identity() {
        let d = make_domain(1, 3, 0.0, &Geometry::default()).unwrap();
        assert_eq!(d.transform, AffineTransform::identity(32));
    }

    #[test]
    fn deterministic_per_seed_and_id() {
        let g = Geometry::default();
        assert_eq!(make_domain(5, 2, 0.7, &g).unwrap(), make_domain(5, 2, 0.7, &g).unwrap());
        assert_ne!(
            make_domain(5, 2, 0.7, &g).unwrap().transform,
            make_domain(5, 3, 0.7, &g).unwrap().transform
        );
    }

    #[test]
    fn transform_is_orthogonal() {
        for planes in [0, 1, 3] {
            let g = Geometry {
                rotation_planes: planes,
                ..Geometry::default()
            };
            let d = make_domain(8, 1, 0.6, &g).unwrap();
            assert!(d.transform.orthogonality_error() < 1e-9);
        }
    }

    #[test]
    fn full_rotation_angle_is_uniform() {
        let g = Geometry::default();
        let d = make_domain(2, 1, 0.5, &g).unwrap();
        let v: Vec<f64> = d.class_means.row(0).to_vec();
        let rv = d.transform.linear.mat_vec(&v).unwrap();
        assert!((cosine(&v, &rv).unwrap() - (std::f64::consts::FRAC_PI_4).cos()).abs() < 1e-9);
    }

    #[test]
    fn latent_samples_stay_in_rotated_subspace() {
        let g = Geometry {
            latent_dim: 3,
            ..Geometry::default()
        };
        let d = make_domain(4, 1, 1.0, &g).unwrap();
        let u = &d.class_bases[0];
        let set = crate::datagen::sample_domain(&d, 50, &mut Rng::seed_from_u64(1)).unwrap();
        // undo the transform, then the residual outside span(U) must vanish
        for i in 0..set.len() {
            let y: Vec<f64> = set
                .features
                .row(i)
                .iter()
                .zip(&d.transform.shift)
                .map(|(a, b)| a - b)
                .collect();
            let x = d
                .transform
                .linear
                .t_matmul_unchecked(&Matrix::from_vec(32, 1, y).unwrap());
            let coef = u.matmul_unchecked(&x);
            let back = u.t_matmul_unchecked(&coef);
            assert!(back.max_abs_diff(&x).unwrap() < 1e-9);
        }
    }

    #[test]
    fn subspace_domain_rejects_overfull_layout() {
        assert!(make_subspace_domain(1, 10, 20, 2, 0.1, 1.0, 0.0).is_err());
        let d = make_subspace_domain(1, 10, 32, 3, 0.1, 1.0, 0.0).unwrap();
        assert_eq!(d.class_bases.len(), 10);
    }
}
