use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Symmetry tolerance accepted for a projection matrix.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// How the accumulated inverse `P̂ ≈ (αI + ZᵀZ)⁻¹` becomes the projector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    /// `P = I − α·P̂`, which equals `Zᵀ(ZZᵀ + αI)⁻¹Z` exactly.
    #[default]
    Scaled,
    /// `P = I − P̂`; only a projector when `α = 1`. Kept for comparison runs.
    Unscaled,
}

/// Which vectors feed the rank-one recursion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Accumulation {
    /// Every feature row is one update.
    #[default]
    PerSample,
    /// Each update is the mean of `batch_size` consecutive rows.
    BatchMean { batch_size: usize },
}

/// Damped orthogonal projector onto the span of a client's features.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    p: Matrix,
    ridge_alpha: f64,
    sample_count: u64,
}

impl ProjectionMatrix {
    /// Wraps `p`, checking it is square, finite and symmetric.
    pub fn new(p: Matrix, ridge_alpha: f64, sample_count: u64) -> Result<Self> {
        if p.rows() != p.cols() {
            return Err(Error::dims(
                "ProjectionMatrix",
                format!("{}x{} is not square", p.rows(), p.cols()),
            ));
        }
        if !p.is_finite() {
            return Err(Error::NonFinite { op: "ProjectionMatrix" });
        }
        if !p.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::InvalidArgument("projection matrix is not symmetric".into()));
        }
        if !(ridge_alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ridge_alpha must be positive, got {ridge_alpha}"
            )));
        }
        Ok(Self {
            p,
            ridge_alpha,
            sample_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.p.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn ridge_alpha(&self) -> f64 {
        self.ridge_alpha
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// `P · v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.p.mat_vec(v)
    }
}

/// Rank-one (Sherman–Morrison) accumulator for `P̂ = (αI + Σ zzᵀ)⁻¹`.
#[derive(Clone, Debug)]
pub struct ProjectionBuilder {
    inv: Matrix,
    ridge_alpha: f64,
    count: u64,
    scratch: Vec<f64>,
}

impl ProjectionBuilder {
    pub fn new(dim: usize, ridge_alpha: f64) -> Result<Self> {
        if !(ridge_alpha > 0.0) || !ridge_alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ridge_alpha must be positive and finite, got {ridge_alpha}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("projection dimension is zero".into()));
        }
        Ok(Self {
            inv: Matrix::identity(dim).scale(1.0 / ridge_alpha),
            ridge_alpha,
            count: 0,
            scratch: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.inv.rows()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `P̂ ← P̂ − P̂zzᵀP̂ / (1 + zᵀP̂z)`.
    pub fn push(&mut self, z: &[f64]) -> Result<()> {
        let d = self.dim();
        if z.len() != d {
            return Err(Error::dims(
                "projection update",
                format!("vector of length {} in a {d}-dimensional stream", z.len()),
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "projection update",
            });
        }
        let u = &mut self.scratch;
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = crate::numerics::dot(self.inv.row(i), z);
        }
        let denom = 1.0 + crate::numerics::dot(z, u);
        let data = self.inv.as_mut_slice();
        for i in 0..d {
            let ui = u[i] / denom;
            if ui == 0.0 {
                continue;
            }
            for (x, uj) in data[i * d..(i + 1) * d].iter_mut().zip(u.iter()) {
                *x -= ui * uj;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// The current `P̂`.
    pub fn inverse(&self) -> &Matrix {
        &self.inv
    }

    pub fn finish(&self, variant: ProjectionVariant) -> ProjectionMatrix {
        let d = self.dim();
        let scale = match variant {
            ProjectionVariant::Scaled => self.ridge_alpha,
            ProjectionVariant::Unscaled => 1.0,
        };
        let mut p = self.inv.scale(-scale);
        for i in 0..d {
            p[(i, i)] += 1.0;
        }
        p.symmetrize();
        ProjectionMatrix {
            p,
            ridge_alpha: self.ridge_alpha,
            sample_count: self.count,
        }
    }
}

/// Iterative projector from a stream of feature vectors (per-sample updates).
pub fn projection_iterative<'a, I>(dim: usize, vectors: I, ridge_alpha: f64) -> Result<ProjectionMatrix>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut b = ProjectionBuilder::new(dim, ridge_alpha)?;
    for v in vectors {
        b.push(v)?;
    }
    Ok(b.finish(ProjectionVariant::Scaled))
}

/// Projector from the rows of `z` with the chosen accumulation and variant.
pub fn projection_from_features(
    z: &Matrix,
    ridge_alpha: f64,
    accumulation: Accumulation,
    variant: ProjectionVariant,
) -> Result<ProjectionMatrix> {
    let mut b = ProjectionBuilder::new(z.cols(), ridge_alpha)?;
    match accumulation {
        Accumulation::PerSample => {
            for r in 0..z.rows() {
                b.push(z.row(r))?;
            }
        }
        Accumulation::BatchMean { batch_size } => {
            if batch_size == 0 {
                return Err(Error::InvalidArgument("batch_size must be positive".into()));
            }
            let rows: Vec<usize> = (0..z.rows()).collect();
            let mut mean = vec![0.0; z.cols()];
            for chunk in rows.chunks(batch_size) {
                mean.iter_mut().for_each(|m| *m = 0.0);
                for &r in chunk {
                    for (m, v) in mean.iter_mut().zip(z.row(r)) {
                        *m += v;
                    }
                }
                let inv = 1.0 / chunk.len() as f64;
                mean.iter_mut().for_each(|m| *m *= inv);
                b.push(&mean)?;
            }
        }
    }
    Ok(b.finish(variant))
}

/// Direct evaluation of `Zᵀ(ZZᵀ + αI)⁻¹Z` via a Cholesky solve.
pub fn projection_closed_form(z: &Matrix, ridge_alpha: f64) -> Result<ProjectionMatrix> {
    if z.rows() == 0 {
        return Err(Error::EmptyInput("projection_closed_form"));
    }
    if !(ridge_alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge_alpha must be positive, got {ridge_alpha}"
        )));
    }
    let mut gram = z.matmul_t_unchecked(z);
    for i in 0..gram.rows() {
        gram[(i, i)] += ridge_alpha;
    }
    gram.symmetrize();
    let x = gram.solve_spd(z)?;
    let mut p = z.t_matmul_unchecked(&x);
    p.symmetrize();
    ProjectionMatrix::new(p, ridge_alpha, z.rows() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, rng.normal_vec(r * c, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn empty_stream_is_zero_projector() {
        let p = projection_iterative(4, std::iter::empty(), 0.01).unwrap();
        assert!(p.matrix().max_abs() < 1e-15);
        assert_eq!(p.sample_count(), 0);
    }

    #[test]
    fn single_unit_vector() {
        let e1 = [1.0, 0.0, 0.0];
        let p = projection_iterative(3, [&e1[..]], 0.01).unwrap();
        let m = p.matrix();
        assert!((m[(0, 0)] - 1.0 / 1.01).abs() < 1e-12);
        assert!(m[(1, 1)].abs() < 1e-12 && m[(0, 1)].abs() < 1e-12);
        let closed = projection_closed_form(&Matrix::from_rows(&[e1]).unwrap(), 0.01).unwrap();
        assert!(m.max_abs_diff(closed.matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn zero_features_closed_form() {
        let p = projection_closed_form(&Matrix::zeros(3, 4), 0.01).unwrap();
        assert_eq!(p.matrix().max_abs(), 0.0);
    }

    #[test]
    fn full_span_small_alpha_is_near_identity() {
        let mut rng = Rng::seed_from_u64(2);
        let z = random(&mut rng, 20, 5).scale(10.0);
        let p = projection_closed_form(&z, 1e-6).unwrap();
        assert!(p.matrix().max_abs_diff(&Matrix::identity(5)).unwrap() < 1e-6);
    }

    #[test]
    fn fifty_random_vectors_match_closed_form() {
        let mut rng = Rng::seed_from_u64(3);
        let z = random(&mut rng, 50, 8);
        let it = projection_iterative(8, (0..50).map(|r| z.row(r)), 0.01).unwrap();
        let cf = projection_closed_form(&z, 0.01).unwrap();
        assert!(it.matrix().max_abs_diff(cf.matrix()).unwrap() < 1e-8);
    }

    #[test]
    fn dimension_drift_rejected() {
        let a = [1.0, 2.0];
        let b = [1.0, 2.0, 3.0];
        assert!(projection_iterative(2, [&a[..], &b[..]], 0.1).is_err());
    }

    #[test]
    fn batch_mean_uses_fewer_updates() {
        let mut rng = Rng::seed_from_u64(4);
        let z = random(&mut rng, 70, 4);
        let p = projection_from_features(
            &z,
            0.01,
            Accumulation::BatchMean { batch_size: 32 },
            ProjectionVariant::Scaled,
        )
        .unwrap();
        assert_eq!(p.sample_count(), 3);
        let means: Vec<Vec<f64>> = (0..70)
            .collect::<Vec<_>>()
            .chunks(32)
            .map(|c| {
                (0..4)
                    .map(|j| c.iter().map(|&r| z[(r, j)]).sum::<f64>() / c.len() as f64)
                    .collect()
            })
            .collect();
        let cf = projection_closed_form(&Matrix::from_rows(&means).unwrap(), 0.01).unwrap();
        assert!(p.matrix().max_abs_diff(cf.matrix()).unwrap() < 1e-8);
    }

    #[test]
    fn unscaled_variant_differs_unless_alpha_is_one() {
        let mut rng = Rng::seed_from_u64(5);
        let z = random(&mut rng, 10, 3);
        let scaled = projection_from_features(&z, 1.0, Accumulation::PerSample, ProjectionVariant::Scaled).unwrap();
        let unscaled = projection_from_features(&z, 1.0, Accumulation::PerSample, ProjectionVariant::Unscaled).unwrap();
        assert!(scaled.matrix().max_abs_diff(unscaled.matrix()).unwrap() < 1e-14);
        let unscaled = projection_from_features(&z, 0.1, Accumulation::PerSample, ProjectionVariant::Unscaled).unwrap();
        let scaled = projection_from_features(&z, 0.1, Accumulation::PerSample, ProjectionVariant::Scaled).unwrap();
        // unscaled = I - (I - scaled)/alpha
        let mut expect = Matrix::identity(3);
        for i in 0..3 {
            for j in 0..3 {
                let eye = if i == j { 1.0 } else { 0.0 };
                expect.as_mut_slice()[i * 3 + j] = eye - (eye - scaled.matrix()[(i, j)]) / 0.1;
            }
        }
        assert!(unscaled.matrix().max_abs_diff(&expect).unwrap() < 1e-10);
        assert!(scaled.matrix().max_abs_diff(unscaled.matrix()).unwrap() > 1e-3);
    }
}
