use crate::error::{Error, Result};
use crate::numerics::{argmax, cosine, softmax, standardize};
use crate::subspace::projection::ProjectionMatrix;

/// Per-sample teacher mixture over the selected clients.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherWeights {
    pub weights: Vec<f64>,
    /// Affinity of the sample to each client subspace (`r`).
    pub raw_cosines: Vec<f64>,
}

/// Cosine between `feature` and its projection onto the client subspace.
pub fn affinity(p: &ProjectionMatrix, feature: &[f64]) -> Result<f64> {
    if feature.len() != p.dim() {
        return Err(Error::dims(
            "affinity",
            format!("feature of length {} for a {}-dim projector", feature.len(), p.dim()),
        ));
    }
    let projected = p.apply(feature)?;
    cosine(feature, &projected)
}

/// Softmax of the standardized affinities.
///
/// A single projector or identical affinities give uniform weights.
pub fn teacher_weights(projections: &[&ProjectionMatrix], feature: &[f64]) -> Result<TeacherWeights> {
    let first = projections.first().ok_or(Error::EmptyInput("teacher_weights"))?;
    if let Some(bad) = projections.iter().find(|p| p.dim() != first.dim()) {
        return Err(Error::dims(
            "teacher_weights",
            format!("projectors of dimension {} and {}", first.dim(), bad.dim()),
        ));
    }
    let raw = projections
        .iter()
        .map(|p| affinity(p, feature))
        .collect::<Result<Vec<_>>>()?;
    weights_from_affinities(raw)
}

/// Softmax of the standardized affinities `r`.
pub fn weights_from_affinities(raw: Vec<f64>) -> Result<TeacherWeights> {
    let weights = softmax(&standardize(&raw)?)?;
    Ok(TeacherWeights {
        weights,
        raw_cosines: raw,
    })
}

/// Keeps only the heaviest teacher (lowest index on ties).
pub fn onehot_weights(tw: &TeacherWeights) -> TeacherWeights {
    let mut weights = vec![0.0; tw.weights.len()];
    if !weights.is_empty() {
        weights[argmax(&tw.weights)] = 1.0;
    }
    TeacherWeights {
        weights,
        raw_cosines: tw.raw_cosines.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Rng};
    use crate::subspace::projection::{projection_closed_form, projection_iterative};
    use proptest::prelude::*;

    /// Direct evaluation of exp(z_i)/Σexp(z_j) with z = (r − mean)/sd, written
    /// out longhand without the library helpers.
    fn brute_force(r: &[f64]) -> Vec<f64> {
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let z: Vec<f64> = r.iter().map(|x| (x - mean) / var.sqrt()).collect();
        let den: f64 = z.iter().map(|v| v.exp()).sum();
        z.iter().map(|v| v.exp() / den).collect()
    }

    #[test]
    fn eq_weights_reference_values() {
        let oracle = brute_force(&[0.9, 0.5, 0.1]);
        let expected = [0.7245, 0.2129, 0.0626];
        for (o, e) in oracle.iter().zip(expected) {
            assert!((o - e).abs() < 1e-3, "oracle {o} vs {e}");
        }
        let tw = weights_from_affinities(vec![0.9, 0.5, 0.1]).unwrap();
        for (w, o) in tw.weights.iter().zip(&oracle) {
            assert!((w - o).abs() < 1e-12);
        }
    }

    #[test]
    fn single_projector_gets_everything() {
        let p = projection_iterative(2, [&[1.0, 0.0][..]], 0.01).unwrap();
        let tw = teacher_weights(&[&p], &[0.3, 0.4]).unwrap();
        assert_eq!(tw.weights, vec![1.0]);
    }

    #[test]
    fn constant_affinities_are_uniform() {
        let tw = weights_from_affinities(vec![0.4; 4]).unwrap();
        assert!(tw.weights.iter().all(|&w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn affinity_cases() {
        let z = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let p = projection_closed_form(&z, 1e-3).unwrap();
        assert!(affinity(&p, &[0.6, -0.8, 0.0]).unwrap() >= 0.99);
        assert!(affinity(&p, &[0.0, 0.0, 2.0]).unwrap().abs() < 1e-12);
        assert_eq!(affinity(&p, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(affinity(&p, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn onehot_examples() {
        let tw = TeacherWeights {
            weights: vec![0.7, 0.2, 0.1],
            raw_cosines: vec![0.0; 3],
        };
        assert_eq!(onehot_weights(&tw).weights, vec![1.0, 0.0, 0.0]);
        let tie = TeacherWeights {
            weights: vec![0.5, 0.5],
            raw_cosines: vec![0.0; 2],
        };
        let oh = onehot_weights(&tie);
        assert_eq!(oh.weights, vec![1.0, 0.0]);
        assert_eq!(oh.weights.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn mismatched_projector_dims() {
        let a = projection_iterative(2, std::iter::empty(), 0.1).unwrap();
        let b = projection_iterative(3, std::iter::empty(), 0.1).unwrap();
        assert!(teacher_weights(&[&a, &b], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn orthogonal_subspaces_separate() {
        let mut rng = Rng::seed_from_u64(9);
        let d = 8;
        let mut client = |dims: std::ops::Range<usize>| {
            let rows: Vec<Vec<f64>> = (0..40)
                .map(|_| {
                    let mut v = vec![0.0; d];
                    for j in dims.clone() {
                        v[j] = rng.standard_normal();
                    }
                    let n = crate::numerics::norm(&v);
                    v.iter().map(|x| x / n).collect()
                })
                .collect();
            projection_closed_form(&Matrix::from_rows(&rows).unwrap(), 1e-2).unwrap()
        };
        let p1 = client(0..4);
        let p2 = client(4..8);
        let probe = [0.5, -0.3, 0.7, 0.1, 0.0, 0.0, 0.0, 0.0];
        let tw = teacher_weights(&[&p1, &p2], &probe).unwrap();
        // two standardized scores are always +-1, so the cap is e/(e + 1/e)
        assert!(tw.weights[0] > 0.88, "{:?}", tw.weights);
        assert!(tw.raw_cosines[0] > 0.99 && tw.raw_cosines[1] < 0.1);
    }

    proptest! {
        #[test]
        fn invariant_to_shift_and_equivariant_to_permutation(
            r in prop::collection::vec(-1.0f64..1.0, 2..8),
            shift in -0.5f64..0.5,
            rot in 0usize..8,
        ) {
            let base = weights_from_affinities(r.clone()).unwrap();
            let shifted = weights_from_affinities(r.iter().map(|x| x + shift).collect()).unwrap();
            for (a, b) in base.weights.iter().zip(&shifted.weights) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let k = rot % r.len();
            let mut perm = r.clone();
            perm.rotate_left(k);
            let pw = weights_from_affinities(perm).unwrap();
            let mut expect = base.weights.clone();
            expect.rotate_left(k);
            for (a, b) in pw.weights.iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((base.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
