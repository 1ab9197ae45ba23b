use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, norm};

/// Variance at or below this is treated as degenerate by [`standardize`].
pub const VAR_EPS: f64 = 1e-12;
/// Norms below this make [`cosine`] return its `0` sentinel.
pub const NORM_EPS: f64 = 1e-12;

/// Numerically stable softmax (max is subtracted before exponentiation).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("softmax"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { op: "softmax" });
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Z-scores with population variance; degenerate variance gives all zeros.
pub fn standardize(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("standardize"));
    }
    let m = mean(v);
    let var = variance(v);
    if !(var > VAR_EPS) {
        return Ok(vec![0.0; v.len()]);
    }
    let sd = var.sqrt();
    Ok(v.iter().map(|x| (x - m) / sd).collect())
}

/// Cosine similarity, exactly `0` when either vector is (numerically) zero.
pub fn cosine(u: &[f64], w: &[f64]) -> Result<f64> {
    if u.len() != w.len() {
        return Err(Error::dims("cosine", format!("lengths {} and {}", u.len(), w.len())));
    }
    let (nu, nw) = (norm(u), norm(w));
    if nu < NORM_EPS || nw < NORM_EPS {
        return Ok(0.0);
    }
    Ok((dot(u, w) / (nu * nw)).clamp(-1.0, 1.0))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    (mean(v), variance(v).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let s = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15 && (s[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(&[1000.0, 1001.0]).unwrap(), softmax(&[0.0, 1.0]).unwrap());
        assert!(matches!(softmax(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn standardize_examples() {
        let z = standardize(&[0.9, 0.5, 0.1]).unwrap();
        let e = 1.5f64.sqrt();
        assert!((z[0] - e).abs() < 1e-12 && z[1].abs() < 1e-12 && (z[2] + e).abs() < 1e-12);
        assert_eq!(standardize(&[3.0, 3.0, 3.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(standardize(&[7.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    proptest! {
        #[test]
        fn softmax_normalized(v in prop::collection::vec(-1000.0f64..1000.0, 1..20)) {
            let s = softmax(&v).unwrap();
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn standardize_idempotent(v in prop::collection::vec(-10.0f64..10.0, 2..20)) {
            prop_assume!(variance(&v) > 1e-6);
            let once = standardize(&v).unwrap();
            let twice = standardize(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            u in prop::collection::vec(-5.0f64..5.0, 4),
            w in prop::collection::vec(-5.0f64..5.0, 4),
            a in 0.01f64..100.0,
            b in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&u) > 1e-3 && norm(&w) > 1e-3);
            let c = cosine(&u, &w).unwrap();
            prop_assert!((c - cosine(&w, &u).unwrap()).abs() < 1e-12);
            let us: Vec<f64> = u.iter().map(|x| x * a).collect();
            let ws: Vec<f64> = w.iter().map(|x| x * b).collect();
            prop_assert!((c - cosine(&us, &ws).unwrap()).abs() < 1e-12);
        }
    }
}
