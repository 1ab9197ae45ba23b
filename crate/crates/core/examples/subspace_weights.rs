//! Per-sample teacher weights from client subspace projectors.
//!
//! Three clients draw features from different random subspaces; a probe
//! from client 0's subspace should put most weight on client 0.

use fedkd::numerics::{Matrix, Rng};
use fedkd::subspace::{
    affinity, onehot_weights, projection_from_features, teacher_weights, Accumulation, ProjectionVariant,
};

fn subspace_samples(rng: &mut Rng, basis: &Matrix, n: usize) -> Matrix {
    let coef = Matrix::from_vec(n, basis.rows(), rng.normal_vec(n * basis.rows(), 0.0, 1.0)).unwrap();
    coef.matmul(basis).unwrap()
}

fn main() -> fedkd::Result<()> {
    let (dim, rank) = (16, 3);
    let mut rng = Rng::seed_from_u64(11);
    let bases: Vec<Matrix> = (0..3)
        .map(|_| Matrix::from_vec(rank, dim, rng.normal_vec(rank * dim, 0.0, 1.0)).unwrap())
        .collect();
    let projectors = bases
        .iter()
        .map(|b| {
            let z = subspace_samples(&mut rng, b, 200);
            projection_from_features(&z, 1e-2, Accumulation::PerSample, ProjectionVariant::Scaled)
        })
        .collect::<fedkd::Result<Vec<_>>>()?;
    let refs: Vec<_> = projectors.iter().collect();
    let probe = subspace_samples(&mut rng, &bases[0], 1);
    let tw = teacher_weights(&refs, probe.row(0))?;
    for (i, p) in projectors.iter().enumerate() {
        println!(
            "client {i}: affinity {:.4} weight {:.4}",
            affinity(p, probe.row(0))?,
            tw.weights[i]
        );
    }
    println!("onehot: {:?}", onehot_weights(&tw).weights);
    Ok(())
}
