//! Trains the tanh MLP on one synthetic domain and reports held-out accuracy.

use fedkd::datagen::{make_domain, sample_domain, Geometry};
use fedkd::neural::{accuracy, fit_classifier, forward, MlpArch, MlpParams, Optimizer};
use fedkd::numerics::Rng;

fn main() -> fedkd::Result<()> {
    let geometry = Geometry::default();
    let spec = make_domain(0, 1, 1.0, &geometry)?;
    let mut rng = Rng::seed_from_u64(0);
    let train = sample_domain(&spec, 2000, &mut rng)?;
    let test = sample_domain(&spec, 500, &mut rng)?;
    let arch = MlpArch::new(geometry.input_dim, vec![32, 16], geometry.num_classes)?;
    let mut params = MlpParams::init(&arch, &mut rng);
    let mut opt = Optimizer::new(0.05, 0.9);
    for epoch in 1..=10 {
        let loss = fit_classifier(
            &arch,
            &mut params,
            &train.features,
            &train.labels,
            1,
            64,
            &mut opt,
            &mut rng,
        )?;
        let probs = forward(&arch, &params, &test.features)?.probs;
        println!(
            "epoch {epoch:2}: loss {loss:.4} test acc {:.4}",
            accuracy(&probs, &test.labels)
        );
    }
    Ok(())
}
