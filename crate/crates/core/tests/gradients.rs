mod common;

use common::{gaussian, gradient_check, loss_cases};
use fedkd::neural::{MlpArch, MlpParams};
use fedkd::numerics::Rng;

const TOL: f64 = 1e-4;

fn check_arch(input: usize, hidden: Vec<usize>, classes: usize, seed: u64) {
    let arch = MlpArch::new(input, hidden, classes).unwrap();
    let mut rng = Rng::seed_from_u64(seed);
    let params = MlpParams::init(&arch, &mut rng);
    let x = gaussian(&mut rng, 7, input);
    for case in loss_cases(&arch, 7, &mut rng) {
        let spec = (case.build)(&case);
        let (worst, probed) = gradient_check(&arch, &params, &x, &spec, 20, &mut rng);
        assert!(probed.iter().all(|&c| c >= 20), "{}: probed {probed:?}", case.name);
        assert!(
            worst < TOL,
            "{} on {:?}: relative error {worst:e}",
            case.name,
            arch.hidden_dims
        );
    }
}

#[test]
fn gradients_match_finite_differences_two_hidden_layers() {
    check_arch(6, vec![8, 5], 4, 1);
}

#[test]
fn gradients_match_finite_differences_one_hidden_layer() {
    check_arch(5, vec![12], 3, 2);
}

#[test]
fn gradients_match_finite_differences_narrow_bottleneck() {
    check_arch(4, vec![2, 9], 5, 3);
}

#[test]
fn gradients_match_finite_differences_wide_output() {
    check_arch(10, vec![16, 16, 8], 10, 4);
}
