//! One-round comparison of Avg, Random, onehot, soft and Ceiling weightings.
//!
//! `cargo run --release --example weighting_ablation`

use fedkd::bench::{run_experiment, ExperimentConfig, RunOptions};

const CONFIG: &str = include_str!("../configs/ablation.toml");

fn main() -> fedkd::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let out = run_experiment(
        &cfg,
        &RunOptions {
            out_dir: None,
            quiet: true,
        },
    )?;
    print!("{}", out.summary.render());
    Ok(())
}
