//! Projection versus prototype domain classification on single-class clients.
//!
//! `cargo run --release --example domain_probe`

use fedkd::bench::{run_experiment, ExperimentConfig, RunOptions};

const CONFIG: &str = include_str!("../configs/probe_domains.toml");

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
