//! Moves the server pool onto the first client's domain and reports per-domain deltas.
//!
//! `cargo run --release --example server_overlap`

use fedkd::bench::{run_experiment, ExperimentConfig, RunOptions};

const CONFIG: &str = include_str!("../configs/probe_overlap.toml");

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
