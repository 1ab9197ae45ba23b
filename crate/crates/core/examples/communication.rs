//! Per-round upload and download bytes, and the projection overhead ratio.
//!
//! `cargo run --release --example communication`

use fedkd::bench::{run_experiment, ExperimentConfig, RunOptions};

const CONFIG: &str = include_str!("../configs/comm.toml");

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
