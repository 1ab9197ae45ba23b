//! Runs any experiment config and writes `metrics.jsonl` and `summary.csv`.
//!
//! `cargo run --release --example run_config -- configs/cross_device.toml out`

use fedkd::bench::{load_config, run_experiment, RunOptions};

fn main() -> fedkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/cross_silo.toml".into());
    let out = args.next().unwrap_or_else(|| "out".into());
    let cfg = load_config(&path)?;
    let outcome = run_experiment(
        &cfg,
        &RunOptions {
            out_dir: Some(out.clone().into()),
            quiet: false,
        },
    )?;
    println!(
        "{} rows written to {out}/{}",
        outcome.records.len(),
        cfg.experiment.name
    );
    Ok(())
}
