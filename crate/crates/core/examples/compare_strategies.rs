//! FedAvg, FedDF and FedD3A on the same cross-silo federation, driven
//! directly through the simulation API.

use fedkd::bench::{Arm, ExperimentConfig};
use fedkd::datagen::build_federation;
use fedkd::federation::Simulation;

const CONFIG: &str = include_str!("../configs/cross_silo.toml");

fn main() -> fedkd::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let seed = 0;
    let data = build_federation(&cfg.dataset, seed)?;
    for arm in ["fedavg", "feddf", "fedd3a"] {
        let arm: Arm = arm.parse()?;
        let mut sim = Simulation::new(data.clone(), cfg.settings_for(arm), seed)?;
        let reports = sim.run(|_| {})?;
        let curve: Vec<String> = reports
            .iter()
            .step_by(5)
            .map(|r| format!("{:.3}", r.mean_accuracy))
            .collect();
        println!(
            "{:7} final {:.4}  every 5 rounds: {}",
            arm.label(),
            reports.last().unwrap().mean_accuracy,
            curve.join(" ")
        );
    }
    Ok(())
}
