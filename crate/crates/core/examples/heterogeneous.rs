//! Clients with different hidden widths; the server distills them into one
//! global model.

use fedkd::bench::{Arm, ExperimentConfig};
use fedkd::datagen::build_federation;
use fedkd::federation::Simulation;

const CONFIG: &str = include_str!("../configs/hetero.toml");

fn main() -> fedkd::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let data = build_federation(&cfg.dataset, 0)?;
    for arm in ["feddf", "fedd3a"] {
        let arm: Arm = arm.parse()?;
        let mut sim = Simulation::new(data.clone(), cfg.settings_for(arm), 0)?;
        let archs: Vec<_> = sim.clients.iter().map(|c| c.arch.hidden_dims.clone()).collect();
        sim.run(|r| println!("{} round {:2}: acc {:.4}", arm.label(), r.round, r.mean_accuracy))?;
        println!("client widths {archs:?}");
    }
    Ok(())
}
