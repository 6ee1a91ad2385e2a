#![allow(dead_code)]

use bursthads_cli::{ExperimentConfig, Strategy};

pub const REFERENCE_SETUP: &str = include_str!("../../examples/reference_setup.toml");

pub fn reference_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(REFERENCE_SETUP).expect("reference configuration loads")
}

/// The reference setup cut down for quick runs: fewer tasks and a shorter search.
pub fn quick_config(tasks: u32) -> ExperimentConfig {
    let text = REFERENCE_SETUP
        .replace("count = 60", &format!("count = {tasks}"))
        .replace("max_iteration = 200", "max_iteration = 20")
        .replace("max_attempt = 50", "max_attempt = 10");
    ExperimentConfig::from_toml(&text).unwrap()
}

pub fn only(mut cfg: ExperimentConfig, strategies: &[Strategy], scenarios: &[&str], replications: u32) -> ExperimentConfig {
    cfg.strategies = strategies.to_vec();
    cfg.scenarios.retain(|s| scenarios.contains(&s.name.as_str()));
    cfg.replications = replications;
    cfg
}
