//! Shared fixtures for the benchmarks.

use formation_cli::config::Scenario;
use formation_cli::RunConfig;

/// Noise-free corridor run with the default design.
pub fn corridor_scenario() -> (RunConfig, Scenario) {
    let mut cfg = RunConfig::corridor();
    cfg.simulation.noise_free = true;
    let scenario = cfg.scenario().expect("default corridor is valid");
    (cfg, scenario)
}
