//! Shared fixtures for the benchmarks.

use synergy_core::simgen::sample_plate;
use synergy_core::{NoiseFamily, SimScenario, SimulatedPlate};

/// Scenario 3 plate on the default grid, three replicates.
pub fn plate() -> SimulatedPlate {
    sample_plate(&SimScenario::new(3, NoiseFamily::Normal, 3, 1).expect("valid scenario")).expect("simulation")
}
