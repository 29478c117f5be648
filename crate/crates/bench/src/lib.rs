//! Shared fixtures for the pipeline benchmarks.

use lpreform_core::datagen::{generate_instance, ScenarioSpec};
use lpreform_core::lp::LpInstance;
use lpreform_core::simplex::SolverConfig;

/// Instance `index` of the desk-scale item placement scenario.
pub fn desk_instance(index: usize) -> LpInstance {
    let spec = ScenarioSpec::desk_item_placement(2024, index + 1);
    generate_instance(&spec, index, &SolverConfig::default())
        .expect("desk instances generate")
        .lp
}
