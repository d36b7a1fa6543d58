// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the criterion benches.

use edgefed_core::simkernel::ScenarioConfig;
use edgefed_core::Variant;

/// Baseline scenario at `n` systems with a single run.
pub fn scenario(n: u32, variant: Variant) -> ScenarioConfig {
    ScenarioConfig::default().with_n_systems(n).expect("reference sizes are valid").with_variant(variant).with_runs(1)
}
