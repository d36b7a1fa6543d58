// SPDX-License-Identifier: Apache-2.0

//! Discrete-event simulation of federation scenarios.

pub mod config;
pub mod queue;
pub mod rng;
pub mod run;
pub mod topology;

pub use config::{ConcurrencyMode, ConfigError, ScenarioConfig, ScenarioFile, ValidatorPolicy, Variant};
pub use queue::{EventQueue, SchedulingInPast, SimEvent};
pub use rng::{stream, StreamRng};
pub use run::{run_once, run_scenario, RunError, RunRecord, ScenarioOutcome};
pub use topology::{generate_topology, Split, TooFewSystems};
