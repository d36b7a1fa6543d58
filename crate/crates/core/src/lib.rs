// SPDX-License-Identifier: Apache-2.0

//! Simulation of blockchain-mediated MEC federation.
//!
//! A permissioned ledger with Clique or QBFT timing carries a federation
//! contract; consumer and provider agents negotiate through it. The same
//! agents also federate over a direct request/response baseline so the
//! negotiation overhead of the ledger can be measured.

pub mod agents;
pub mod codec;
pub mod contract;
pub mod ledger;
pub mod metrics;
pub mod simkernel;
pub mod units;

pub use codec::{Canonical, Digest};
pub use contract::{AnnId, ContractCall, ContractEvent, ContractState, FedBlock, Genesis, Phase};
pub use ledger::{Address, Block, ConsensusAlgorithm, ConsensusConfig, Ledger, Transaction};
pub use metrics::{decompose, AggregateStats, FederationTrace, PhaseBreakdown, TraceRow};
pub use simkernel::{run_scenario, ScenarioConfig, ScenarioFile, ScenarioOutcome, Variant};
pub use units::{Amount, SimDuration, SimTime};
