// SPDX-License-Identifier: Apache-2.0

//! Scenario file schema and its validated runtime form.
//!
//! The file is JSON with the sections `topology`, `consensus`, `agents`,
//! `runs`, `seed` and `output`. Every field has a default and unknown keys
//! are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::topology::{generate_topology, Split};
use crate::agents::{default_tariffs, default_time_factor_curve, DeploymentModel, PricingContext, TariffEntry};
use crate::contract::{OverlayEndpoint, ServiceRequirements, SlaTerms, PPM};
use crate::ledger::{ConsensusAlgorithm, DEFAULT_VALIDATION_COST};
use crate::metrics::ExportFormat;
use crate::units::{Amount, SimDuration};

/// Federation variant: blockchain with one of two consensus algorithms, or the direct baseline.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Clique,
    Qbft,
    Soa,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Clique, Variant::Qbft, Variant::Soa];

    pub fn consensus(self) -> Option<ConsensusAlgorithm> {
        match self {
            Variant::Clique => Some(ConsensusAlgorithm::Clique),
            Variant::Qbft => Some(ConsensusAlgorithm::Qbft),
            Variant::Soa => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Clique => "clique",
            Variant::Qbft => "qbft",
            Variant::Soa => "soa",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "clique" => Ok(Variant::Clique),
            "qbft" => Ok(Variant::Qbft),
            "soa" => Ok(Variant::Soa),
            other => Err(format!("unknown variant {other:?} (expected clique, qbft or soa)")),
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcurrencyMode {
    /// Consumers federate one after another.
    Single,
    /// Every consumer announces at the same instant.
    #[default]
    AllConsumersSimultaneous,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorPolicy {
    /// Every provider plus one bootstrap node.
    #[default]
    ProvidersAndBootstrap,
    /// Every system plus the bootstrap node.
    AllSystems,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub n_systems: u32,
    /// Explicit `[consumers, providers]`; derived from `n_systems` when absent.
    pub split: Option<[u32; 2]>,
    pub sweep_n: Vec<u32>,
    pub concurrency_mode: ConcurrencyMode,
    pub validators: ValidatorPolicy,
    pub scenario_timeout_s: f64,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            n_systems: 2,
            split: None,
            sweep_n: vec![2, 10, 15, 25, 30],
            concurrency_mode: ConcurrencyMode::AllConsumersSimultaneous,
            validators: ValidatorPolicy::ProvidersAndBootstrap,
            scenario_timeout_s: 300.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSection {
    pub algorithm: Variant,
    pub block_period_s: f64,
    pub message_delay_s: f64,
    pub validation_cost_s: f64,
    pub max_txs_per_block: Option<usize>,
    /// Variants covered by `sweep`.
    pub variants: Vec<Variant>,
}

impl Default for ConsensusSection {
    fn default() -> Self {
        Self {
            algorithm: Variant::Clique,
            block_period_s: 5.0,
            message_delay_s: 0.05,
            validation_cost_s: DEFAULT_VALIDATION_COST.as_secs_f64(),
            max_txs_per_block: None,
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentSection {
    pub container_start_s: f64,
    pub vxlan_setup_s: f64,
    pub confirm_overhead_s: f64,
    pub sequential_confirmation: bool,
}

impl Default for DeploymentSection {
    fn default() -> Self {
        let d = DeploymentModel::default();
        Self {
            container_start_s: d.container_start.as_secs_f64(),
            vxlan_setup_s: d.vxlan_setup.as_secs_f64(),
            confirm_overhead_s: d.confirm_overhead.as_secs_f64(),
            sequential_confirmation: d.sequential_confirmation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingSection {
    pub tariffs: Vec<TariffEntry>,
    pub time_factor_curve: Vec<f64>,
    pub hour_utc: u8,
    pub jitter_fraction: f64,
}

impl Default for PricingSection {
    fn default() -> Self {
        Self {
            tariffs: default_tariffs(),
            time_factor_curve: default_time_factor_curve().to_vec(),
            hour_utc: 12,
            jitter_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlaSection {
    pub min_availability: f64,
    pub max_latency_ms: u32,
    pub penalty: f64,
}

impl Default for SlaSection {
    fn default() -> Self {
        Self { min_availability: 0.99, max_latency_ms: 50, penalty: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsumerSection {
    pub funds: f64,
    pub deposit: f64,
    pub attach_time_s: f64,
    pub requirements: ServiceRequirements,
    pub sla: SlaSection,
}

impl Default for ConsumerSection {
    fn default() -> Self {
        Self {
            funds: 100.0,
            deposit: 10.0,
            attach_time_s: 0.5,
            requirements: ServiceRequirements { app_id: "edge-app".into(), replicas: 1, bandwidth_mbps: 100 },
            sla: SlaSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// When enabled, closed federations are settled from reported QoS.
    pub enabled: bool,
    pub availability_range: [f64; 2],
    pub latency_range_ms: [u32; 2],
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { enabled: true, availability_range: [0.98, 1.0], latency_range_ms: [5, 60] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsSection {
    pub reaction_delay_s: f64,
    pub rtt_s: f64,
    pub abstain_probability: f64,
    /// Provider indices that never finish a deployment.
    pub crashed_providers: Vec<u32>,
    pub deployment: DeploymentSection,
    pub pricing: PricingSection,
    pub consumer: ConsumerSection,
    pub oracle: OracleSection,
}

impl Default for AgentsSection {
    fn default() -> Self {
        Self {
            reaction_delay_s: 0.1,
            rtt_s: 0.05,
            abstain_probability: 0.0,
            crashed_providers: Vec::new(),
            deployment: DeploymentSection::default(),
            pricing: PricingSection::default(),
            consumer: ConsumerSection::default(),
            oracle: OracleSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub scenario_id: String,
    pub formats: Vec<ExportFormat>,
    /// Write the chain of the first run as JSON.
    pub chain_dump: bool,
    /// Write the contract events of the first run as JSON lines.
    pub event_log: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            scenario_id: "baseline".into(),
            formats: vec![ExportFormat::Csv, ExportFormat::Jsonl],
            chain_dump: true,
            event_log: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub topology: TopologySection,
    pub consensus: ConsensusSection,
    pub agents: AgentsSection,
    pub runs: u32,
    pub seed: u64,
    pub output: OutputSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            topology: TopologySection::default(),
            consensus: ConsensusSection::default(),
            agents: AgentsSection::default(),
            runs: 20,
            seed: 1,
            output: OutputSection::default(),
        }
    }
}

fn secs(name: &str, v: f64) -> Result<SimDuration, ConfigError> {
    SimDuration::from_secs_f64(v).ok_or_else(|| ConfigError(format!("{name} must be a non-negative number, got {v}")))
}

fn money(name: &str, v: f64) -> Result<Amount, ConfigError> {
    Amount::from_f64(v).ok_or_else(|| ConfigError(format!("{name} must be a non-negative amount, got {v}")))
}

fn fraction_ppm(name: &str, v: f64) -> Result<u32, ConfigError> {
    if !(0.0..=1.0).contains(&v) {
        return invalid(format!("{name} must be within [0, 1], got {v}"));
    }
    Ok((v * f64::from(PPM)).round() as u32)
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validated runtime configuration for the file's own `n_systems` and algorithm.
    pub fn to_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let t = &self.topology;
        let split = match t.split {
            Some([consumers, providers]) => Split { consumers, providers },
            None => generate_topology(t.n_systems).map_err(|e| ConfigError(e.to_string()))?,
        };
        if split.total() != t.n_systems {
            return invalid(format!(
                "split {}+{} does not add up to n_systems {}",
                split.consumers, split.providers, t.n_systems
            ));
        }
        if split.consumers == 0 || split.providers == 0 {
            return invalid("at least one consumer and one provider are required");
        }
        if self.runs == 0 {
            return invalid("runs must be at least 1");
        }
        if t.sweep_n.iter().any(|&n| n < 2) {
            return invalid("sweep_n entries must be at least 2");
        }

        let c = &self.consensus;
        let block_period = secs("block_period_s", c.block_period_s)?;
        if block_period.is_zero() {
            return invalid("block_period_s must be positive");
        }
        if c.max_txs_per_block == Some(0) {
            return invalid("max_txs_per_block must be positive");
        }
        if c.variants.is_empty() {
            return invalid("consensus.variants must not be empty");
        }

        let a = &self.agents;
        if !(0.0..=1.0).contains(&a.abstain_probability) {
            return invalid("abstain_probability must be within [0, 1]");
        }
        if let Some(bad) = a.crashed_providers.iter().find(|&&i| i >= split.providers) {
            return invalid(format!("crashed provider index {bad} out of range (providers: {})", split.providers));
        }
        let curve: [f64; 24] = a
            .pricing
            .time_factor_curve
            .clone()
            .try_into()
            .map_err(|v: Vec<f64>| ConfigError(format!("time_factor_curve needs 24 entries, got {}", v.len())))?;
        let pricing = PricingContext {
            hour_of_day: a.pricing.hour_utc,
            time_factor_curve: curve,
            jitter_fraction: a.pricing.jitter_fraction,
        };
        pricing.validate().map_err(ConfigError)?;
        if a.pricing.tariffs.is_empty() {
            return invalid("tariff table must not be empty");
        }
        if let Some(bad) = a.pricing.tariffs.iter().find(|e| !(e.tariff > 0.0 && e.tariff.is_finite())) {
            return invalid(format!("tariff for {} must be positive", bad.country));
        }

        let cons = &a.consumer;
        let sla = SlaTerms {
            min_availability_ppm: fraction_ppm("sla.min_availability", cons.sla.min_availability)?,
            max_latency_ms: cons.sla.max_latency_ms,
            penalty: money("sla.penalty", cons.sla.penalty)?,
        };
        let deposit = money("deposit", cons.deposit)?;
        if deposit < sla.penalty {
            return invalid("deposit must cover the SLA penalty");
        }
        let consumer_funds = money("funds", cons.funds)?;
        if consumer_funds < deposit {
            return invalid("consumer funds must cover the deposit");
        }
        let o = &a.oracle;
        let availability_ppm = [
            fraction_ppm("oracle.availability_range", o.availability_range[0])?,
            fraction_ppm("oracle.availability_range", o.availability_range[1])?,
        ];
        if availability_ppm[0] > availability_ppm[1] || o.latency_range_ms[0] > o.latency_range_ms[1] {
            return invalid("oracle ranges must be ordered [low, high]");
        }

        Ok(ScenarioConfig {
            scenario_id: self.output.scenario_id.clone(),
            n_systems: t.n_systems,
            split,
            variant: c.algorithm,
            block_period,
            message_delay: secs("message_delay_s", c.message_delay_s)?,
            validation_cost: secs("validation_cost_s", c.validation_cost_s)?,
            max_txs_per_block: c.max_txs_per_block,
            validator_policy: t.validators,
            runs: self.runs,
            seed: self.seed,
            concurrency_mode: t.concurrency_mode,
            scenario_timeout: secs("scenario_timeout_s", t.scenario_timeout_s)?,
            agents: AgentSettings {
                reaction_delay: secs("reaction_delay_s", a.reaction_delay_s)?,
                rtt: secs("rtt_s", a.rtt_s)?,
                abstain_probability: a.abstain_probability,
                crashed_providers: a.crashed_providers.clone(),
                deployment: DeploymentModel {
                    container_start: secs("container_start_s", a.deployment.container_start_s)?,
                    vxlan_setup: secs("vxlan_setup_s", a.deployment.vxlan_setup_s)?,
                    confirm_overhead: secs("confirm_overhead_s", a.deployment.confirm_overhead_s)?,
                    sequential_confirmation: a.deployment.sequential_confirmation,
                },
                attach_time: secs("attach_time_s", cons.attach_time_s)?,
                tariffs: a.pricing.tariffs.clone(),
                pricing,
                consumer_funds,
                deposit,
                sla,
                requirements: cons.requirements.clone(),
                oracle: OracleSettings { enabled: o.enabled, availability_ppm, latency_ms: o.latency_range_ms },
            },
        })
    }

    /// Runtime configurations for every `(n, variant)` sweep cell, in sweep order.
    pub fn sweep_configs(&self) -> Result<Vec<ScenarioConfig>, ConfigError> {
        let base = self.to_config()?;
        let mut out = Vec::new();
        for &n in &self.topology.sweep_n {
            for &variant in &self.consensus.variants {
                out.push(base.with_n_systems(n)?.with_variant(variant));
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSettings {
    pub enabled: bool,
    pub availability_ppm: [u32; 2],
    pub latency_ms: [u32; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentSettings {
    pub reaction_delay: SimDuration,
    pub rtt: SimDuration,
    pub abstain_probability: f64,
    pub crashed_providers: Vec<u32>,
    pub deployment: DeploymentModel,
    pub attach_time: SimDuration,
    pub tariffs: Vec<TariffEntry>,
    pub pricing: PricingContext,
    pub consumer_funds: Amount,
    pub deposit: Amount,
    pub sla: SlaTerms,
    pub requirements: ServiceRequirements,
    pub oracle: OracleSettings,
}

impl AgentSettings {
    pub fn consumer_endpoint(&self, index: u32) -> OverlayEndpoint {
        OverlayEndpoint { ip: format!("10.1.{}.{}", index / 250, index % 250 + 2), udp_port: 4789, vni: 1000 + index }
    }

    pub fn provider_endpoint(&self, index: u32) -> OverlayEndpoint {
        OverlayEndpoint { ip: format!("10.2.{}.{}", index / 250, index % 250 + 2), udp_port: 4789, vni: 2000 + index }
    }
}

/// One experiment, validated and in simulation units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub n_systems: u32,
    pub split: Split,
    pub variant: Variant,
    pub block_period: SimDuration,
    pub message_delay: SimDuration,
    pub validation_cost: SimDuration,
    pub max_txs_per_block: Option<usize>,
    pub validator_policy: ValidatorPolicy,
    pub runs: u32,
    pub seed: u64,
    pub concurrency_mode: ConcurrencyMode,
    pub scenario_timeout: SimDuration,
    pub agents: AgentSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioFile::default().to_config().expect("defaults are valid")
    }
}

impl ScenarioConfig {
    pub fn with_n_systems(&self, n: u32) -> Result<Self, ConfigError> {
        let split = generate_topology(n).map_err(|e| ConfigError(e.to_string()))?;
        if let Some(bad) = self.agents.crashed_providers.iter().find(|&&i| i >= split.providers) {
            return invalid(format!("crashed provider index {bad} out of range for n = {n}"));
        }
        Ok(Self { n_systems: n, split, ..self.clone() })
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self { variant, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_runs(&self, runs: u32) -> Self {
        Self { runs, ..self.clone() }
    }
}
