// SPDX-License-Identifier: Apache-2.0

//! Scenario execution: one discrete-event loop per run, runs in parallel.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ConcurrencyMode, ScenarioConfig, ValidatorPolicy};
use super::queue::EventQueue;
use super::rng::stream;
use crate::agents::{soa_federate, AgentAction, ConsumerProfile, ProviderProfile};
use crate::codec::Digest;
use crate::contract::{AnnId, ContractCall, ContractEvent, ContractState, FedBlock, Genesis};
use crate::ledger::{Address, ConsensusConfig, EventLog, Ledger, LedgerError, Stamped};
use crate::metrics::{aggregate, AggregateStats, FederationTrace, MetricsError, TraceRow};
use crate::units::{Amount, SimTime};

pub const ORACLE_LABEL: &str = "oracle-0";
pub const BOOTSTRAP_LABEL: &str = "bootstrap-0";

pub fn consumer_address(i: u32) -> Address {
    Address::from_label(&format!("consumer-{i}"))
}

pub fn provider_address(j: u32) -> Address {
    Address::from_label(&format!("provider-{j}"))
}

/// Service interval of one deployment job.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JobInterval {
    pub ann_id: AnnId,
    pub arrival: SimTime,
    pub start: SimTime,
    pub done: Option<SimTime>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProviderJobs {
    pub provider: Address,
    pub enqueued: usize,
    pub completed: usize,
    pub jobs: Vec<JobInterval>,
}

/// A transaction the contract refused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub block_height: u64,
    pub tx_id: u64,
    pub sender: Address,
    pub reason: String,
}

/// Everything one run produced besides its traces.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub run: u32,
    pub genesis: Genesis,
    /// Empty for the SOA baseline.
    pub chain: Vec<FedBlock>,
    /// Contract state digest after each block, genesis included.
    pub digests: Vec<Digest>,
    pub events: Vec<Stamped<ContractEvent>>,
    pub initial_funds: Amount,
    pub final_funds: Amount,
    pub rejected: Vec<Rejection>,
    pub providers: Vec<ProviderJobs>,
    pub timed_out: bool,
}

impl RunRecord {
    pub fn funds_conserved(&self) -> bool {
        self.initial_funds == self.final_funds
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    /// Traces of every run, ordered by run then consumer.
    pub traces: Vec<FederationTrace>,
    pub runs: Vec<RunRecord>,
}

impl ScenarioOutcome {
    pub fn rows(&self) -> Vec<TraceRow> {
        let c = &self.config;
        self.traces.iter().map(|t| TraceRow::from_trace(&c.scenario_id, c.variant.as_str(), c.n_systems, t)).collect()
    }

    pub fn aggregate(&self) -> Result<AggregateStats, MetricsError> {
        aggregate(&self.traces)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("ledger setup failed: {0}")]
    Ledger(#[from] LedgerError),
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, RunError> {
    let results: Vec<(Vec<FederationTrace>, RunRecord)> =
        (0..cfg.runs).into_par_iter().map(|run| run_once(cfg, run)).collect::<Result<_, _>>()?;
    let mut traces = Vec::new();
    let mut runs = Vec::with_capacity(results.len());
    for (t, r) in results {
        traces.extend(t);
        runs.push(r);
    }
    Ok(ScenarioOutcome { config: cfg.clone(), traces, runs })
}

/// Executes a single run; `run_scenario` calls this for every run index.
pub fn run_once(cfg: &ScenarioConfig, run: u32) -> Result<(Vec<FederationTrace>, RunRecord), RunError> {
    let (mut traces, record) = match cfg.variant.consensus() {
        Some(_) => ChainRun::new(cfg, run)?.execute(),
        None => soa_run(cfg, run),
    };
    let deadline = SimTime::ZERO + cfg.scenario_timeout;
    for t in &mut traces {
        truncate_after(t, deadline);
    }
    Ok((traces, record))
}

fn truncate_after(t: &mut FederationTrace, deadline: SimTime) {
    for slot in [
        &mut t.announce_submitted,
        &mut t.announce_finalized,
        &mut t.second_bid_finalized,
        &mut t.winner_finalized,
        &mut t.deployment_started,
        &mut t.confirm_finalized,
        &mut t.established,
        &mut t.close_finalized,
    ] {
        if slot.is_some_and(|x| x > deadline) {
            *slot = None;
        }
    }
}

fn build_genesis(cfg: &ScenarioConfig) -> Genesis {
    let split = cfg.split;
    let mut operators = Vec::new();
    let mut balances = Vec::new();
    for i in 0..split.consumers {
        operators.push((consumer_address(i), format!("consumer-{i}")));
        balances.push((consumer_address(i), cfg.agents.consumer_funds));
    }
    for j in 0..split.providers {
        operators.push((provider_address(j), format!("provider-{j}")));
    }
    Genesis {
        operators,
        balances,
        oracles: vec![Address::from_label(ORACLE_LABEL)],
        // a single provider can never produce two bids
        min_bids: split.providers.min(2),
    }
}

fn build_providers(cfg: &ScenarioConfig) -> Vec<ProviderProfile> {
    let a = &cfg.agents;
    (0..cfg.split.providers)
        .map(|j| {
            let tariff = &a.tariffs[j as usize % a.tariffs.len()];
            let mut p = ProviderProfile::new(provider_address(j), tariff, a.deployment.clone(), a.provider_endpoint(j));
            p.reaction_delay = a.reaction_delay;
            p.abstain_probability = a.abstain_probability;
            p.crashed = a.crashed_providers.contains(&j);
            p
        })
        .collect()
}

fn build_consumers(cfg: &ScenarioConfig) -> Vec<ConsumerProfile> {
    let a = &cfg.agents;
    (0..cfg.split.consumers)
        .map(|i| {
            let mut c = ConsumerProfile::new(
                consumer_address(i),
                a.requirements.clone(),
                a.consumer_endpoint(i),
                a.sla.clone(),
                a.deposit,
                a.attach_time,
            );
            c.reaction_delay = a.reaction_delay;
            c
        })
        .collect()
}

fn pricing_rng(cfg: &ScenarioConfig, run: u32, provider: usize, consumer: usize) -> super::rng::StreamRng {
    stream(cfg.seed, "pricing", &[u64::from(run), provider as u64, consumer as u64])
}

fn provider_jobs(providers: &[ProviderProfile]) -> Vec<ProviderJobs> {
    providers
        .iter()
        .map(|p| ProviderJobs {
            provider: p.address,
            enqueued: p.jobs_enqueued(),
            completed: p.jobs_completed(),
            jobs: p
                .job_history()
                .iter()
                .map(|j| JobInterval { ann_id: j.ann_id, arrival: j.arrival, start: j.start, done: j.done })
                .collect(),
        })
        .collect()
}

fn soa_run(cfg: &ScenarioConfig, run: u32) -> (Vec<FederationTrace>, RunRecord) {
    let genesis = build_genesis(cfg);
    let mut providers = build_providers(cfg);
    let consumers = build_consumers(cfg);
    let ctx = &cfg.agents.pricing;
    let mut traces = Vec::with_capacity(consumers.len());
    let mut next_start = SimTime::ZERO;
    for (i, consumer) in consumers.iter().enumerate() {
        let quotes: Vec<Option<Amount>> =
            providers.iter().enumerate().map(|(j, p)| p.quote(ctx, &mut pricing_rng(cfg, run, j, i))).collect();
        let start = match cfg.concurrency_mode {
            ConcurrencyMode::AllConsumersSimultaneous => SimTime::ZERO,
            ConcurrencyMode::Single => next_start,
        };
        let trace = match soa_federate(consumer, i as AnnId, start, &mut providers, &quotes, cfg.agents.rtt) {
            Ok(t) => t,
            Err(_) => FederationTrace {
                ann_id: Some(i as AnnId),
                consumer: consumer.address,
                announce_submitted: Some(start),
                ..FederationTrace::default()
            },
        };
        next_start = trace.established.unwrap_or(start);
        traces.push(FederationTrace { run, ..trace });
    }
    let funds: Amount = genesis.balances.iter().map(|(_, a)| *a).sum();
    let timed_out = traces.iter().any(|t| t.established.is_none_or(|e| e > SimTime::ZERO + cfg.scenario_timeout));
    let record = RunRecord {
        run,
        genesis,
        chain: Vec::new(),
        digests: Vec::new(),
        events: Vec::new(),
        initial_funds: funds,
        final_funds: funds,
        rejected: Vec::new(),
        providers: provider_jobs(&providers),
        timed_out,
    };
    (traces, record)
}

#[derive(Clone, Debug)]
enum Action {
    ProduceBlock,
    /// Deliver events that have become final.
    Finalize,
    Submit {
        sender: Address,
        call: ContractCall,
    },
    Announce(usize),
    Started {
        ann_id: AnnId,
    },
    DeploymentDone {
        provider: usize,
        ann_id: AnnId,
    },
    Established {
        consumer: usize,
    },
}

struct ChainRun<'a> {
    cfg: &'a ScenarioConfig,
    run: u32,
    genesis: Genesis,
    ledger: Ledger<ContractCall>,
    state: ContractState,
    log: EventLog<ContractEvent>,
    sub: crate::ledger::Subscription<crate::contract::ContractEventKind>,
    queue: EventQueue<Action>,
    providers: Vec<ProviderProfile>,
    consumers: Vec<ConsumerProfile>,
    traces: Vec<FederationTrace>,
    by_address: BTreeMap<Address, Party>,
    by_ann: BTreeMap<AnnId, usize>,
    digests: Vec<Digest>,
    rejected: Vec<Rejection>,
    settled: usize,
    closed: usize,
}

#[derive(Copy, Clone)]
enum Party {
    Consumer(usize),
    Provider(usize),
}

impl<'a> ChainRun<'a> {
    fn new(cfg: &'a ScenarioConfig, run: u32) -> Result<Self, RunError> {
        let genesis = build_genesis(cfg);
        let providers = build_providers(cfg);
        let consumers = build_consumers(cfg);

        let mut validators: Vec<Address> = match cfg.validator_policy {
            ValidatorPolicy::ProvidersAndBootstrap => providers.iter().map(|p| p.address).collect(),
            ValidatorPolicy::AllSystems => {
                consumers.iter().map(|c| c.address).chain(providers.iter().map(|p| p.address)).collect()
            }
        };
        validators.push(Address::from_label(BOOTSTRAP_LABEL));
        let algorithm = cfg.variant.consensus().expect("chain run needs a consensus variant");
        let ledger = Ledger::new(ConsensusConfig {
            algorithm,
            block_period: cfg.block_period,
            message_delay: cfg.message_delay,
            validation_cost: cfg.validation_cost,
            validators,
            max_txs_per_block: cfg.max_txs_per_block,
        })?;
        let state = ContractState::from_genesis(&genesis);
        let log = EventLog::new();
        let sub = log.subscribe(None);

        let mut by_address = BTreeMap::new();
        for (i, c) in consumers.iter().enumerate() {
            by_address.insert(c.address, Party::Consumer(i));
        }
        for (j, p) in providers.iter().enumerate() {
            by_address.insert(p.address, Party::Provider(j));
        }
        let traces =
            consumers.iter().map(|c| FederationTrace { run, consumer: c.address, ..Default::default() }).collect();
        let digests = vec![state.state_digest()];

        Ok(Self {
            cfg,
            run,
            genesis,
            ledger,
            state,
            log,
            sub,
            queue: EventQueue::new(),
            providers,
            consumers,
            traces,
            by_address,
            by_ann: BTreeMap::new(),
            digests,
            rejected: Vec::new(),
            settled: 0,
            closed: 0,
        })
    }

    fn schedule(&mut self, at: SimTime, action: Action) {
        self.queue.schedule(at, action).expect("agents never schedule into the past");
    }

    fn schedule_agent(&mut self, actions: impl IntoIterator<Item = AgentAction>) {
        for a in actions {
            match a {
                AgentAction::Submit { at, sender, call } => self.schedule(at, Action::Submit { sender, call }),
                AgentAction::DeploymentStarted { at, ann_id, .. } => self.schedule(at, Action::Started { ann_id }),
                AgentAction::DeploymentDone { at, provider, ann_id } => {
                    let Some(Party::Provider(j)) = self.by_address.get(&provider).copied() else {
                        unreachable!("deployment from a non-provider")
                    };
                    self.schedule(at, Action::DeploymentDone { provider: j, ann_id });
                }
                AgentAction::Established { at, consumer, .. } => {
                    let Some(Party::Consumer(i)) = self.by_address.get(&consumer).copied() else {
                        unreachable!("attach by a non-consumer")
                    };
                    self.schedule(at, Action::Established { consumer: i });
                }
            }
        }
    }

    fn finished(&self) -> bool {
        let n = self.consumers.len();
        self.closed == n && (!self.cfg.agents.oracle.enabled || self.settled == n)
    }

    fn execute(mut self) -> (Vec<FederationTrace>, RunRecord) {
        match self.cfg.concurrency_mode {
            ConcurrencyMode::AllConsumersSimultaneous => {
                for i in 0..self.consumers.len() {
                    self.schedule(SimTime::ZERO, Action::Announce(i));
                }
            }
            ConcurrencyMode::Single => self.schedule(SimTime::ZERO, Action::Announce(0)),
        }
        let first_block = self.ledger.next_block_time();
        self.schedule(first_block, Action::ProduceBlock);

        let deadline = SimTime::ZERO + self.cfg.scenario_timeout;
        let mut timed_out = false;
        while !self.finished() {
            let Some(ev) = self.queue.advance() else { break };
            if ev.fire_time > deadline {
                timed_out = true;
                break;
            }
            self.dispatch(ev.fire_time, ev.action);
        }

        let initial_funds = self.genesis.balances.iter().map(|(_, a)| *a).sum();
        let final_funds = self.state.total_funds();
        let record = RunRecord {
            run: self.run,
            providers: provider_jobs(&self.providers),
            genesis: self.genesis,
            chain: self.ledger.into_chain(),
            digests: self.digests,
            events: self.log.into_entries(),
            initial_funds,
            final_funds,
            rejected: self.rejected,
            timed_out,
        };
        (self.traces, record)
    }

    fn dispatch(&mut self, now: SimTime, action: Action) {
        match action {
            Action::ProduceBlock => self.produce(now),
            Action::Finalize => self.finalize(now),
            Action::Submit { sender, call } => {
                if let ContractCall::AnnounceService { .. } = call {
                    if let Some(Party::Consumer(i)) = self.by_address.get(&sender).copied() {
                        self.traces[i].announce_submitted = Some(now);
                    }
                }
                self.ledger.submit(sender, call, now).expect("kernel submits in clock order");
            }
            Action::Announce(i) => {
                let a = self.consumers[i].announce(now);
                self.schedule_agent([a]);
            }
            Action::Started { ann_id } => {
                if let Some(&i) = self.by_ann.get(&ann_id) {
                    self.traces[i].deployment_started = Some(now);
                }
            }
            Action::DeploymentDone { provider, ann_id } => {
                let out = self.providers[provider].on_deployment_done(ann_id, now);
                self.schedule_agent(out);
            }
            Action::Established { consumer } => {
                self.traces[consumer].established = Some(now);
                if self.cfg.concurrency_mode == ConcurrencyMode::Single && consumer + 1 < self.consumers.len() {
                    self.schedule(now, Action::Announce(consumer + 1));
                }
            }
        }
    }

    fn produce(&mut self, now: SimTime) {
        let block = self.ledger.produce_block(now).expect("blocks are scheduled on the period").clone();
        let receipts = self.state.apply_block(&block);
        let mut events = Vec::new();
        for r in receipts {
            match r.outcome {
                Ok(ev) => events.push((r.tx_index, ev)),
                Err(e) => self.rejected.push(Rejection {
                    block_height: block.height,
                    tx_id: r.tx_id,
                    sender: block.txs[r.tx_index].sender,
                    reason: e.to_string(),
                }),
            }
        }
        self.log.publish(&block, events);
        self.digests.push(self.state.state_digest());
        self.schedule(block.finality_time, Action::Finalize);
        self.schedule(self.ledger.next_block_time(), Action::ProduceBlock);
    }

    fn finalize(&mut self, now: SimTime) {
        let delivered: Vec<ContractEvent> =
            self.log.poll(&mut self.sub, now).into_iter().map(|s| s.event.clone()).collect();
        let min_bids = self.state.min_bids();
        for ev in delivered {
            match ev {
                ContractEvent::OperatorRegistered { .. } => {}
                ContractEvent::ServiceAnnounced { ann_id, consumer, .. } => {
                    let Some(Party::Consumer(i)) = self.by_address.get(&consumer).copied() else { continue };
                    self.by_ann.insert(ann_id, i);
                    self.traces[i].ann_id = Some(ann_id);
                    self.traces[i].announce_finalized = Some(now);
                    let mut bids = Vec::new();
                    for (j, p) in self.providers.iter().enumerate() {
                        let mut rng = pricing_rng(self.cfg, self.run, j, i);
                        bids.extend(p.on_service_announced(ann_id, now, &self.cfg.agents.pricing, &mut rng));
                    }
                    self.schedule_agent(bids);
                }
                ContractEvent::BidPlaced { ann_id, bid_count } => {
                    let Some(&i) = self.by_ann.get(&ann_id) else { continue };
                    if let Some(choose) = self.consumers[i].on_bid_placed(ann_id, bid_count, min_bids, now) {
                        self.traces[i].second_bid_finalized = Some(now);
                        self.schedule_agent([choose]);
                    }
                }
                ContractEvent::ProviderChosen { ann_id, consumer, winner, .. } => {
                    let Some(&i) = self.by_ann.get(&ann_id) else { continue };
                    self.traces[i].winner_finalized = Some(now);
                    self.traces[i].winner = Some(winner);
                    if let Some(Party::Provider(j)) = self.by_address.get(&winner).copied() {
                        let out = self.providers[j].on_provider_chosen(ann_id, consumer, now);
                        self.schedule_agent(out);
                    }
                }
                ContractEvent::DeploymentConfirmed { ann_id, winner, .. } => {
                    let Some(&i) = self.by_ann.get(&ann_id) else { continue };
                    self.traces[i].confirm_finalized = Some(now);
                    let out = self.consumers[i].on_deployment_confirmed(ann_id, now);
                    self.schedule_agent(out);
                    if let Some(Party::Provider(j)) = self.by_address.get(&winner).copied() {
                        let out = self.providers[j].on_confirmation_final(ann_id, now);
                        self.schedule_agent(out);
                    }
                }
                ContractEvent::FederationClosed { ann_id, .. } => {
                    let Some(&i) = self.by_ann.get(&ann_id) else { continue };
                    self.traces[i].close_finalized = Some(now);
                    self.closed += 1;
                    let oracle = &self.cfg.agents.oracle;
                    if oracle.enabled {
                        let mut rng = stream(self.cfg.seed, "qos", &[u64::from(self.run), ann_id]);
                        let availability_ppm = rng.gen_range(oracle.availability_ppm[0]..=oracle.availability_ppm[1]);
                        let latency_ms = rng.gen_range(oracle.latency_ms[0]..=oracle.latency_ms[1]);
                        let call = ContractCall::ReportQos { ann_id, availability_ppm, latency_ms };
                        let at = now + self.cfg.agents.reaction_delay;
                        self.schedule(at, Action::Submit { sender: Address::from_label(ORACLE_LABEL), call });
                    }
                }
                ContractEvent::Settled { .. } => self.settled += 1,
            }
        }
    }
}

/// Mean `total` minus mean SOA `total` for matching scenario cells.
pub fn overhead(chain: &AggregateStats, soa: &AggregateStats) -> f64 {
    chain.total.mean - soa.total.mean
}

/// Convenience for tests and tools that need the block-time grid.
pub fn block_time(cfg: &ScenarioConfig, height: u64) -> SimTime {
    SimTime::ZERO + cfg.block_period * height
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::decompose;
    use crate::simkernel::Variant;
    use crate::units::SimDuration;

    fn cfg(n: u32, variant: Variant) -> ScenarioConfig {
        ScenarioConfig::default().with_n_systems(n).unwrap().with_variant(variant).with_runs(3)
    }

    fn secs(s: f64) -> SimDuration {
        SimDuration::from_secs_f64(s).unwrap()
    }

    #[test]
    fn n2_clique_timeline() {
        let out = run_scenario(&cfg(2, Variant::Clique)).unwrap();
        let t = &out.traces[0];
        let b = decompose(t).unwrap();
        assert_eq!(b.bidding, secs(10.0));
        assert_eq!(b.winner_selection, secs(5.0));
        assert_eq!(b.info_exchange, secs(0.1));
        assert_eq!(b.deployment, secs(4.9));
        assert_eq!(b.confirmation, secs(0.5));
        assert_eq!(b.total, secs(20.5));
        assert!(out.runs.iter().all(|r| r.funds_conserved() && !r.timed_out));
    }

    #[test]
    fn n2_qbft_adds_finality_delay() {
        let out = run_scenario(&cfg(2, Variant::Qbft)).unwrap();
        assert_eq!(decompose(&out.traces[0]).unwrap().total, secs(20.7));
    }

    #[test]
    fn n2_soa_timeline() {
        let out = run_scenario(&cfg(2, Variant::Soa)).unwrap();
        assert_eq!(decompose(&out.traces[0]).unwrap().total, secs(2.65));
    }

    #[test]
    fn every_federation_settles() {
        let out = run_scenario(&cfg(10, Variant::Clique)).unwrap();
        for r in &out.runs {
            let settled = r.events.iter().filter(|e| matches!(e.event, ContractEvent::Settled { .. })).count();
            assert_eq!(settled, 8);
            assert!(r.funds_conserved());
        }
        assert!(out.traces.iter().all(FederationTrace::is_complete));
    }

    #[test]
    fn crashed_provider_times_out() {
        let mut c = cfg(2, Variant::Clique).with_runs(1);
        c.agents.crashed_providers = vec![0];
        c.scenario_timeout = SimDuration::from_secs(60);
        let out = run_scenario(&c).unwrap();
        assert!(out.runs[0].timed_out);
        let t = &out.traces[0];
        assert!(t.deployment_started.is_some() && t.confirm_finalized.is_none());
    }

    #[test]
    fn single_mode_serialises_consumers() {
        let mut c = cfg(10, Variant::Clique).with_runs(1);
        c.concurrency_mode = ConcurrencyMode::Single;
        let out = run_scenario(&c).unwrap();
        for w in out.traces.windows(2) {
            assert!(w[1].announce_submitted >= w[0].established);
        }
    }

    #[test]
    fn digests_match_replay() {
        let out = run_scenario(&cfg(10, Variant::Qbft).with_runs(1)).unwrap();
        let r = &out.runs[0];
        assert_eq!(crate::contract::replay_digests(&r.genesis, &r.chain), r.digests);
    }

    #[test]
    fn block_grid() {
        let c = cfg(2, Variant::Clique);
        assert_eq!(block_time(&c, 3), SimTime::from_micros(15_000_000));
    }
}
