// SPDX-License-Identifier: Apache-2.0

//! The federation contract.
//!
//! A deterministic state machine executed by every ledger node. It holds
//! operator registrations, service announcements, reverse-auction bids,
//! winner selection, deployment confirmation and oracle-driven settlement.
//! All values are integers; there is no floating point in contract state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, CanonicalWriter, Digest};
use crate::ledger::{Address, Block, EventKind, Payload, Stamped};
use crate::units::Amount;

pub type AnnId = u64;

/// Parts-per-million fraction, used for availability figures.
pub const PPM: u32 = 1_000_000;

/// Demand-side description of the requested service.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceRequirements {
    pub app_id: String,
    pub replicas: u32,
    pub bandwidth_mbps: u32,
}

impl Canonical for ServiceRequirements {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.str(&self.app_id).u32(self.replicas).u32(self.bandwidth_mbps);
    }
}

/// VXLAN overlay endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayEndpoint {
    pub ip: String,
    pub udp_port: u16,
    pub vni: u32,
}

impl Canonical for OverlayEndpoint {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.str(&self.ip).u32(u32::from(self.udp_port)).u32(self.vni);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlaTerms {
    /// Minimum availability in parts per million.
    pub min_availability_ppm: u32,
    pub max_latency_ms: u32,
    /// Refunded to the consumer when the SLA is violated.
    pub penalty: Amount,
}

impl Canonical for SlaTerms {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u32(self.min_availability_ppm).u32(self.max_latency_ms).item(&self.penalty);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ContractCall {
    RegisterOperator {
        name: String,
    },
    AnnounceService {
        requirements: ServiceRequirements,
        consumer_endpoint: OverlayEndpoint,
        sla: SlaTerms,
        deposit: Amount,
    },
    PlaceBid {
        ann_id: AnnId,
        price: Amount,
    },
    ChooseProvider {
        ann_id: AnnId,
    },
    ConfirmDeployment {
        ann_id: AnnId,
        provider_endpoint: OverlayEndpoint,
    },
    ReportQos {
        ann_id: AnnId,
        availability_ppm: u32,
        latency_ms: u32,
    },
    CloseFederation {
        ann_id: AnnId,
    },
}

impl ContractCall {
    fn tag(&self) -> u8 {
        match self {
            ContractCall::RegisterOperator { .. } => 0,
            ContractCall::AnnounceService { .. } => 1,
            ContractCall::PlaceBid { .. } => 2,
            ContractCall::ChooseProvider { .. } => 3,
            ContractCall::ConfirmDeployment { .. } => 4,
            ContractCall::ReportQos { .. } => 5,
            ContractCall::CloseFederation { .. } => 6,
        }
    }
}

impl Canonical for ContractCall {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u8(self.tag());
        match self {
            ContractCall::RegisterOperator { name } => {
                w.str(name);
            }
            ContractCall::AnnounceService { requirements, consumer_endpoint, sla, deposit } => {
                w.item(requirements).item(consumer_endpoint).item(sla).item(deposit);
            }
            ContractCall::PlaceBid { ann_id, price } => {
                w.u64(*ann_id).item(price);
            }
            ContractCall::ChooseProvider { ann_id } | ContractCall::CloseFederation { ann_id } => {
                w.u64(*ann_id);
            }
            ContractCall::ConfirmDeployment { ann_id, provider_endpoint } => {
                w.u64(*ann_id).item(provider_endpoint);
            }
            ContractCall::ReportQos { ann_id, availability_ppm, latency_ms } => {
                w.u64(*ann_id).u32(*availability_ppm).u32(*latency_ms);
            }
        }
    }
}

impl Payload for ContractCall {
    fn kind(&self) -> &'static str {
        match self {
            ContractCall::RegisterOperator { .. } => "RegisterOperator",
            ContractCall::AnnounceService { .. } => "AnnounceService",
            ContractCall::PlaceBid { .. } => "PlaceBid",
            ContractCall::ChooseProvider { .. } => "ChooseProvider",
            ContractCall::ConfirmDeployment { .. } => "ConfirmDeployment",
            ContractCall::ReportQos { .. } => "ReportQos",
            ContractCall::CloseFederation { .. } => "CloseFederation",
        }
    }
}

pub type FedBlock = Block<ContractCall>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ServiceAnnouncement {
    pub ann_id: AnnId,
    pub consumer: Address,
    pub requirements: ServiceRequirements,
    pub consumer_endpoint: OverlayEndpoint,
    pub announce_block: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bid {
    pub ann_id: AnnId,
    pub provider: Address,
    pub price: Amount,
    pub bid_block: u64,
    /// Arrival sequence within the announcement; a re-bid takes a fresh index.
    pub order_index: u64,
}

impl Bid {
    /// Total order used for winner selection: cheapest, then earliest, then lowest address.
    pub fn rank_key(&self) -> (Amount, u64, u64, Address) {
        (self.price, self.bid_block, self.order_index, self.provider)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Phase {
    Open,
    ProviderChosen,
    DeploymentConfirmed,
    Closed,
    Settled,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FederationRecord {
    pub announcement: ServiceAnnouncement,
    pub phase: Phase,
    pub bids: Vec<Bid>,
    pub winner: Option<Address>,
    pub provider_endpoint: Option<OverlayEndpoint>,
    pub deposit: Amount,
    pub sla: SlaTerms,
    next_order_index: u64,
}

impl FederationRecord {
    /// Deposit still held by the contract.
    pub fn escrowed(&self) -> Amount {
        if self.phase == Phase::Settled {
            Amount::ZERO
        } else {
            self.deposit
        }
    }

    pub fn winning_bid(&self) -> Option<&Bid> {
        self.bids.iter().min_by_key(|b| b.rank_key())
    }
}

impl Canonical for FederationRecord {
    fn encode(&self, w: &mut CanonicalWriter) {
        let a = &self.announcement;
        w.u64(a.ann_id)
            .item(&a.consumer)
            .item(&a.requirements)
            .item(&a.consumer_endpoint)
            .u64(a.announce_block)
            .u8(self.phase as u8);
        w.u64(self.bids.len() as u64);
        for b in &self.bids {
            w.item(&b.provider).item(&b.price).u64(b.bid_block).u64(b.order_index);
        }
        w.option(self.winner.as_ref())
            .option(self.provider_endpoint.as_ref())
            .item(&self.deposit)
            .item(&self.sla)
            .u64(self.next_order_index);
    }
}

/// Initial contract state shared by every node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Genesis {
    pub operators: Vec<(Address, String)>,
    pub balances: Vec<(Address, Amount)>,
    pub oracles: Vec<Address>,
    /// Bids required before a consumer may choose; normally 2.
    pub min_bids: u32,
}

impl Default for Genesis {
    fn default() -> Self {
        Self { operators: Vec::new(), balances: Vec::new(), oracles: Vec::new(), min_bids: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ContractEvent {
    OperatorRegistered {
        operator: Address,
        name: String,
    },
    /// Carries only consumer-supplied demand fields.
    ServiceAnnounced {
        ann_id: AnnId,
        consumer: Address,
        requirements: ServiceRequirements,
    },
    BidPlaced {
        ann_id: AnnId,
        bid_count: u32,
    },
    ProviderChosen {
        ann_id: AnnId,
        consumer: Address,
        winner: Address,
        price: Amount,
        consumer_endpoint: OverlayEndpoint,
    },
    DeploymentConfirmed {
        ann_id: AnnId,
        consumer: Address,
        winner: Address,
        provider_endpoint: OverlayEndpoint,
    },
    FederationClosed {
        ann_id: AnnId,
        consumer: Address,
        winner: Address,
    },
    Settled {
        ann_id: AnnId,
        violated: bool,
        consumer_refund: Amount,
        provider_payment: Amount,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ContractEventKind {
    OperatorRegistered,
    ServiceAnnounced,
    BidPlaced,
    ProviderChosen,
    DeploymentConfirmed,
    FederationClosed,
    Settled,
}

impl ContractEvent {
    pub fn ann_id(&self) -> Option<AnnId> {
        match self {
            ContractEvent::OperatorRegistered { .. } => None,
            ContractEvent::ServiceAnnounced { ann_id, .. }
            | ContractEvent::BidPlaced { ann_id, .. }
            | ContractEvent::ProviderChosen { ann_id, .. }
            | ContractEvent::DeploymentConfirmed { ann_id, .. }
            | ContractEvent::FederationClosed { ann_id, .. }
            | ContractEvent::Settled { ann_id, .. } => Some(*ann_id),
        }
    }
}

impl EventKind for ContractEvent {
    type Kind = ContractEventKind;

    fn event_kind(&self) -> ContractEventKind {
        match self {
            ContractEvent::OperatorRegistered { .. } => ContractEventKind::OperatorRegistered,
            ContractEvent::ServiceAnnounced { .. } => ContractEventKind::ServiceAnnounced,
            ContractEvent::BidPlaced { .. } => ContractEventKind::BidPlaced,
            ContractEvent::ProviderChosen { .. } => ContractEventKind::ProviderChosen,
            ContractEvent::DeploymentConfirmed { .. } => ContractEventKind::DeploymentConfirmed,
            ContractEvent::FederationClosed { .. } => ContractEventKind::FederationClosed,
            ContractEvent::Settled { .. } => ContractEventKind::Settled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("{0} is already registered")]
    AlreadyRegistered(Address),
    #[error("{0} is not a registered operator")]
    NotRegistered(Address),
    #[error("insufficient balance: need {needed}, have {available}")]
    InsufficientBalance { needed: Amount, available: Amount },
    #[error("deposit {deposit} does not cover penalty {penalty}")]
    DepositBelowPenalty { deposit: Amount, penalty: Amount },
    #[error("availability threshold {0} ppm exceeds 1")]
    InvalidSla(u32),
    #[error("unknown announcement {0}")]
    UnknownAnnouncement(AnnId),
    #[error("consumer cannot bid on its own announcement")]
    SelfBid,
    #[error("announcement {ann_id} is {actual}, expected {expected}")]
    WrongPhase { ann_id: AnnId, expected: Phase, actual: Phase },
    #[error("only the announcing consumer may do this")]
    NotConsumer,
    #[error("{have} bids received, {need} required")]
    NotEnoughBids { have: u32, need: u32 },
    #[error("only the chosen provider may do this")]
    NotWinner,
    #[error("{0} is not an authorized oracle")]
    NotOracle(Address),
}

/// Execution context for a single call.
#[derive(Copy, Clone, Debug)]
pub struct CallContext {
    pub sender: Address,
    pub block_height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub tx_id: u64,
    pub tx_index: usize,
    pub outcome: Result<ContractEvent, ContractError>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ContractState {
    operators: BTreeMap<Address, String>,
    federations: BTreeMap<AnnId, FederationRecord>,
    next_ann_id: AnnId,
    balances: BTreeMap<Address, Amount>,
    oracles: BTreeSet<Address>,
    min_bids: u32,
}

impl ContractState {
    pub fn new() -> Self {
        Self::from_genesis(&Genesis::default())
    }

    pub fn from_genesis(genesis: &Genesis) -> Self {
        let mut state = ContractState {
            operators: genesis.operators.iter().cloned().collect(),
            oracles: genesis.oracles.iter().copied().collect(),
            min_bids: genesis.min_bids.max(1),
            ..Default::default()
        };
        for (addr, amount) in &genesis.balances {
            *state.balances.entry(*addr).or_default() =
                state.balance(addr).checked_add(*amount).expect("genesis funding overflow");
        }
        state
    }

    pub fn operators(&self) -> &BTreeMap<Address, String> {
        &self.operators
    }

    pub fn federations(&self) -> &BTreeMap<AnnId, FederationRecord> {
        &self.federations
    }

    pub fn federation(&self, ann_id: AnnId) -> Option<&FederationRecord> {
        self.federations.get(&ann_id)
    }

    pub fn balance(&self, addr: &Address) -> Amount {
        self.balances.get(addr).copied().unwrap_or_default()
    }

    pub fn min_bids(&self) -> u32 {
        self.min_bids
    }

    /// Balances plus all deposits still in escrow.
    pub fn total_funds(&self) -> Amount {
        self.balances
            .values()
            .copied()
            .sum::<Amount>()
            .checked_add(self.federations.values().map(FederationRecord::escrowed).sum())
            .expect("funds overflow")
    }

    fn require_registered(&self, addr: &Address) -> Result<(), ContractError> {
        if self.operators.contains_key(addr) {
            Ok(())
        } else {
            Err(ContractError::NotRegistered(*addr))
        }
    }

    fn record(&self, ann_id: AnnId) -> Result<&FederationRecord, ContractError> {
        self.federations.get(&ann_id).ok_or(ContractError::UnknownAnnouncement(ann_id))
    }

    fn record_in_phase(&self, ann_id: AnnId, expected: Phase) -> Result<&FederationRecord, ContractError> {
        let rec = self.record(ann_id)?;
        if rec.phase != expected {
            return Err(ContractError::WrongPhase { ann_id, expected, actual: rec.phase });
        }
        Ok(rec)
    }

    fn credit(&mut self, addr: Address, amount: Amount) {
        let entry = self.balances.entry(addr).or_default();
        *entry = entry.checked_add(amount).expect("balance overflow");
    }

    pub fn register_operator(&mut self, ctx: CallContext, name: &str) -> Result<ContractEvent, ContractError> {
        if self.operators.contains_key(&ctx.sender) {
            return Err(ContractError::AlreadyRegistered(ctx.sender));
        }
        self.operators.insert(ctx.sender, name.to_owned());
        Ok(ContractEvent::OperatorRegistered { operator: ctx.sender, name: name.to_owned() })
    }

    pub fn announce_service(
        &mut self,
        ctx: CallContext,
        requirements: &ServiceRequirements,
        consumer_endpoint: &OverlayEndpoint,
        sla: &SlaTerms,
        deposit: Amount,
    ) -> Result<ContractEvent, ContractError> {
        self.require_registered(&ctx.sender)?;
        if sla.min_availability_ppm > PPM {
            return Err(ContractError::InvalidSla(sla.min_availability_ppm));
        }
        if deposit < sla.penalty {
            return Err(ContractError::DepositBelowPenalty { deposit, penalty: sla.penalty });
        }
        let available = self.balance(&ctx.sender);
        let remaining =
            available.checked_sub(deposit).ok_or(ContractError::InsufficientBalance { needed: deposit, available })?;
        self.balances.insert(ctx.sender, remaining);

        let ann_id = self.next_ann_id;
        self.next_ann_id += 1;
        let announcement = ServiceAnnouncement {
            ann_id,
            consumer: ctx.sender,
            requirements: requirements.clone(),
            consumer_endpoint: consumer_endpoint.clone(),
            announce_block: ctx.block_height,
        };
        self.federations.insert(
            ann_id,
            FederationRecord {
                announcement,
                phase: Phase::Open,
                bids: Vec::new(),
                winner: None,
                provider_endpoint: None,
                deposit,
                sla: sla.clone(),
                next_order_index: 0,
            },
        );
        Ok(ContractEvent::ServiceAnnounced { ann_id, consumer: ctx.sender, requirements: requirements.clone() })
    }

    pub fn place_bid(
        &mut self,
        ctx: CallContext,
        ann_id: AnnId,
        price: Amount,
    ) -> Result<ContractEvent, ContractError> {
        self.require_registered(&ctx.sender)?;
        let rec = self.record_in_phase(ann_id, Phase::Open)?;
        if rec.announcement.consumer == ctx.sender {
            return Err(ContractError::SelfBid);
        }
        let rec = self.federations.get_mut(&ann_id).expect("checked above");
        rec.bids.retain(|b| b.provider != ctx.sender);
        let order_index = rec.next_order_index;
        rec.next_order_index += 1;
        rec.bids.push(Bid { ann_id, provider: ctx.sender, price, bid_block: ctx.block_height, order_index });
        Ok(ContractEvent::BidPlaced { ann_id, bid_count: rec.bids.len() as u32 })
    }

    pub fn choose_provider(&mut self, ctx: CallContext, ann_id: AnnId) -> Result<ContractEvent, ContractError> {
        let rec = self.record(ann_id)?;
        if rec.announcement.consumer != ctx.sender {
            return Err(ContractError::NotConsumer);
        }
        let rec = self.record_in_phase(ann_id, Phase::Open)?;
        let have = rec.bids.len() as u32;
        if have < self.min_bids {
            return Err(ContractError::NotEnoughBids { have, need: self.min_bids });
        }
        let best = rec.winning_bid().expect("at least one bid").clone();
        let rec = self.federations.get_mut(&ann_id).expect("checked above");
        rec.winner = Some(best.provider);
        rec.phase = Phase::ProviderChosen;
        Ok(ContractEvent::ProviderChosen {
            ann_id,
            consumer: rec.announcement.consumer,
            winner: best.provider,
            price: best.price,
            consumer_endpoint: rec.announcement.consumer_endpoint.clone(),
        })
    }

    pub fn confirm_deployment(
        &mut self,
        ctx: CallContext,
        ann_id: AnnId,
        provider_endpoint: &OverlayEndpoint,
    ) -> Result<ContractEvent, ContractError> {
        let rec = self.record(ann_id)?;
        if rec.winner.is_some() && rec.winner != Some(ctx.sender) {
            return Err(ContractError::NotWinner);
        }
        let rec = self.record_in_phase(ann_id, Phase::ProviderChosen)?;
        if rec.winner != Some(ctx.sender) {
            return Err(ContractError::NotWinner);
        }
        let rec = self.federations.get_mut(&ann_id).expect("checked above");
        rec.provider_endpoint = Some(provider_endpoint.clone());
        rec.phase = Phase::DeploymentConfirmed;
        Ok(ContractEvent::DeploymentConfirmed {
            ann_id,
            consumer: rec.announcement.consumer,
            winner: ctx.sender,
            provider_endpoint: provider_endpoint.clone(),
        })
    }

    pub fn close_federation(&mut self, ctx: CallContext, ann_id: AnnId) -> Result<ContractEvent, ContractError> {
        let rec = self.record(ann_id)?;
        if rec.announcement.consumer != ctx.sender {
            return Err(ContractError::NotConsumer);
        }
        self.record_in_phase(ann_id, Phase::DeploymentConfirmed)?;
        let rec = self.federations.get_mut(&ann_id).expect("checked above");
        rec.phase = Phase::Closed;
        Ok(ContractEvent::FederationClosed {
            ann_id,
            consumer: rec.announcement.consumer,
            winner: rec.winner.expect("winner set once chosen"),
        })
    }

    pub fn report_qos(
        &mut self,
        ctx: CallContext,
        ann_id: AnnId,
        availability_ppm: u32,
        latency_ms: u32,
    ) -> Result<ContractEvent, ContractError> {
        if !self.oracles.contains(&ctx.sender) {
            return Err(ContractError::NotOracle(ctx.sender));
        }
        let rec = self.record_in_phase(ann_id, Phase::Closed)?;
        let violated = availability_ppm < rec.sla.min_availability_ppm || latency_ms > rec.sla.max_latency_ms;
        let consumer = rec.announcement.consumer;
        let winner = rec.winner.expect("winner set once chosen");
        let consumer_refund = if violated { rec.sla.penalty } else { Amount::ZERO };
        let provider_payment = rec.deposit.checked_sub(consumer_refund).expect("deposit covers penalty");

        self.federations.get_mut(&ann_id).expect("checked above").phase = Phase::Settled;
        self.credit(consumer, consumer_refund);
        self.credit(winner, provider_payment);
        Ok(ContractEvent::Settled { ann_id, violated, consumer_refund, provider_payment })
    }

    /// Dispatches a call to its handler. Failed calls leave the state untouched.
    pub fn execute(&mut self, ctx: CallContext, call: &ContractCall) -> Result<ContractEvent, ContractError> {
        match call {
            ContractCall::RegisterOperator { name } => self.register_operator(ctx, name),
            ContractCall::AnnounceService { requirements, consumer_endpoint, sla, deposit } => {
                self.announce_service(ctx, requirements, consumer_endpoint, sla, *deposit)
            }
            ContractCall::PlaceBid { ann_id, price } => self.place_bid(ctx, *ann_id, *price),
            ContractCall::ChooseProvider { ann_id } => self.choose_provider(ctx, *ann_id),
            ContractCall::ConfirmDeployment { ann_id, provider_endpoint } => {
                self.confirm_deployment(ctx, *ann_id, provider_endpoint)
            }
            ContractCall::ReportQos { ann_id, availability_ppm, latency_ms } => {
                self.report_qos(ctx, *ann_id, *availability_ppm, *latency_ms)
            }
            ContractCall::CloseFederation { ann_id } => self.close_federation(ctx, *ann_id),
        }
    }

    /// Executes every transaction of `block` in order.
    pub fn apply_block(&mut self, block: &FedBlock) -> Vec<Receipt> {
        block
            .txs
            .iter()
            .enumerate()
            .map(|(tx_index, tx)| Receipt {
                tx_id: tx.id,
                tx_index,
                outcome: self.execute(CallContext { sender: tx.sender, block_height: block.height }, &tx.payload),
            })
            .collect()
    }

    pub fn state_digest(&self) -> Digest {
        self.digest()
    }
}

impl Canonical for ContractState {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u64(self.operators.len() as u64);
        for (addr, name) in &self.operators {
            w.item(addr).str(name);
        }
        w.u64(self.federations.len() as u64);
        for rec in self.federations.values() {
            w.item(rec);
        }
        w.u64(self.next_ann_id);
        w.u64(self.balances.len() as u64);
        for (addr, amount) in &self.balances {
            w.item(addr).item(amount);
        }
        w.seq(self.oracles.iter()).u32(self.min_bids);
    }
}

/// Replays `chain` (genesis block excluded from execution) and returns the digest after each height.
pub fn replay_digests(genesis: &Genesis, chain: &[FedBlock]) -> Vec<Digest> {
    let mut state = ContractState::from_genesis(genesis);
    let mut out = Vec::with_capacity(chain.len());
    for block in chain {
        if block.height > 0 {
            state.apply_block(block);
        }
        out.push(state.state_digest());
    }
    out
}

#[derive(Serialize)]
struct EventLine<'a> {
    block_height: u64,
    finality_time: f64,
    event_kind: ContractEventKind,
    ann_id: Option<AnnId>,
    payload: &'a ContractEvent,
}

/// One JSON object per line: block_height, finality_time, event_kind, ann_id, payload.
pub fn event_log_jsonl(events: &[Stamped<ContractEvent>]) -> String {
    let mut out = String::new();
    for e in events {
        let line = EventLine {
            block_height: e.block_height,
            finality_time: e.finality_time.as_secs_f64(),
            event_kind: e.event.event_kind(),
            ann_id: e.event.ann_id(),
            payload: &e.event,
        };
        out.push_str(&serde_json::to_string(&line).expect("event serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(label: &str) -> Address {
        Address::from_label(label)
    }

    fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    fn ctx(sender: Address, block_height: u64) -> CallContext {
        CallContext { sender, block_height }
    }

    fn requirements() -> ServiceRequirements {
        ServiceRequirements { app_id: "video-analytics".into(), replicas: 2, bandwidth_mbps: 100 }
    }

    fn endpoint(ip: &str, vni: u32) -> OverlayEndpoint {
        OverlayEndpoint { ip: ip.into(), udp_port: 4789, vni }
    }

    fn sla() -> SlaTerms {
        SlaTerms { min_availability_ppm: 990_000, max_latency_ms: 50, penalty: amt("2.0") }
    }

    struct Fixture {
        state: ContractState,
        consumer: Address,
        p1: Address,
        p2: Address,
        oracle: Address,
    }

    fn fixture() -> Fixture {
        let (consumer, p1, p2, oracle) = (addr("consumer"), addr("p1"), addr("p2"), addr("oracle"));
        let genesis = Genesis {
            operators: vec![(consumer, "c".into()), (p1, "p1".into()), (p2, "p2".into())],
            balances: vec![(consumer, amt("100"))],
            oracles: vec![oracle],
            min_bids: 2,
        };
        Fixture { state: ContractState::from_genesis(&genesis), consumer, p1, p2, oracle }
    }

    fn announce(f: &mut Fixture) -> AnnId {
        let ev = f
            .state
            .announce_service(ctx(f.consumer, 1), &requirements(), &endpoint("10.0.0.1", 42), &sla(), amt("10.0"))
            .unwrap();
        ev.ann_id().unwrap()
    }

    /// Drives a federation to Closed with p2 winning.
    fn closed(f: &mut Fixture) -> AnnId {
        let id = announce(f);
        f.state.place_bid(ctx(f.p1, 2), id, amt("0.20")).unwrap();
        f.state.place_bid(ctx(f.p2, 2), id, amt("0.15")).unwrap();
        f.state.choose_provider(ctx(f.consumer, 3), id).unwrap();
        f.state.confirm_deployment(ctx(f.p2, 4), id, &endpoint("10.0.0.2", 42)).unwrap();
        f.state.close_federation(ctx(f.consumer, 5), id).unwrap();
        id
    }

    #[test]
    fn register_operator_once() {
        let mut s = ContractState::new();
        let a = addr("mec-es-1");
        assert!(s.register_operator(ctx(a, 1), "mec-es-1").is_ok());
        assert_eq!(s.register_operator(ctx(a, 1), "again"), Err(ContractError::AlreadyRegistered(a)));
        for i in 0..29 {
            s.register_operator(ctx(addr(&format!("op{i}")), 1), "x").unwrap();
        }
        assert_eq!(s.operators().len(), 30);
    }

    #[test]
    fn announce_escrows_deposit() {
        let mut f = fixture();
        let id = announce(&mut f);
        assert_eq!(id, 0);
        let rec = f.state.federation(0).unwrap();
        assert_eq!(rec.phase, Phase::Open);
        assert_eq!(f.state.balance(&f.consumer), amt("90"));
        assert_eq!(f.state.total_funds(), amt("100"));
    }

    #[test]
    fn announce_rejections() {
        let mut f = fixture();
        let low = f.state.announce_service(ctx(f.consumer, 1), &requirements(), &endpoint("a", 1), &sla(), amt("1.0"));
        assert_eq!(low, Err(ContractError::DepositBelowPenalty { deposit: amt("1.0"), penalty: amt("2.0") }));
        let broke = f.state.announce_service(ctx(f.p1, 1), &requirements(), &endpoint("a", 1), &sla(), amt("10.0"));
        assert!(matches!(broke, Err(ContractError::InsufficientBalance { .. })));
        let stranger = addr("stranger");
        let unreg = f.state.announce_service(ctx(stranger, 1), &requirements(), &endpoint("a", 1), &sla(), amt("10"));
        assert_eq!(unreg, Err(ContractError::NotRegistered(stranger)));
        assert_eq!(f.state.federations().len(), 0);
        assert_eq!(f.state.balance(&f.consumer), amt("100"));
    }

    #[test]
    fn bid_count_and_self_bid() {
        let mut f = fixture();
        let id = announce(&mut f);
        assert_eq!(
            f.state.place_bid(ctx(f.p1, 2), id, amt("0.135")),
            Ok(ContractEvent::BidPlaced { ann_id: id, bid_count: 1 })
        );
        assert_eq!(f.state.place_bid(ctx(f.consumer, 2), id, amt("0.1")), Err(ContractError::SelfBid));
        let stranger = addr("stranger");
        assert_eq!(f.state.place_bid(ctx(stranger, 2), id, amt("0.1")), Err(ContractError::NotRegistered(stranger)));
        assert_eq!(f.state.place_bid(ctx(f.p1, 2), 99, amt("0.1")), Err(ContractError::UnknownAnnouncement(99)));
    }

    #[test]
    fn rebid_overwrites_price_and_position() {
        let mut f = fixture();
        let id = announce(&mut f);
        f.state.place_bid(ctx(f.p1, 2), id, amt("0.135")).unwrap();
        f.state.place_bid(ctx(f.p2, 2), id, amt("0.150")).unwrap();
        let ev = f.state.place_bid(ctx(f.p1, 3), id, amt("0.120")).unwrap();
        assert_eq!(ev, ContractEvent::BidPlaced { ann_id: id, bid_count: 2 });
        let bids = &f.state.federation(id).unwrap().bids;
        assert_eq!(bids.len(), 2);
        assert_eq!(bids[1].provider, f.p1);
        assert_eq!(bids[1].price, amt("0.120"));
        assert_eq!(bids[1].bid_block, 3);
        assert_eq!(bids[1].order_index, 2);
    }

    #[test]
    fn choose_lowest_price() {
        let mut f = fixture();
        let id = announce(&mut f);
        f.state.place_bid(ctx(f.p1, 2), id, amt("0.20")).unwrap();
        f.state.place_bid(ctx(f.p2, 2), id, amt("0.15")).unwrap();
        let ev = f.state.choose_provider(ctx(f.consumer, 3), id).unwrap();
        match ev {
            ContractEvent::ProviderChosen { winner, consumer_endpoint, .. } => {
                assert_eq!(winner, f.p2);
                assert_eq!(consumer_endpoint, endpoint("10.0.0.1", 42));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(f.state.federation(id).unwrap().phase, Phase::ProviderChosen);
    }

    #[test]
    fn choose_needs_two_bids() {
        let mut f = fixture();
        let id = announce(&mut f);
        f.state.place_bid(ctx(f.p1, 2), id, amt("0.20")).unwrap();
        assert_eq!(
            f.state.choose_provider(ctx(f.consumer, 3), id),
            Err(ContractError::NotEnoughBids { have: 1, need: 2 })
        );
        assert_eq!(f.state.choose_provider(ctx(f.p1, 3), id), Err(ContractError::NotConsumer));
    }

    #[test]
    fn price_tie_goes_to_earlier_block() {
        let mut f = fixture();
        let id = announce(&mut f);
        // p2 has the lower address half the time; the earlier block must win regardless
        f.state.place_bid(ctx(f.p1, 3), id, amt("0.15")).unwrap();
        f.state.place_bid(ctx(f.p2, 4), id, amt("0.15")).unwrap();
        let ev = f.state.choose_provider(ctx(f.consumer, 5), id).unwrap();
        assert!(matches!(ev, ContractEvent::ProviderChosen { winner, .. } if winner == f.p1));
    }

    #[test]
    fn confirm_rules() {
        let mut f = fixture();
        let id = announce(&mut f);
        f.state.place_bid(ctx(f.p1, 2), id, amt("0.20")).unwrap();
        f.state.place_bid(ctx(f.p2, 2), id, amt("0.15")).unwrap();
        f.state.choose_provider(ctx(f.consumer, 3), id).unwrap();
        assert_eq!(
            f.state.confirm_deployment(ctx(f.p1, 4), id, &endpoint("10.0.0.3", 42)),
            Err(ContractError::NotWinner)
        );
        f.state.confirm_deployment(ctx(f.p2, 4), id, &endpoint("10.0.0.2", 42)).unwrap();
        let rec = f.state.federation(id).unwrap();
        assert_eq!(rec.phase, Phase::DeploymentConfirmed);
        assert_eq!(rec.provider_endpoint, Some(endpoint("10.0.0.2", 42)));
    }

    #[test]
    fn confirm_before_choice_is_wrong_phase() {
        let mut f = fixture();
        let id = announce(&mut f);
        assert_eq!(
            f.state.confirm_deployment(ctx(f.p2, 2), id, &endpoint("x", 1)),
            Err(ContractError::WrongPhase { ann_id: id, expected: Phase::ProviderChosen, actual: Phase::Open })
        );
        f.state.place_bid(ctx(f.p1, 2), id, amt("0.20")).unwrap();
        f.state.place_bid(ctx(f.p2, 2), id, amt("0.15")).unwrap();
        f.state.choose_provider(ctx(f.consumer, 3), id).unwrap();
        f.state.confirm_deployment(ctx(f.p2, 4), id, &endpoint("x", 1)).unwrap();
        assert_eq!(
            f.state.confirm_deployment(ctx(f.p2, 5), id, &endpoint("x", 1)),
            Err(ContractError::WrongPhase {
                ann_id: id,
                expected: Phase::ProviderChosen,
                actual: Phase::DeploymentConfirmed
            })
        );
    }

    #[test]
    fn close_rules() {
        let mut f = fixture();
        let id = announce(&mut f);
        f.state.place_bid(ctx(f.p1, 2), id, amt("0.20")).unwrap();
        f.state.place_bid(ctx(f.p2, 2), id, amt("0.15")).unwrap();
        f.state.choose_provider(ctx(f.consumer, 3), id).unwrap();
        f.state.confirm_deployment(ctx(f.p2, 4), id, &endpoint("10.0.0.2", 42)).unwrap();
        assert_eq!(f.state.close_federation(ctx(f.p2, 5), id), Err(ContractError::NotConsumer));
        f.state.close_federation(ctx(f.consumer, 5), id).unwrap();
        assert_eq!(f.state.federation(id).unwrap().phase, Phase::Closed);
        assert!(matches!(f.state.close_federation(ctx(f.consumer, 6), id), Err(ContractError::WrongPhase { .. })));
    }

    #[test]
    fn compliant_report_pays_full_deposit() {
        let mut f = fixture();
        let id = closed(&mut f);
        let ev = f.state.report_qos(ctx(f.oracle, 6), id, 999_000, 20).unwrap();
        assert_eq!(
            ev,
            ContractEvent::Settled {
                ann_id: id,
                violated: false,
                consumer_refund: Amount::ZERO,
                provider_payment: amt("10.0")
            }
        );
        assert_eq!(f.state.balance(&f.p2), amt("10.0"));
        assert_eq!(f.state.total_funds(), amt("100"));
    }

    #[test]
    fn violated_report_refunds_penalty() {
        let mut f = fixture();
        let id = closed(&mut f);
        f.state.report_qos(ctx(f.oracle, 6), id, 950_000, 20).unwrap();
        assert_eq!(f.state.balance(&f.consumer), amt("92.0"));
        assert_eq!(f.state.balance(&f.p2), amt("8.0"));
        assert_eq!(f.state.federation(id).unwrap().phase, Phase::Settled);
        assert_eq!(f.state.total_funds(), amt("100"));
    }

    #[test]
    fn latency_violation_also_refunds() {
        let mut f = fixture();
        let id = closed(&mut f);
        let ev = f.state.report_qos(ctx(f.oracle, 6), id, 999_000, 51).unwrap();
        assert!(matches!(ev, ContractEvent::Settled { violated: true, .. }));
    }

    #[test]
    fn report_requires_oracle_and_closed_phase() {
        let mut f = fixture();
        let id = announce(&mut f);
        assert!(matches!(f.state.report_qos(ctx(f.oracle, 2), id, 1, 1), Err(ContractError::WrongPhase { .. })));
        assert_eq!(f.state.report_qos(ctx(f.p1, 2), id, 1, 1), Err(ContractError::NotOracle(f.p1)));
    }

    #[test]
    fn digest_equality_and_sensitivity() {
        assert_eq!(ContractState::new().state_digest(), ContractState::new().state_digest());
        let mut a = fixture();
        let mut b = fixture();
        announce(&mut a);
        announce(&mut b);
        assert_eq!(a.state.state_digest(), b.state.state_digest());
        b.state.place_bid(ctx(b.p1, 2), 0, amt("0.1")).unwrap();
        assert_ne!(a.state.state_digest(), b.state.state_digest());
    }

    #[test]
    fn announced_event_has_no_provider_data() {
        let mut f = fixture();
        let ev = f
            .state
            .announce_service(ctx(f.consumer, 1), &requirements(), &endpoint("10.0.0.1", 42), &sla(), amt("10"))
            .unwrap();
        let json = serde_json::to_string(&ev).unwrap();
        for p in [f.p1, f.p2] {
            assert!(!json.contains(&p.to_string()));
        }
        assert!(!json.contains("10.0.0.1"), "consumer endpoint is released only to the winner");
    }

    #[test]
    fn event_log_lines() {
        let events = vec![Stamped {
            block_height: 3,
            finality_time: crate::units::SimTime::from_micros(15_250_000),
            tx_index: 0,
            event: ContractEvent::BidPlaced { ann_id: 7, bid_count: 2 },
        }];
        let text = event_log_jsonl(&events);
        let v: serde_json::Value = serde_json::from_str(text.trim_end()).unwrap();
        assert_eq!(v["block_height"], 3);
        assert_eq!(v["finality_time"], 15.25);
        assert_eq!(v["event_kind"], "BidPlaced");
        assert_eq!(v["ann_id"], 7);
        assert_eq!(v["payload"]["BidPlaced"]["bid_count"], 2);
    }
}
