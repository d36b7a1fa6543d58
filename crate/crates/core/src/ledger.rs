// SPDX-License-Identifier: Apache-2.0

//! Simulated permissioned ledger.
//!
//! Blocks are produced on a fixed period by validators in round-robin order.
//! A transaction submitted at time `t` lands in the first block produced
//! strictly after `t`. Clique blocks are usable as soon as they are produced;
//! QBFT blocks become final after a three-phase message exchange plus a
//! validation cost that grows with the logarithm of the validator count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::codec::{Canonical, CanonicalWriter, Digest};
use crate::units::{SimDuration, SimTime};

/// 20-byte participant identifier, ordered byte-lexicographically.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// Derives a stable address from a human-readable label.
    pub fn from_label(label: &str) -> Self {
        let hash = Sha256::digest(label.as_bytes());
        let mut out = [0u8; 20];
        out.copy_from_slice(&hash[..20]);
        Address(out)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0[..4]))
    }
}

impl FromStr for Address {
    type Err = hex::FromHexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 20];
        hex::decode_to_slice(s.strip_prefix("0x").unwrap_or(s), &mut out)?;
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Canonical for Address {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.bytes(&self.0);
    }
}

/// Anything that can be carried inside a transaction.
pub trait Payload: Canonical + Clone {
    /// Short label used in chain dumps.
    fn kind(&self) -> &'static str;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction<P> {
    pub id: u64,
    pub sender: Address,
    pub nonce: u64,
    pub submit_time: SimTime,
    pub payload: P,
}

impl<P: Canonical> Canonical for Transaction<P> {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u64(self.id).item(&self.sender).u64(self.nonce).item(&self.submit_time).item(&self.payload);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block<P> {
    pub height: u64,
    pub proposer: Address,
    pub timestamp: SimTime,
    pub finality_time: SimTime,
    pub parent_digest: Digest,
    pub txs: Vec<Transaction<P>>,
}

impl<P: Canonical> Canonical for Block<P> {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u64(self.height)
            .item(&self.proposer)
            .item(&self.timestamp)
            .item(&self.finality_time)
            .item(&self.parent_digest)
            .seq(self.txs.iter());
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusAlgorithm {
    Clique,
    Qbft,
}

impl fmt::Display for ConsensusAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsensusAlgorithm::Clique => "clique",
            ConsensusAlgorithm::Qbft => "qbft",
        })
    }
}

pub const DEFAULT_VALIDATION_COST: SimDuration = SimDuration::from_millis(50);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusConfig {
    pub algorithm: ConsensusAlgorithm,
    pub block_period: SimDuration,
    /// One-way validator-to-validator latency.
    pub message_delay: SimDuration,
    /// Per-round validation cost, scaled by `ceil(log2(validators))` under QBFT.
    pub validation_cost: SimDuration,
    pub validators: Vec<Address>,
    /// Maximum number of transactions per block; `None` means unbounded.
    pub max_txs_per_block: Option<usize>,
}

impl ConsensusConfig {
    pub fn new(algorithm: ConsensusAlgorithm, validators: Vec<Address>) -> Self {
        Self {
            algorithm,
            block_period: SimDuration::from_secs(5),
            message_delay: SimDuration::from_millis(50),
            validation_cost: DEFAULT_VALIDATION_COST,
            validators,
            max_txs_per_block: None,
        }
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.block_period.is_zero() {
            return Err(LedgerError::InvalidConfig("block period must be positive".into()));
        }
        if self.validators.is_empty() {
            return Err(LedgerError::InvalidConfig("at least one validator is required".into()));
        }
        let unique: BTreeSet<_> = self.validators.iter().collect();
        if unique.len() != self.validators.len() {
            return Err(LedgerError::InvalidConfig("duplicate validator".into()));
        }
        if self.max_txs_per_block == Some(0) {
            return Err(LedgerError::InvalidConfig("block capacity must be positive".into()));
        }
        Ok(())
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.algorithm == ConsensusAlgorithm::Qbft && self.validators.len() < 4 {
            out.push(format!(
                "qbft with {} validators cannot tolerate a byzantine fault (needs 3f+1 = 4)",
                self.validators.len()
            ));
        }
        out
    }
}

/// `ceil(log2(n))` for `n >= 1`.
fn ceil_log2(n: usize) -> u64 {
    match n {
        0 | 1 => 0,
        n => u64::from(usize::BITS - (n - 1).leading_zeros()),
    }
}

/// Delay between a block's production and the moment its contents are final.
pub fn finality_delay(cfg: &ConsensusConfig) -> SimDuration {
    finality_delay_for(cfg.algorithm, cfg.message_delay, cfg.validation_cost, cfg.validators.len())
}

pub fn finality_delay_for(
    algorithm: ConsensusAlgorithm,
    message_delay: SimDuration,
    validation_cost: SimDuration,
    validators: usize,
) -> SimDuration {
    match algorithm {
        ConsensusAlgorithm::Clique => SimDuration::ZERO,
        // pre-prepare, prepare, commit
        ConsensusAlgorithm::Qbft => message_delay * 3 + validation_cost * ceil_log2(validators),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("nonce gap for {sender}: expected {expected}, got {got}")]
    NonceGap { sender: Address, expected: u64, got: u64 },
    #[error("transaction stamped {stamped} but submitted at {now}")]
    ClockMismatch { stamped: SimTime, now: SimTime },
    #[error("block at {now} is off schedule; next block is due at {due}")]
    OffSchedule { now: SimTime, due: SimTime },
    #[error("{0} is not a validator")]
    NotAValidator(Address),
    #[error("{0} is already a validator")]
    AlreadyMember(Address),
    #[error("invalid consensus configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteOutcome {
    Pending { votes: usize, needed: usize },
    Admitted,
}

/// Validator membership with majority-vote admission.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatorSet {
    members: Vec<Address>,
    pending_votes: BTreeMap<Address, BTreeSet<Address>>,
}

impl ValidatorSet {
    pub fn new(members: Vec<Address>) -> Result<Self, LedgerError> {
        if members.is_empty() {
            return Err(LedgerError::InvalidConfig("validator set must not be empty".into()));
        }
        let unique: BTreeSet<_> = members.iter().collect();
        if unique.len() != members.len() {
            return Err(LedgerError::InvalidConfig("duplicate validator".into()));
        }
        Ok(Self { members, pending_votes: BTreeMap::new() })
    }

    pub fn members(&self) -> &[Address] {
        &self.members
    }

    pub fn contains(&self, addr: &Address) -> bool {
        self.members.contains(addr)
    }

    pub fn votes_for(&self, candidate: &Address) -> usize {
        self.pending_votes.get(candidate).map_or(0, BTreeSet::len)
    }

    pub fn proposer_at(&self, height: u64) -> Address {
        self.members[(height % self.members.len() as u64) as usize]
    }

    /// Records a vote; the candidate joins once votes exceed half the current membership.
    pub fn vote_add(&mut self, voter: Address, candidate: Address) -> Result<VoteOutcome, LedgerError> {
        if !self.contains(&voter) {
            return Err(LedgerError::NotAValidator(voter));
        }
        if self.contains(&candidate) {
            return Err(LedgerError::AlreadyMember(candidate));
        }
        let voters = self.pending_votes.entry(candidate).or_default();
        voters.insert(voter);
        let votes = voters.len();
        if votes * 2 > self.members.len() {
            self.pending_votes.remove(&candidate);
            self.members.push(candidate);
            Ok(VoteOutcome::Admitted)
        } else {
            Ok(VoteOutcome::Pending { votes, needed: self.members.len() / 2 + 1 })
        }
    }
}

/// Mempool plus chain for one simulation run.
#[derive(Debug)]
pub struct Ledger<P> {
    cfg: ConsensusConfig,
    validators: ValidatorSet,
    /// Votes land here and become active at the next block boundary.
    staged: Option<ValidatorSet>,
    mempool: Vec<Transaction<P>>,
    chain: Vec<Block<P>>,
    nonces: BTreeMap<Address, u64>,
    next_tx_id: u64,
}

impl<P: Payload> Ledger<P> {
    /// Creates a ledger holding only the genesis block (height 0, timestamp 0).
    pub fn new(cfg: ConsensusConfig) -> Result<Self, LedgerError> {
        cfg.validate()?;
        let validators = ValidatorSet::new(cfg.validators.clone())?;
        let genesis = Block {
            height: 0,
            proposer: validators.proposer_at(0),
            timestamp: SimTime::ZERO,
            finality_time: SimTime::ZERO,
            parent_digest: Digest::ZERO,
            txs: Vec::new(),
        };
        Ok(Self {
            cfg,
            validators,
            staged: None,
            mempool: Vec::new(),
            chain: vec![genesis],
            nonces: BTreeMap::new(),
            next_tx_id: 0,
        })
    }

    pub fn config(&self) -> &ConsensusConfig {
        &self.cfg
    }

    pub fn validators(&self) -> &ValidatorSet {
        &self.validators
    }

    pub fn chain(&self) -> &[Block<P>] {
        &self.chain
    }

    pub fn into_chain(self) -> Vec<Block<P>> {
        self.chain
    }

    pub fn head(&self) -> &Block<P> {
        self.chain.last().expect("chain always holds genesis")
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn next_block_time(&self) -> SimTime {
        SimTime::ZERO + self.cfg.block_period * (self.head().height + 1)
    }

    /// Finality delay under the currently active validator set.
    pub fn finality_delay(&self) -> SimDuration {
        finality_delay_for(
            self.cfg.algorithm,
            self.cfg.message_delay,
            self.cfg.validation_cost,
            self.validators.members().len(),
        )
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.nonces.get(sender).copied().unwrap_or(0) + 1
    }

    /// Builds a transaction with the next id and nonce for `sender`.
    pub fn build_tx(&mut self, sender: Address, payload: P, now: SimTime) -> Transaction<P> {
        let id = self.next_tx_id;
        self.next_tx_id += 1;
        Transaction { id, sender, nonce: self.next_nonce(&sender), submit_time: now, payload }
    }

    /// Admits a transaction to the mempool.
    pub fn submit_transaction(&mut self, tx: Transaction<P>, now: SimTime) -> Result<u64, LedgerError> {
        if tx.submit_time != now {
            return Err(LedgerError::ClockMismatch { stamped: tx.submit_time, now });
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(LedgerError::NonceGap { sender: tx.sender, expected, got: tx.nonce });
        }
        self.nonces.insert(tx.sender, tx.nonce);
        self.next_tx_id = self.next_tx_id.max(tx.id + 1);
        let id = tx.id;
        self.mempool.push(tx);
        Ok(id)
    }

    /// Convenience: build and submit in one step.
    pub fn submit(&mut self, sender: Address, payload: P, now: SimTime) -> Result<u64, LedgerError> {
        let tx = self.build_tx(sender, payload, now);
        self.submit_transaction(tx, now)
    }

    pub fn vote_add_validator(&mut self, voter: Address, candidate: Address) -> Result<VoteOutcome, LedgerError> {
        let staged = self.staged.get_or_insert_with(|| self.validators.clone());
        if !self.validators.contains(&voter) {
            return Err(LedgerError::NotAValidator(voter));
        }
        staged.vote_add(voter, candidate)
    }

    /// Produces the block due at `now`, taking every pending transaction submitted strictly earlier.
    pub fn produce_block(&mut self, now: SimTime) -> Result<&Block<P>, LedgerError> {
        let due = self.next_block_time();
        if now != due {
            return Err(LedgerError::OffSchedule { now, due });
        }
        if let Some(staged) = self.staged.take() {
            self.validators = staged;
        }
        let height = self.head().height + 1;
        let parent_digest = self.head().digest();

        let (mut ready, waiting): (Vec<_>, Vec<_>) = self.mempool.drain(..).partition(|tx| tx.submit_time < now);
        self.mempool = waiting;
        ready.sort_by_key(|tx| (tx.submit_time, tx.sender, tx.nonce));
        if let Some(cap) = self.cfg.max_txs_per_block {
            if ready.len() > cap {
                let overflow = ready.split_off(cap);
                self.mempool.extend(overflow);
            }
        }

        let block = Block {
            height,
            proposer: self.validators.proposer_at(height),
            timestamp: now,
            finality_time: now + self.finality_delay(),
            parent_digest,
            txs: ready,
        };
        self.chain.push(block);
        Ok(self.head())
    }
}

/// Checks parent links from genesis; returns the first height whose link is broken.
pub fn verify_chain<P: Canonical>(chain: &[Block<P>]) -> Result<(), u64> {
    for pair in chain.windows(2) {
        let (parent, child) = (&pair[0], &pair[1]);
        if child.height != parent.height + 1 || child.parent_digest != parent.digest() {
            return Err(child.height);
        }
    }
    Ok(())
}

/// An item tagged with the block that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stamped<E> {
    pub block_height: u64,
    pub finality_time: SimTime,
    pub tx_index: usize,
    pub event: E,
}

/// Types that expose a filterable kind.
pub trait EventKind {
    type Kind: Copy + Eq;
    fn event_kind(&self) -> Self::Kind;
}

#[derive(Clone, Debug)]
pub struct Subscription<K> {
    filter: Option<K>,
    cursor: usize,
}

/// Append-only event log with finality-gated subscriptions.
#[derive(Clone, Debug)]
pub struct EventLog<E> {
    entries: Vec<Stamped<E>>,
}

impl<E> Default for EventLog<E> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<E: EventKind> EventLog<E> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the events of one block in transaction order.
    pub fn publish<P>(&mut self, block: &Block<P>, events: impl IntoIterator<Item = (usize, E)>) {
        for (tx_index, event) in events {
            self.entries.push(Stamped {
                block_height: block.height,
                finality_time: block.finality_time,
                tx_index,
                event,
            });
        }
    }

    pub fn subscribe(&self, filter: Option<E::Kind>) -> Subscription<E::Kind> {
        Subscription { filter, cursor: 0 }
    }

    /// Returns events that are final at `now` and not yet delivered to `sub`.
    pub fn poll(&self, sub: &mut Subscription<E::Kind>, now: SimTime) -> Vec<&Stamped<E>> {
        let mut out = Vec::new();
        while let Some(entry) = self.entries.get(sub.cursor) {
            if entry.finality_time > now {
                break;
            }
            sub.cursor += 1;
            if sub.filter.is_none_or(|k| entry.event.event_kind() == k) {
                out.push(entry);
            }
        }
        out
    }

    pub fn entries(&self) -> &[Stamped<E>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Stamped<E>> {
        self.entries
    }
}

#[derive(Serialize)]
struct DumpTx<'a> {
    id: u64,
    sender: &'a Address,
    nonce: u64,
    submit_time: f64,
    kind: &'static str,
}

#[derive(Serialize)]
struct DumpBlock<'a> {
    height: u64,
    proposer: &'a Address,
    timestamp: f64,
    finality_time: f64,
    digest: Digest,
    parent_digest: &'a Digest,
    txs: Vec<DumpTx<'a>>,
}

/// JSON array describing every block, for audit and replay.
pub fn chain_dump_json<P: Payload>(chain: &[Block<P>]) -> String {
    let blocks: Vec<_> = chain
        .iter()
        .map(|b| DumpBlock {
            height: b.height,
            proposer: &b.proposer,
            timestamp: b.timestamp.as_secs_f64(),
            finality_time: b.finality_time.as_secs_f64(),
            digest: b.digest(),
            parent_digest: &b.parent_digest,
            txs: b
                .txs
                .iter()
                .map(|tx| DumpTx {
                    id: tx.id,
                    sender: &tx.sender,
                    nonce: tx.nonce,
                    submit_time: tx.submit_time.as_secs_f64(),
                    kind: tx.payload.kind(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&blocks).expect("chain dump serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq, Eq)]
    struct Note(u64);

    impl Canonical for Note {
        fn encode(&self, w: &mut CanonicalWriter) {
            w.u64(self.0);
        }
    }

    impl Payload for Note {
        fn kind(&self) -> &'static str {
            "Note"
        }
    }

    fn addr(label: &str) -> Address {
        Address::from_label(label)
    }

    fn secs(s: f64) -> SimTime {
        SimTime::from_secs_f64(s).unwrap()
    }

    fn ledger(validators: &[&str]) -> Ledger<Note> {
        let cfg = ConsensusConfig::new(ConsensusAlgorithm::Clique, validators.iter().map(|v| addr(v)).collect());
        Ledger::new(cfg).unwrap()
    }

    #[test]
    fn tx_lands_in_next_block() {
        let mut l = ledger(&["v"]);
        l.submit(addr("a"), Note(1), secs(2.0)).unwrap();
        let b = l.produce_block(secs(5.0)).unwrap();
        assert_eq!(b.height, 1);
        assert_eq!(b.txs.len(), 1);
    }

    #[test]
    fn tx_at_block_instant_waits_for_following_block() {
        let mut l = ledger(&["v"]);
        l.produce_block(secs(5.0)).unwrap();
        l.submit(addr("a"), Note(1), secs(5.0)).unwrap();
        // the block at 5.0 was already produced; the tx must not appear in it
        assert!(l.chain()[1].txs.is_empty());
        let b = l.produce_block(secs(10.0)).unwrap();
        assert_eq!(b.txs.len(), 1);

        let mut l = ledger(&["v"]);
        l.submit(addr("a"), Note(1), secs(5.0)).unwrap();
        assert!(l.produce_block(secs(5.0)).unwrap().txs.is_empty());
        assert_eq!(l.produce_block(secs(10.0)).unwrap().txs.len(), 1);
    }

    #[test]
    fn txs_ordered_by_submit_time_then_sender() {
        let mut l = ledger(&["v"]);
        let (a, b) = (addr("a"), addr("b"));
        l.submit(b, Note(2), secs(2.0)).unwrap();
        l.submit(a, Note(1), secs(1.0)).unwrap();
        l.submit(a, Note(3), secs(2.0)).unwrap();
        let block = l.produce_block(secs(5.0)).unwrap();
        let got: Vec<_> = block.txs.iter().map(|t| (t.submit_time, t.sender)).collect();
        let mut tied = [(secs(2.0), a), (secs(2.0), b)];
        tied.sort();
        assert_eq!(got, vec![(secs(1.0), a), tied[0], tied[1]]);
    }

    #[test]
    fn nonce_gap_rejected() {
        let mut l = ledger(&["v"]);
        let a = addr("a");
        let mut tx = l.build_tx(a, Note(0), secs(1.0));
        tx.nonce = 2;
        assert_eq!(
            l.submit_transaction(tx.clone(), secs(1.0)),
            Err(LedgerError::NonceGap { sender: a, expected: 1, got: 2 })
        );
        tx.nonce = 1;
        l.submit_transaction(tx.clone(), secs(1.0)).unwrap();
        // replay of the same nonce is stale
        assert!(matches!(l.submit_transaction(tx, secs(1.0)), Err(LedgerError::NonceGap { expected: 2, got: 1, .. })));
    }

    #[test]
    fn submit_time_must_match_clock() {
        let mut l = ledger(&["v"]);
        let tx = l.build_tx(addr("a"), Note(0), secs(1.0));
        assert!(matches!(l.submit_transaction(tx, secs(2.0)), Err(LedgerError::ClockMismatch { .. })));
    }

    #[test]
    fn round_robin_proposer() {
        let mut l = ledger(&["A", "B", "C"]);
        for k in 1..=4 {
            l.produce_block(secs(5.0 * k as f64)).unwrap();
        }
        assert_eq!(l.chain()[4].proposer, addr("B"));
    }

    #[test]
    fn empty_blocks_and_unbounded_capacity() {
        let mut l = ledger(&["v"]);
        l.produce_block(secs(5.0)).unwrap();
        let b = l.produce_block(secs(10.0)).unwrap();
        assert_eq!(b.height, 2);
        assert!(b.txs.is_empty());
        for i in 0..3 {
            l.submit(addr(&format!("s{i}")), Note(i), secs(11.0)).unwrap();
        }
        assert_eq!(l.produce_block(secs(15.0)).unwrap().txs.len(), 3);
    }

    #[test]
    fn capped_blocks_carry_overflow_forward() {
        let mut cfg = ConsensusConfig::new(ConsensusAlgorithm::Clique, vec![addr("v")]);
        cfg.max_txs_per_block = Some(2);
        let mut l: Ledger<Note> = Ledger::new(cfg).unwrap();
        for i in 0..5 {
            l.submit(addr(&format!("s{i}")), Note(i), secs(1.0)).unwrap();
        }
        assert_eq!(l.produce_block(secs(5.0)).unwrap().txs.len(), 2);
        assert_eq!(l.produce_block(secs(10.0)).unwrap().txs.len(), 2);
        assert_eq!(l.produce_block(secs(15.0)).unwrap().txs.len(), 1);
    }

    #[test]
    fn off_schedule_block_rejected() {
        let mut l = ledger(&["v"]);
        assert!(matches!(l.produce_block(secs(4.0)), Err(LedgerError::OffSchedule { .. })));
        assert!(matches!(l.produce_block(secs(10.0)), Err(LedgerError::OffSchedule { .. })));
    }

    #[test]
    fn finality_delay_values() {
        let mut cfg =
            ConsensusConfig::new(ConsensusAlgorithm::Clique, ["a", "b", "c", "d"].iter().map(|v| addr(v)).collect());
        assert_eq!(finality_delay(&cfg), SimDuration::ZERO);
        cfg.algorithm = ConsensusAlgorithm::Qbft;
        // 3 * 0.05 + 0.05 * ceil(log2 4)
        assert_eq!(finality_delay(&cfg), SimDuration::from_millis(250));
    }

    #[test]
    fn ceil_log2_small_values() {
        let expected = [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (7, 3), (8, 3), (9, 4), (31, 5)];
        for (n, want) in expected {
            assert_eq!(ceil_log2(n), want, "n = {n}");
        }
    }

    #[test]
    fn qbft_warning_below_four_validators() {
        let cfg = ConsensusConfig::new(ConsensusAlgorithm::Qbft, vec![addr("a"), addr("b")]);
        assert_eq!(cfg.warnings().len(), 1);
        let cfg = ConsensusConfig::new(ConsensusAlgorithm::Clique, vec![addr("a")]);
        assert!(cfg.warnings().is_empty());
    }

    #[test]
    fn validator_majority_admission() {
        let (a, b, c, d, x) = (addr("a"), addr("b"), addr("c"), addr("d"), addr("x"));
        let mut set = ValidatorSet::new(vec![a, b, c]).unwrap();
        assert!(matches!(set.vote_add(a, x), Ok(VoteOutcome::Pending { votes: 1, .. })));
        assert_eq!(set.vote_add(b, x), Ok(VoteOutcome::Admitted));
        assert!(set.contains(&x));
        assert_eq!(set.votes_for(&x), 0);

        let mut set = ValidatorSet::new(vec![a, b, c, d]).unwrap();
        set.vote_add(a, x).unwrap();
        assert!(matches!(set.vote_add(b, x), Ok(VoteOutcome::Pending { votes: 2, needed: 3 })));
        assert!(!set.contains(&x));

        assert_eq!(set.vote_add(x, a), Err(LedgerError::NotAValidator(x)));
        assert_eq!(set.vote_add(a, b), Err(LedgerError::AlreadyMember(b)));
    }

    #[test]
    fn admission_applies_at_next_block() {
        let (a, b, c, x) = (addr("a"), addr("b"), addr("c"), addr("x"));
        let mut cfg = ConsensusConfig::new(ConsensusAlgorithm::Qbft, vec![a, b, c]);
        cfg.validation_cost = SimDuration::from_millis(50);
        let mut l: Ledger<Note> = Ledger::new(cfg).unwrap();
        l.vote_add_validator(a, x).unwrap();
        assert_eq!(l.vote_add_validator(b, x), Ok(VoteOutcome::Admitted));
        assert_eq!(l.validators().members().len(), 3);
        let b1 = l.produce_block(secs(5.0)).unwrap();
        // four validators now: 3 * 0.05 + 0.05 * 2
        assert_eq!(b1.finality_time, secs(5.25));
        assert_eq!(l.validators().members().len(), 4);
    }

    #[test]
    fn chain_links_verify_and_detect_tampering() {
        let mut l = ledger(&["v"]);
        l.submit(addr("a"), Note(1), secs(1.0)).unwrap();
        for k in 1..=3 {
            l.produce_block(secs(5.0 * k as f64)).unwrap();
        }
        let mut chain = l.into_chain();
        assert_eq!(verify_chain(&chain), Ok(()));
        chain[1].txs[0].payload = Note(99);
        assert_eq!(verify_chain(&chain), Err(2));
    }

    #[derive(Debug, Clone, PartialEq)]
    enum Ev {
        A(u32),
        B(u32),
    }

    impl EventKind for Ev {
        type Kind = u8;
        fn event_kind(&self) -> u8 {
            match self {
                Ev::A(_) => 0,
                Ev::B(_) => 1,
            }
        }
    }

    #[test]
    fn events_visible_only_after_finality() {
        let mut cfg =
            ConsensusConfig::new(ConsensusAlgorithm::Qbft, ["a", "b", "c", "d"].iter().map(|v| addr(v)).collect());
        cfg.message_delay = SimDuration::from_millis(50);
        let mut l: Ledger<Note> = Ledger::new(cfg).unwrap();
        let block = l.produce_block(secs(5.0)).unwrap().clone();
        let mut log = EventLog::new();
        log.publish(&block, vec![(0, Ev::A(1)), (1, Ev::B(2)), (2, Ev::A(3))]);

        let mut all = log.subscribe(None);
        assert!(log.poll(&mut all, secs(5.0)).is_empty());
        let got: Vec<_> = log.poll(&mut all, secs(5.25)).into_iter().map(|s| s.event.clone()).collect();
        assert_eq!(got, vec![Ev::A(1), Ev::B(2), Ev::A(3)]);
        assert!(log.poll(&mut all, secs(6.0)).is_empty());

        let mut only_a = log.subscribe(Some(0));
        let got: Vec<_> = log.poll(&mut only_a, secs(9.0)).into_iter().map(|s| s.tx_index).collect();
        assert_eq!(got, vec![0, 2]);
    }

    #[test]
    fn chain_dump_lists_blocks() {
        let mut l = ledger(&["v"]);
        l.submit(addr("a"), Note(1), secs(1.0)).unwrap();
        l.produce_block(secs(5.0)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&chain_dump_json(l.chain())).unwrap();
        let blocks = json.as_array().unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1]["timestamp"], 5.0);
        assert_eq!(blocks[1]["txs"][0]["kind"], "Note");
        assert_eq!(blocks[1]["txs"][0]["id"], 0);
    }
}
