// SPDX-License-Identifier: Apache-2.0

//! Off-chain behaviour of the MEC orchestrators.
//!
//! Providers price announcements and run deployments through a FIFO queue;
//! consumers select a winner once enough bids are final and attach to the
//! overlay after the deployment is confirmed. The SOA baseline federates
//! over direct request/response with the same deployment model and queues.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contract::{AnnId, ContractCall, OverlayEndpoint, ServiceRequirements, SlaTerms};
use crate::ledger::Address;
use crate::metrics::FederationTrace;
use crate::units::{Amount, SimDuration, SimTime};

/// One row of the bundled tariff table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffEntry {
    pub country: String,
    /// Currency per unit, a proxy for the local electricity price.
    pub tariff: f64,
    /// Offset from UTC in hours, applied to the scenario hour.
    #[serde(default)]
    pub utc_offset_h: i32,
}

impl TariffEntry {
    fn new(country: &str, tariff: f64, utc_offset_h: i32) -> Self {
        Self { country: country.to_owned(), tariff, utc_offset_h }
    }
}

/// Illustrative tariffs, assigned to providers round-robin.
pub fn default_tariffs() -> Vec<TariffEntry> {
    vec![
        TariffEntry::new("ES", 0.100, 1),
        TariffEntry::new("PT", 0.103, 0),
        TariffEntry::new("DE", 0.135, 1),
        TariffEntry::new("FR", 0.102, 1),
        TariffEntry::new("IT", 0.106, 1),
        TariffEntry::new("NL", 0.108, 1),
    ]
}

/// Night valley, flat daytime, evening peak.
pub fn default_time_factor_curve() -> [f64; 24] {
    let mut curve = [1.0; 24];
    for (hour, factor) in curve.iter_mut().enumerate() {
        *factor = match hour {
            0..=5 => 0.8,
            6..=7 | 22..=23 => 0.9,
            8..=16 => 1.0,
            17..=21 => 1.3,
            _ => unreachable!(),
        };
    }
    curve
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PricingContext {
    pub hour_of_day: u8,
    pub time_factor_curve: [f64; 24],
    pub jitter_fraction: f64,
}

impl PricingContext {
    pub fn validate(&self) -> Result<(), String> {
        if self.hour_of_day > 23 {
            return Err(format!("hour_of_day {} out of range", self.hour_of_day));
        }
        if let Some(bad) = self.time_factor_curve.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(format!("time factor {bad} must be positive"));
        }
        if !(0.0..1.0).contains(&self.jitter_fraction) {
            return Err(format!("jitter_fraction {} must be in [0, 1)", self.jitter_fraction));
        }
        Ok(())
    }

    /// Local hour for a provider `utc_offset_h` away from the scenario hour.
    pub fn local(&self, utc_offset_h: i32) -> PricingContext {
        let hour = (i32::from(self.hour_of_day) + utc_offset_h).rem_euclid(24) as u8;
        PricingContext { hour_of_day: hour, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeploymentModel {
    pub container_start: SimDuration,
    pub vxlan_setup: SimDuration,
    pub confirm_overhead: SimDuration,
    /// When set, a provider takes the next job only after the previous
    /// deployment's confirmation has been acknowledged.
    pub sequential_confirmation: bool,
}

impl Default for DeploymentModel {
    fn default() -> Self {
        Self {
            container_start: SimDuration::from_millis(1_500),
            vxlan_setup: SimDuration::from_millis(500),
            confirm_overhead: SimDuration::from_millis(100),
            sequential_confirmation: true,
        }
    }
}

impl DeploymentModel {
    pub fn service_time(&self) -> SimDuration {
        self.container_start + self.vxlan_setup
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeploymentJob {
    pub ann_id: AnnId,
    pub consumer: Address,
    pub arrival: SimTime,
}

/// A finished or running job with its service interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobRecord {
    pub ann_id: AnnId,
    pub arrival: SimTime,
    pub start: SimTime,
    pub done: Option<SimTime>,
}

/// Work the simulation kernel must schedule on behalf of an agent.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentAction {
    Submit { at: SimTime, sender: Address, call: ContractCall },
    DeploymentStarted { at: SimTime, provider: Address, ann_id: AnnId },
    DeploymentDone { at: SimTime, provider: Address, ann_id: AnnId },
    Established { at: SimTime, consumer: Address, ann_id: AnnId },
}

#[derive(Clone, Debug)]
pub struct ProviderProfile {
    pub address: Address,
    pub country: String,
    pub base_tariff: f64,
    pub utc_offset_h: i32,
    pub deploy_model: DeploymentModel,
    pub endpoint: OverlayEndpoint,
    /// Jobs waiting for the provider, strictly FIFO.
    pub queue: VecDeque<DeploymentJob>,
    pub reaction_delay: SimDuration,
    pub abstain_probability: f64,
    /// A crashed provider keeps bidding but never finishes a deployment.
    pub crashed: bool,
    active: Option<JobRecord>,
    /// Earliest time the provider may start the next job in the SOA path.
    soa_free_at: SimTime,
    history: Vec<JobRecord>,
    enqueued: usize,
}

impl ProviderProfile {
    pub fn new(
        address: Address,
        tariff: &TariffEntry,
        deploy_model: DeploymentModel,
        endpoint: OverlayEndpoint,
    ) -> Self {
        Self {
            address,
            country: tariff.country.clone(),
            base_tariff: tariff.tariff,
            utc_offset_h: tariff.utc_offset_h,
            deploy_model,
            endpoint,
            queue: VecDeque::new(),
            reaction_delay: SimDuration::from_millis(100),
            abstain_probability: 0.0,
            crashed: false,
            active: None,
            soa_free_at: SimTime::ZERO,
            history: Vec::new(),
            enqueued: 0,
        }
    }

    pub fn jobs_enqueued(&self) -> usize {
        self.enqueued
    }

    pub fn jobs_completed(&self) -> usize {
        self.history.iter().filter(|j| j.done.is_some()).count()
    }

    /// Jobs queued or in service.
    pub fn jobs_pending(&self) -> usize {
        self.queue.len() + self.active.as_ref().map_or(0, |_| 1)
    }

    /// Service intervals of every job that has started, in start order.
    pub fn job_history(&self) -> &[JobRecord] {
        &self.history
    }

    pub fn is_busy(&self) -> bool {
        self.active.is_some()
    }

    /// Reacts to a new announcement with a bid, unless configured to abstain.
    pub fn on_service_announced<R: Rng>(
        &self,
        ann_id: AnnId,
        now: SimTime,
        ctx: &PricingContext,
        rng: &mut R,
    ) -> Option<AgentAction> {
        // draw in a fixed order so abstention never shifts the price stream
        let abstain_draw: f64 = rng.gen();
        let price = compute_bid_price(self, ctx, rng);
        if abstain_draw < self.abstain_probability {
            return None;
        }
        Some(AgentAction::Submit {
            at: now + self.reaction_delay,
            sender: self.address,
            call: ContractCall::PlaceBid { ann_id, price },
        })
    }

    /// Direct price answer for the SOA path, `None` when abstaining.
    /// Consumes the stream exactly like [`Self::on_service_announced`].
    pub fn quote<R: Rng>(&self, ctx: &PricingContext, rng: &mut R) -> Option<Amount> {
        let abstain_draw: f64 = rng.gen();
        let price = compute_bid_price(self, ctx, rng);
        (abstain_draw >= self.abstain_probability).then_some(price)
    }

    /// Queues the deployment for a won announcement.
    pub fn on_provider_chosen(&mut self, ann_id: AnnId, consumer: Address, now: SimTime) -> Vec<AgentAction> {
        self.enqueued += 1;
        self.queue.push_back(DeploymentJob { ann_id, consumer, arrival: now + self.reaction_delay });
        if self.active.is_none() {
            self.start_next(now)
        } else {
            Vec::new()
        }
    }

    fn start_next(&mut self, now: SimTime) -> Vec<AgentAction> {
        let Some(job) = self.queue.pop_front() else {
            return Vec::new();
        };
        let start = job.arrival.max(now);
        let record = JobRecord { ann_id: job.ann_id, arrival: job.arrival, start, done: None };
        self.active = Some(record.clone());
        self.history.push(record);
        let mut out = vec![AgentAction::DeploymentStarted { at: start, provider: self.address, ann_id: job.ann_id }];
        if !self.crashed {
            out.push(AgentAction::DeploymentDone {
                at: start + self.deploy_model.service_time(),
                provider: self.address,
                ann_id: job.ann_id,
            });
        }
        out
    }

    /// Containers and tunnel are up: submit the confirmation, and move on unless
    /// the model waits for the confirmation to be final.
    pub fn on_deployment_done(&mut self, ann_id: AnnId, now: SimTime) -> Vec<AgentAction> {
        if let Some(rec) = self.history.iter_mut().rev().find(|r| r.ann_id == ann_id) {
            rec.done = Some(now);
        }
        let mut out = vec![AgentAction::Submit {
            at: now + self.deploy_model.confirm_overhead,
            sender: self.address,
            call: ContractCall::ConfirmDeployment { ann_id, provider_endpoint: self.endpoint.clone() },
        }];
        if !self.deploy_model.sequential_confirmation {
            self.active = None;
            out.extend(self.start_next(now));
        }
        out
    }

    /// The provider's own confirmation became final.
    pub fn on_confirmation_final(&mut self, ann_id: AnnId, now: SimTime) -> Vec<AgentAction> {
        if !self.deploy_model.sequential_confirmation {
            return Vec::new();
        }
        match &self.active {
            Some(active) if active.ann_id == ann_id => {
                self.active = None;
                self.start_next(now)
            }
            _ => Vec::new(),
        }
    }
}

/// `base_tariff × time factor × (1 + jitter)`, jitter uniform in `±jitter_fraction`, rounded to 6 decimals.
pub fn compute_bid_price<R: Rng>(profile: &ProviderProfile, ctx: &PricingContext, rng: &mut R) -> Amount {
    let local = ctx.local(profile.utc_offset_h);
    let factor = local.time_factor_curve[usize::from(local.hour_of_day)];
    let j = ctx.jitter_fraction;
    let jitter: f64 = rng.gen_range(-j..=j);
    let price = profile.base_tariff * factor * (1.0 + jitter);
    Amount::from_f64(price).unwrap_or(Amount::ZERO).max(Amount::from_micros(1))
}

#[derive(Clone, Debug)]
pub struct ConsumerProfile {
    pub address: Address,
    pub service_requirements: ServiceRequirements,
    pub endpoint: OverlayEndpoint,
    pub sla: SlaTerms,
    pub deposit: Amount,
    pub attach_time: SimDuration,
    pub reaction_delay: SimDuration,
    chosen: bool,
}

impl ConsumerProfile {
    pub fn new(
        address: Address,
        service_requirements: ServiceRequirements,
        endpoint: OverlayEndpoint,
        sla: SlaTerms,
        deposit: Amount,
        attach_time: SimDuration,
    ) -> Self {
        Self {
            address,
            service_requirements,
            endpoint,
            sla,
            deposit,
            attach_time,
            reaction_delay: SimDuration::from_millis(100),
            chosen: false,
        }
    }

    pub fn announce(&self, now: SimTime) -> AgentAction {
        AgentAction::Submit {
            at: now,
            sender: self.address,
            call: ContractCall::AnnounceService {
                requirements: self.service_requirements.clone(),
                consumer_endpoint: self.endpoint.clone(),
                sla: self.sla.clone(),
                deposit: self.deposit,
            },
        }
    }

    /// Closes the bid window on the first final block where enough bids exist.
    pub fn on_bid_placed(&mut self, ann_id: AnnId, bid_count: u32, min_bids: u32, now: SimTime) -> Option<AgentAction> {
        if self.chosen || bid_count < min_bids {
            return None;
        }
        self.chosen = true;
        Some(AgentAction::Submit {
            at: now + self.reaction_delay,
            sender: self.address,
            call: ContractCall::ChooseProvider { ann_id },
        })
    }

    pub fn has_chosen(&self) -> bool {
        self.chosen
    }

    /// Completes the overlay and attaches containers; the federation is
    /// established once that is done, and the close call is submitted then.
    pub fn on_deployment_confirmed(&self, ann_id: AnnId, now: SimTime) -> Vec<AgentAction> {
        let done = now + self.attach_time;
        vec![
            AgentAction::Established { at: done, consumer: self.address, ann_id },
            AgentAction::Submit { at: done, sender: self.address, call: ContractCall::CloseFederation { ann_id } },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("no provider answered the price query")]
    ProviderUnavailable,
}

/// Direct federation without a ledger: one parallel price query, a deployment
/// request, the provider's queued deployment, an HTTP confirmation and the
/// consumer attach.
///
/// `quotes[i]` is provider `i`'s answer, `None` if it did not respond.
/// Provider queues are shared across calls, so consumers must be federated
/// in arrival order.
pub fn soa_federate(
    consumer: &ConsumerProfile,
    ann_id: AnnId,
    start: SimTime,
    providers: &mut [ProviderProfile],
    quotes: &[Option<Amount>],
    rtt: SimDuration,
) -> Result<FederationTrace, AgentError> {
    let (idx, _) = providers
        .iter()
        .zip(quotes)
        .enumerate()
        .filter_map(|(i, (p, q))| q.filter(|_| !p.crashed).map(|price| (i, (price, p.address))))
        .min_by_key(|(_, key)| *key)
        .ok_or(AgentError::ProviderUnavailable)?;
    let provider = &mut providers[idx];

    let quotes_in = start + rtt;
    let request_in = quotes_in + rtt;
    let deploy_start = request_in.max(provider.soa_free_at);
    let deploy_done = deploy_start + provider.deploy_model.service_time();
    let confirmed = deploy_done + rtt;
    provider.soa_free_at = if provider.deploy_model.sequential_confirmation { confirmed } else { deploy_done };
    provider.enqueued += 1;
    provider.history.push(JobRecord { ann_id, arrival: request_in, start: deploy_start, done: Some(deploy_done) });

    let established = confirmed + consumer.attach_time;
    Ok(FederationTrace {
        ann_id: Some(ann_id),
        consumer: consumer.address,
        winner: Some(provider.address),
        announce_submitted: Some(start),
        announce_finalized: Some(start),
        second_bid_finalized: Some(quotes_in),
        winner_finalized: Some(quotes_in),
        deployment_started: Some(deploy_start),
        confirm_finalized: Some(confirmed),
        established: Some(established),
        close_finalized: None,
        ..FederationTrace::default()
    })
}
