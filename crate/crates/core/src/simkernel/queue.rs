// SPDX-License-Identifier: Apache-2.0

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::units::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent<A> {
    pub fire_time: SimTime,
    /// Assigned at scheduling time; breaks ties between equal fire times.
    pub sequence: u64,
    pub action: A,
}

impl<A> PartialEq for Keyed<A> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<A> Eq for Keyed<A> {}

impl<A> PartialOrd for Keyed<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Keyed<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

struct Keyed<A>(SimEvent<A>);

impl<A> Keyed<A> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_time, self.0.sequence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot schedule at {at}: clock is already at {now}")]
pub struct SchedulingInPast {
    pub at: SimTime,
    pub now: SimTime,
}

/// Discrete-event queue dispatching in `(fire_time, sequence)` order.
pub struct EventQueue<A> {
    heap: BinaryHeap<Reverse<Keyed<A>>>,
    now: SimTime,
    next_sequence: u64,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), now: SimTime::ZERO, next_sequence: 0 }
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, action: A) -> Result<u64, SchedulingInPast> {
        if at < self.now {
            return Err(SchedulingInPast { at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Reverse(Keyed(SimEvent { fire_time: at, sequence, action })));
        Ok(sequence)
    }

    /// Pops the next event and moves the clock to it. `None` ends the simulation.
    pub fn advance(&mut self) -> Option<SimEvent<A>> {
        let Reverse(Keyed(ev)) = self.heap.pop()?;
        debug_assert!(ev.fire_time >= self.now);
        self.now = ev.fire_time;
        Some(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(s: u64) -> SimTime {
        SimTime::from_micros(s * 1_000_000)
    }

    #[test]
    fn ties_dispatch_in_scheduling_order() {
        let mut q = EventQueue::new();
        q.schedule(at(2), "late").unwrap();
        q.schedule(at(1), "first").unwrap();
        q.schedule(at(1), "second").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.advance()).map(|e| (e.action, e.sequence)).collect();
        assert_eq!(order, vec![("first", 1), ("second", 2), ("late", 0)]);
        assert_eq!(q.now(), at(2));
    }

    #[test]
    fn past_scheduling_rejected() {
        let mut q = EventQueue::new();
        q.schedule(at(3), ()).unwrap();
        q.advance();
        assert_eq!(q.schedule(at(2), ()), Err(SchedulingInPast { at: at(2), now: at(3) }));
        assert!(q.schedule(at(3), ()).is_ok());
    }

    #[test]
    fn empty_queue_signals_end() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert!(q.advance().is_none());
        assert!(q.is_empty());
    }
}
