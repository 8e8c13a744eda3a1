use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::types::{Message, TimeMs, VehicleId};

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    VehicleSpawn(VehicleId),
    MsgArrival(Box<Message>),
    TriggerCross(VehicleId),
    RetryTimer(VehicleId),
    AckTimer,
    SamTimer,
    BsmTimer(VehicleId),
    VehicleDespawn(VehicleId),
    SimEnd,
}

impl EventKind {
    /// Processing band within one millisecond. Vehicles appear first, then
    /// packet arrivals, then timers and trigger crossings, then departures.
    /// A reception and a timer landing on the same ms therefore resolve in
    /// favor of the reception.
    pub fn band(&self) -> u8 {
        match self {
            EventKind::VehicleSpawn(_) => 0,
            EventKind::MsgArrival(_) => 1,
            EventKind::TriggerCross(_)
            | EventKind::RetryTimer(_)
            | EventKind::AckTimer
            | EventKind::SamTimer
            | EventKind::BsmTimer(_) => 2,
            EventKind::VehicleDespawn(_) => 3,
            EventKind::SimEnd => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::VehicleSpawn(_) => "spawn",
            EventKind::MsgArrival(_) => "arrival",
            EventKind::TriggerCross(_) => "trigger",
            EventKind::RetryTimer(_) => "retry_timer",
            EventKind::AckTimer => "ack_timer",
            EventKind::SamTimer => "sam_timer",
            EventKind::BsmTimer(_) => "bsm_timer",
            EventKind::VehicleDespawn(_) => "despawn",
            EventKind::SimEnd => "sim_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: TimeMs,
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    fn key(&self) -> (TimeMs, u8, u64) {
        (self.time, self.kind.band(), self.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("event {kind} scheduled at {at} but the clock is already at {now}")]
pub struct CausalityError {
    pub kind: &'static str,
    pub at: TimeMs,
    pub now: TimeMs,
}

/// Min-ordered event queue with a monotone clock.
///
/// Events pop in `(time, band, seq)` order, where `seq` is the insertion
/// counter. Scheduling before the current clock is rejected.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    now: TimeMs,
}

impl EventQueue {
    pub fn new() -> Self {
        EventQueue::default()
    }

    pub fn now(&self) -> TimeMs {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: TimeMs, kind: EventKind) -> Result<u64, CausalityError> {
        if time < self.now {
            return Err(CausalityError {
                kind: kind.name(),
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { time, seq, kind }));
        Ok(seq)
    }

    pub fn pop(&mut self) -> Option<Event> {
        let Reverse(ev) = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        Some(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_times_pop_in_insertion_order_within_band() {
        let mut q = EventQueue::new();
        q.schedule(TimeMs(5), EventKind::TriggerCross(VehicleId(2)))
            .unwrap();
        q.schedule(TimeMs(5), EventKind::TriggerCross(VehicleId(1)))
            .unwrap();
        q.schedule(TimeMs(3), EventKind::SamTimer).unwrap();
        let order: Vec<EventKind> = std::iter::from_fn(|| q.pop()).map(|e| e.kind).collect();
        assert_eq!(
            order,
            vec![
                EventKind::SamTimer,
                EventKind::TriggerCross(VehicleId(2)),
                EventKind::TriggerCross(VehicleId(1)),
            ]
        );
    }

    #[test]
    fn receptions_precede_timers_in_the_same_ms() {
        let mut q = EventQueue::new();
        q.schedule(TimeMs(600), EventKind::RetryTimer(VehicleId(1)))
            .unwrap();
        let msg = Message {
            kind: crate::types::MessageKind::Ack,
            sender: crate::types::EntityId::Rsu,
            tx_time: TimeMs(500),
            tx_position: Default::default(),
            recipients: vec![VehicleId(1)],
            seq: 0,
        };
        q.schedule(TimeMs(600), EventKind::MsgArrival(Box::new(msg)))
            .unwrap();
        assert_eq!(q.pop().unwrap().kind.name(), "arrival");
        assert_eq!(q.pop().unwrap().kind.name(), "retry_timer");
    }

    #[test]
    fn past_scheduling_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(TimeMs(10), EventKind::AckTimer).unwrap();
        q.pop();
        assert_eq!(q.now(), TimeMs(10));
        let err = q.schedule(TimeMs(9), EventKind::AckTimer).unwrap_err();
        assert_eq!(err.now, TimeMs(10));
        assert!(q.schedule(TimeMs(10), EventKind::AckTimer).is_ok());
    }

    proptest! {
        #[test]
        fn pops_are_totally_ordered(times in prop::collection::vec(0u64..50, 1..200)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                let kind = if i % 3 == 0 { EventKind::AckTimer } else { EventKind::VehicleDespawn(VehicleId(i as u32)) };
                q.schedule(TimeMs(*t), kind).unwrap();
            }
            let mut last: Option<(TimeMs, u8, u64)> = None;
            while let Some(ev) = q.pop() {
                let key = (ev.time, ev.kind.band(), ev.seq);
                if let Some(prev) = last {
                    prop_assert!(prev < key);
                }
                last = Some(key);
            }
        }
    }
}
