//! Handshake state machines for the vehicle (OBU) and the roadside unit (RSU).
//!
//! Every transition is a pure function: it takes the current state and the
//! triggering input, and returns the next state plus a [`ProtocolOutput`]
//! listing messages to transmit and timers to arm. The engine owns the clock
//! and the channel; nothing here touches either.
//!
//! OBU lifecycle: `Idle -> SamStored -> AwaitingAck -> Complete | Failed`.
//! A vehicle that crosses its trigger line before hearing any SAM stays
//! `Idle` with the crossing remembered, and jumps straight to `AwaitingAck`
//! on its first SAM.

use std::fmt;

use crate::config::ScenarioConfig;
use crate::types::{MessageKind, TimeMs, VehicleId};

/// Timer and batching parameters the state machines need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    pub sum_repeat_interval: TimeMs,
    pub ack_interval: TimeMs,
    pub ack_batch_size: usize,
    pub sam_period: TimeMs,
}

impl ProtocolParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        ProtocolParams {
            sum_repeat_interval: cfg.sum_repeat_interval,
            ack_interval: cfg.ack_interval,
            ack_batch_size: cfg.ack_batch_size as usize,
            sam_period: cfg.sam_period,
        }
    }
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams::from_config(&ScenarioConfig::default())
    }
}

/// A message the state machine wants sent now. The engine stamps sender,
/// time, and position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub kind: MessageKind,
    pub recipients: Vec<VehicleId>,
}

impl Outgoing {
    fn sum() -> Self {
        Outgoing {
            kind: MessageKind::Sum,
            recipients: Vec::new(),
        }
    }

    fn sam() -> Self {
        Outgoing {
            kind: MessageKind::Sam,
            recipients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerKind {
    SumRetry(VehicleId),
    AckFlush,
    SamPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerRequest {
    pub deadline: TimeMs,
    pub kind: TimerKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProtocolOutput {
    pub transmissions: Vec<Outgoing>,
    pub timers: Vec<TimerRequest>,
}

impl ProtocolOutput {
    pub fn is_empty(&self) -> bool {
        self.transmissions.is_empty() && self.timers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("{vehicle} crossed its trigger line again while {phase}")]
    RepeatedTrigger { vehicle: VehicleId, phase: ObuPhase },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObuPhase {
    Idle,
    SamStored,
    AwaitingAck,
    Complete,
    Failed,
}

impl ObuPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, ObuPhase::Complete | ObuPhase::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObuPhase::Idle => "idle",
            ObuPhase::SamStored => "sam_stored",
            ObuPhase::AwaitingAck => "awaiting_ack",
            ObuPhase::Complete => "complete",
            ObuPhase::Failed => "failed",
        }
    }
}

impl fmt::Display for ObuPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObuState {
    pub id: VehicleId,
    pub phase: ObuPhase,
    /// Time the stored SAM was heard.
    pub sam_rx_time: Option<TimeMs>,
    /// First SUM transmission.
    pub first_sum_tx_time: Option<TimeMs>,
    /// SUM transmissions so far.
    pub attempts: u32,
    pub retry_deadline: Option<TimeMs>,
    /// ACK reception naming this vehicle.
    pub ack_rx_time: Option<TimeMs>,
    /// Crossed the trigger line while still `Idle`.
    pub crossed_unannounced: bool,
}

impl ObuState {
    pub fn new(id: VehicleId) -> Self {
        ObuState {
            id,
            phase: ObuPhase::Idle,
            sam_rx_time: None,
            first_sum_tx_time: None,
            attempts: 0,
            retry_deadline: None,
            ack_rx_time: None,
            crossed_unannounced: false,
        }
    }

    fn start_transaction(mut self, now: TimeMs, params: &ProtocolParams) -> (Self, ProtocolOutput) {
        let deadline = now + params.sum_repeat_interval;
        self.phase = ObuPhase::AwaitingAck;
        self.attempts = 1;
        self.first_sum_tx_time = Some(now);
        self.retry_deadline = Some(deadline);
        self.crossed_unannounced = false;
        let out = ProtocolOutput {
            transmissions: vec![Outgoing::sum()],
            timers: vec![TimerRequest {
                deadline,
                kind: TimerKind::SumRetry(self.id),
            }],
        };
        (self, out)
    }

    pub fn on_sam(mut self, now: TimeMs, params: &ProtocolParams) -> (Self, ProtocolOutput) {
        if self.phase != ObuPhase::Idle {
            return (self, ProtocolOutput::default());
        }
        self.sam_rx_time = Some(now);
        if self.crossed_unannounced {
            return self.start_transaction(now, params);
        }
        self.phase = ObuPhase::SamStored;
        (self, ProtocolOutput::default())
    }

    pub fn on_trigger(
        mut self,
        now: TimeMs,
        params: &ProtocolParams,
    ) -> Result<(Self, ProtocolOutput), ProtocolError> {
        match self.phase {
            ObuPhase::SamStored => Ok(self.start_transaction(now, params)),
            ObuPhase::Idle if !self.crossed_unannounced => {
                self.crossed_unannounced = true;
                Ok((self, ProtocolOutput::default()))
            }
            phase => Err(ProtocolError::RepeatedTrigger {
                vehicle: self.id,
                phase,
            }),
        }
    }

    /// Retransmits if `now` is the armed retry deadline; stale timers are ignored.
    pub fn on_retry_timer(
        mut self,
        now: TimeMs,
        params: &ProtocolParams,
    ) -> (Self, ProtocolOutput) {
        if self.phase != ObuPhase::AwaitingAck || self.retry_deadline != Some(now) {
            return (self, ProtocolOutput::default());
        }
        let deadline = now + params.sum_repeat_interval;
        self.attempts += 1;
        self.retry_deadline = Some(deadline);
        let out = ProtocolOutput {
            transmissions: vec![Outgoing::sum()],
            timers: vec![TimerRequest {
                deadline,
                kind: TimerKind::SumRetry(self.id),
            }],
        };
        (self, out)
    }

    pub fn on_ack(mut self, now: TimeMs, recipients: &[VehicleId]) -> (Self, ProtocolOutput) {
        if self.phase == ObuPhase::AwaitingAck && recipients.contains(&self.id) {
            self.phase = ObuPhase::Complete;
            self.ack_rx_time = Some(now);
            self.retry_deadline = None;
        }
        (self, ProtocolOutput::default())
    }

    /// The vehicle left the stretch or the run ended with the transaction open.
    pub fn abandon(mut self) -> Self {
        if self.phase == ObuPhase::AwaitingAck {
            self.phase = ObuPhase::Failed;
            self.retry_deadline = None;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsuState {
    /// Vehicles whose SUM has not been acknowledged yet, in arrival order.
    pub pending: Vec<VehicleId>,
    pub ack_deadline: Option<TimeMs>,
    pub next_sam_time: TimeMs,
    /// Recipient entries sent in ACKs so far.
    pub served_total: u64,
}

impl RsuState {
    pub fn new(first_sam: TimeMs) -> Self {
        RsuState {
            pending: Vec::new(),
            ack_deadline: None,
            next_sam_time: first_sam,
            served_total: 0,
        }
    }

    fn flush(&mut self) -> Outgoing {
        let recipients = std::mem::take(&mut self.pending);
        self.ack_deadline = None;
        self.served_total += recipients.len() as u64;
        Outgoing {
            kind: MessageKind::Ack,
            recipients,
        }
    }

    pub fn on_sum(
        mut self,
        now: TimeMs,
        sender: VehicleId,
        params: &ProtocolParams,
    ) -> (Self, ProtocolOutput) {
        let mut out = ProtocolOutput::default();
        if self.pending.contains(&sender) {
            return (self, out);
        }
        let was_empty = self.pending.is_empty();
        self.pending.push(sender);
        if self.pending.len() >= params.ack_batch_size {
            out.transmissions.push(self.flush());
        } else if was_empty {
            let deadline = now + params.ack_interval;
            self.ack_deadline = Some(deadline);
            out.timers.push(TimerRequest {
                deadline,
                kind: TimerKind::AckFlush,
            });
        }
        (self, out)
    }

    /// Flushes the pending batch if `now` is the armed deadline.
    pub fn on_ack_timer(mut self, now: TimeMs) -> (Self, ProtocolOutput) {
        let mut out = ProtocolOutput::default();
        if self.ack_deadline == Some(now) && !self.pending.is_empty() {
            out.transmissions.push(self.flush());
        }
        (self, out)
    }

    pub fn on_sam_timer(mut self, now: TimeMs, params: &ProtocolParams) -> (Self, ProtocolOutput) {
        if now != self.next_sam_time {
            return (self, ProtocolOutput::default());
        }
        self.next_sam_time = now + params.sam_period;
        let out = ProtocolOutput {
            transmissions: vec![Outgoing::sam()],
            timers: vec![TimerRequest {
                deadline: self.next_sam_time,
                kind: TimerKind::SamPeriod,
            }],
        };
        (self, out)
    }
}
