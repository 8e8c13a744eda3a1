//! Deterministic discrete-event simulation of the zone-activated handshake.
//!
//! One run owns its clock, event queue, and random streams; nothing is shared
//! between runs. A run is a pure function of its [`ScenarioConfig`] (seed
//! included), so batches give identical results serially or in parallel.
//!
//! Every V2I packet (SAM, SUM, ACK) reaches its receivers half a τ draw after
//! transmission, so an unbatched SUM/ACK round trip spans one τ on average.
//! Receivers sample reception independently at their distance from the
//! transmitter at arrival time. BSMs are counted at transmit time only and
//! never feed back into the service.

mod queue;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

pub use queue::{CausalityError, Event, EventKind, EventQueue};

use crate::channel::{sample_reception, sample_tau, ChannelError, PerCurve, PerProfile, TauModel};
use crate::config::{join_violations, validate_config, ScenarioConfig, Violation};
use crate::metrics::{CompletionRecord, Outcome, RunSummary};
use crate::mobility::{generate_arrivals, ArrivalProcess, Freeway, VehicleKinematics};
use crate::protocol::{
    ObuPhase, ObuState, ProtocolError, ProtocolOutput, ProtocolParams, RsuState, TimerKind,
};
use crate::types::{EntityId, Message, MessageKind, Position, TimeMs, VehicleId};

const STREAM_MOBILITY: u64 = 0;
const STREAM_SERVICE: u64 = 1;
const STREAM_BSM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid config: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("protocol violation: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("event ordering violated: {0}")]
    Causality(#[from] CausalityError),
    #[error("cannot write event trace: {0}")]
    Trace(#[from] std::io::Error),
}

/// Calls `on_outcome(receiver, received)` for every candidate except the
/// sender, drawing one reception sample per candidate at its Euclidean
/// distance from the transmitter.
pub fn for_each_reception<R, I, F>(
    msg: &Message,
    candidates: I,
    profile: &PerProfile,
    rng: &mut R,
    mut on_outcome: F,
) where
    R: Rng + ?Sized,
    I: IntoIterator<Item = (EntityId, Position)>,
    F: FnMut(EntityId, bool),
{
    for (id, pos) in candidates {
        if id == msg.sender {
            continue;
        }
        let d = msg.tx_position.distance_to(&pos);
        on_outcome(id, sample_reception(rng, profile.per(d)));
    }
}

/// Counts `(candidates, receptions)` for a broadcast from `tx` when receiver
/// identities do not matter.
///
/// Receivers on the curve's far plateau all share one success probability,
/// so their receptions are drawn together as a single binomial count; nearer
/// receivers get one Bernoulli draw each. The count has the same
/// distribution as per-receiver sampling.
pub fn count_receptions<R, I>(
    tx: Position,
    receivers: I,
    profile: &PerProfile,
    rng: &mut R,
) -> (u64, u64)
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = Position>,
{
    let (far_sq, far_per) = profile
        .plateau()
        .map_or((f64::INFINITY, 0.0), |(d, p)| (d * d, p));
    let (mut expected, mut received, mut far) = (0u64, 0u64, 0u64);
    for pos in receivers {
        expected += 1;
        let (dx, dy) = (pos.x - tx.x, pos.y - tx.y);
        let d_sq = dx * dx + dy * dy;
        if d_sq >= far_sq {
            far += 1;
        } else {
            received += sample_reception(rng, profile.per(d_sq.sqrt())) as u64;
        }
    }
    if far > 0 {
        let binomial = Binomial::new(far, 1.0 - far_per).expect("plateau PER lies in [0, 1]");
        received += binomial.sample(rng);
    }
    (expected, received)
}

/// Returns the candidates that receive `msg`.
pub fn deliver_broadcast<R, I>(
    msg: &Message,
    candidates: I,
    profile: &PerProfile,
    rng: &mut R,
) -> Vec<EntityId>
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = (EntityId, Position)>,
{
    let mut out = Vec::new();
    for_each_reception(msg, candidates, profile, rng, |id, ok| {
        if ok {
            out.push(id)
        }
    });
    out
}

#[derive(Debug, Clone)]
struct VehicleSlot {
    kin: VehicleKinematics,
    obu: ObuState,
    active: bool,
}

/// Straight-line motion of an active vehicle, `x(t) = x0 + vx * t`, kept
/// densely so broadcasts can scan every receiver cheaply.
#[derive(Debug, Clone, Copy)]
struct Track {
    x0: f64,
    vx: f64,
    y: f64,
}

impl Track {
    fn new(kin: &VehicleKinematics) -> Self {
        let vx = kin.direction.sign() * kin.speed;
        Track {
            x0: kin.spawn_position.x - vx * kin.spawn_secs,
            vx,
            y: kin.spawn_position.y,
        }
    }

    fn at(&self, t: f64) -> Position {
        Position::new(self.x0 + self.vx * t, self.y)
    }
}

/// One scenario run in progress.
pub struct Simulation<'t> {
    cfg: ScenarioConfig,
    params: ProtocolParams,
    freeway: Freeway,
    profile: PerProfile,
    tau: TauModel,
    end: TimeMs,
    queue: EventQueue,
    vehicles: Vec<VehicleSlot>,
    active: Vec<VehicleId>,
    tracks: Vec<Track>,
    active_index: Vec<usize>,
    rsu: RsuState,
    service_rng: ChaCha8Rng,
    bsm_rng: ChaCha8Rng,
    records: Vec<CompletionRecord>,
    msg_seq: u64,
    bsm_tx: u64,
    bsm_rx: u64,
    bsm_expected: u64,
    sum_tx: u64,
    ack_tx: u64,
    sam_tx: u64,
    trace: Option<&'t mut dyn Write>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'t> Simulation<'t> {
    /// Prepares a run over an explicit PER curve (the config's `channel` key
    /// is ignored).
    pub fn new(cfg: &ScenarioConfig, curve: &PerCurve) -> Result<Self, EngineError> {
        let violations = validate_config(cfg);
        if !violations.is_empty() {
            return Err(EngineError::InvalidConfig(violations));
        }
        let freeway = Freeway::from_config(cfg);
        let arrivals = generate_arrivals(
            &ArrivalProcess {
                flow_rate: cfg.flow_rate,
                horizon: cfg.sim_duration,
            },
            &freeway,
            &mut stream(cfg.rng_seed, STREAM_MOBILITY),
        );
        let vehicles: Vec<VehicleSlot> = arrivals
            .into_iter()
            .map(|kin| VehicleSlot {
                obu: ObuState::new(kin.id),
                kin,
                active: false,
            })
            .collect();
        let mut sim = Simulation {
            params: ProtocolParams::from_config(cfg),
            profile: curve.at_density(cfg.flow_rate),
            tau: cfg.tau_model(),
            end: cfg.sim_duration,
            queue: EventQueue::new(),
            active: Vec::new(),
            tracks: Vec::new(),
            active_index: vec![usize::MAX; vehicles.len()],
            vehicles,
            rsu: RsuState::new(TimeMs::ZERO),
            service_rng: stream(cfg.rng_seed, STREAM_SERVICE),
            bsm_rng: stream(cfg.rng_seed, STREAM_BSM),
            records: Vec::new(),
            msg_seq: 0,
            bsm_tx: 0,
            bsm_rx: 0,
            bsm_expected: 0,
            sum_tx: 0,
            ack_tx: 0,
            sam_tx: 0,
            trace: None,
            freeway,
            cfg: cfg.clone(),
        };
        for i in 0..sim.vehicles.len() {
            let t = sim.vehicles[i].kin.spawn_time();
            let id = sim.vehicles[i].kin.id;
            sim.schedule(t, EventKind::VehicleSpawn(id))?;
        }
        sim.schedule(TimeMs::ZERO, EventKind::SamTimer)?;
        sim.queue.schedule(sim.end, EventKind::SimEnd)?;
        Ok(sim)
    }

    /// Emits one CSV line per state transition:
    /// `time_ms,entity,event,before,after`.
    pub fn with_trace(mut self, sink: &'t mut dyn Write) -> Result<Self, EngineError> {
        writeln!(sink, "time_ms,entity,event,before,after")?;
        self.trace = Some(sink);
        Ok(self)
    }

    fn schedule(&mut self, time: TimeMs, kind: EventKind) -> Result<(), EngineError> {
        if time <= self.end {
            self.queue.schedule(time, kind)?;
        }
        Ok(())
    }

    fn now(&self) -> TimeMs {
        self.queue.now()
    }

    fn position_of(&self, vehicle: VehicleId, t: TimeMs) -> Position {
        let kin = &self.vehicles[vehicle.0 as usize].kin;
        self.freeway
            .placement_after(kin, t.as_secs_f64() - kin.spawn_secs)
            .position
    }

    fn trace_line(
        &mut self,
        entity: EntityId,
        event: &str,
        before: &str,
        after: &str,
    ) -> Result<(), EngineError> {
        let now = self.now();
        if let Some(sink) = self.trace.as_mut() {
            writeln!(sink, "{},{},{},{},{}", now.0, entity, event, before, after)?;
        }
        Ok(())
    }

    fn trace_obu(
        &mut self,
        id: VehicleId,
        event: &str,
        before: ObuPhase,
    ) -> Result<(), EngineError> {
        if self.trace.is_none() {
            return Ok(());
        }
        let after = self.vehicles[id.0 as usize].obu.phase;
        self.trace_line(
            EntityId::Vehicle(id),
            event,
            before.as_str(),
            after.as_str(),
        )
    }

    fn trace_rsu(&mut self, event: &str, before: usize) -> Result<(), EngineError> {
        if self.trace.is_none() {
            return Ok(());
        }
        let after = format!("pending={}", self.rsu.pending.len());
        self.trace_line(EntityId::Rsu, event, &format!("pending={before}"), &after)
    }

    fn apply(&mut self, from: EntityId, out: ProtocolOutput) -> Result<(), EngineError> {
        let now = self.now();
        for tx in out.transmissions {
            let tx_position = match from {
                EntityId::Rsu => self.cfg.rsu_position(),
                EntityId::Vehicle(v) => self.position_of(v, now),
            };
            match tx.kind {
                MessageKind::Sum => self.sum_tx += 1,
                MessageKind::Ack => self.ack_tx += 1,
                MessageKind::Sam => self.sam_tx += 1,
                MessageKind::Bsm => self.bsm_tx += 1,
            }
            let msg = Message {
                kind: tx.kind,
                sender: from,
                tx_time: now,
                tx_position,
                recipients: tx.recipients,
                seq: self.msg_seq,
            };
            self.msg_seq += 1;
            let half_tau = sample_tau(&mut self.service_rng, &self.tau).0.div_ceil(2);
            self.schedule(now + TimeMs(half_tau), EventKind::MsgArrival(Box::new(msg)))?;
        }
        for timer in out.timers {
            let kind = match timer.kind {
                TimerKind::SumRetry(v) => EventKind::RetryTimer(v),
                TimerKind::AckFlush => EventKind::AckTimer,
                TimerKind::SamPeriod => EventKind::SamTimer,
            };
            self.schedule(timer.deadline, kind)?;
        }
        Ok(())
    }

    fn record(&mut self, id: VehicleId, open_outcome: Outcome) {
        let obu = &self.vehicles[id.0 as usize].obu;
        let Some(first) = obu.first_sum_tx_time else {
            return;
        };
        let outcome = if obu.phase == ObuPhase::Complete {
            Outcome::Complete
        } else {
            open_outcome
        };
        self.records.push(CompletionRecord {
            vehicle: id,
            direction: self.vehicles[id.0 as usize].kin.direction,
            sam_rx_time: obu.sam_rx_time,
            first_sum_tx_time: first,
            ack_rx_time: obu.ack_rx_time,
            attempts: obu.attempts,
            outcome,
        });
    }

    fn on_spawn(&mut self, id: VehicleId) -> Result<(), EngineError> {
        let idx = id.0 as usize;
        self.vehicles[idx].active = true;
        self.active_index[idx] = self.active.len();
        self.active.push(id);
        self.tracks.push(Track::new(&self.vehicles[idx].kin));
        let kin = self.vehicles[idx].kin.clone();
        let trigger = self
            .freeway
            .trigger_crossing_time(&kin, self.cfg.trigger_distance);
        self.schedule(trigger, EventKind::TriggerCross(id))?;
        self.schedule(self.freeway.exit_time(&kin), EventKind::VehicleDespawn(id))?;
        if self.cfg.bsm_period.0 > 0 {
            let offset = self.bsm_rng.random_range(0..self.cfg.bsm_period.0);
            self.schedule(self.now() + TimeMs(offset), EventKind::BsmTimer(id))?;
        }
        self.trace_line(EntityId::Vehicle(id), "spawn", "-", ObuPhase::Idle.as_str())
    }

    fn deactivate(&mut self, id: VehicleId) {
        let idx = id.0 as usize;
        self.vehicles[idx].active = false;
        let pos = std::mem::replace(&mut self.active_index[idx], usize::MAX);
        self.active.swap_remove(pos);
        self.tracks.swap_remove(pos);
        if let Some(&moved) = self.active.get(pos) {
            self.active_index[moved.0 as usize] = pos;
        }
    }

    fn on_despawn(&mut self, id: VehicleId) -> Result<(), EngineError> {
        let idx = id.0 as usize;
        if !self.vehicles[idx].active {
            return Ok(());
        }
        let before = self.vehicles[idx].obu.phase;
        self.vehicles[idx].obu = self.vehicles[idx].obu.clone().abandon();
        self.record(id, Outcome::IncompleteDespawn);
        self.deactivate(id);
        self.trace_obu(id, "despawn", before)
    }

    fn on_sim_end(&mut self) -> Result<(), EngineError> {
        for id in self.active.clone() {
            let idx = id.0 as usize;
            let before = self.vehicles[idx].obu.phase;
            self.vehicles[idx].obu = self.vehicles[idx].obu.clone().abandon();
            self.record(id, Outcome::IncompleteSimend);
            self.trace_obu(id, "sim_end", before)?;
        }
        Ok(())
    }

    fn on_trigger(&mut self, id: VehicleId) -> Result<(), EngineError> {
        let idx = id.0 as usize;
        if !self.vehicles[idx].active {
            return Ok(());
        }
        let before = self.vehicles[idx].obu.phase;
        let (next, out) = self.vehicles[idx]
            .obu
            .clone()
            .on_trigger(self.now(), &self.params)?;
        self.vehicles[idx].obu = next;
        self.trace_obu(id, "trigger", before)?;
        self.apply(EntityId::Vehicle(id), out)
    }

    fn on_retry(&mut self, id: VehicleId) -> Result<(), EngineError> {
        let idx = id.0 as usize;
        if !self.vehicles[idx].active {
            return Ok(());
        }
        let before = self.vehicles[idx].obu.phase;
        let (next, out) = self.vehicles[idx]
            .obu
            .clone()
            .on_retry_timer(self.now(), &self.params);
        self.vehicles[idx].obu = next;
        if !out.is_empty() {
            self.trace_obu(id, "retry_timer", before)?;
        }
        self.apply(EntityId::Vehicle(id), out)
    }

    fn on_ack_timer(&mut self) -> Result<(), EngineError> {
        let before = self.rsu.pending.len();
        let (next, out) = self.rsu.clone().on_ack_timer(self.now());
        self.rsu = next;
        if !out.is_empty() {
            self.trace_rsu("ack_timer", before)?;
        }
        self.apply(EntityId::Rsu, out)
    }

    fn on_sam_timer(&mut self) -> Result<(), EngineError> {
        let before = self.rsu.pending.len();
        let (next, out) = self.rsu.clone().on_sam_timer(self.now(), &self.params);
        self.rsu = next;
        self.trace_rsu("sam_timer", before)?;
        self.apply(EntityId::Rsu, out)
    }

    fn on_bsm(&mut self, id: VehicleId) -> Result<(), EngineError> {
        let idx = id.0 as usize;
        if !self.vehicles[idx].active {
            return Ok(());
        }
        let now = self.now();
        let t = now.as_secs_f64();
        let msg = Message {
            kind: MessageKind::Bsm,
            sender: EntityId::Vehicle(id),
            tx_time: now,
            tx_position: self.position_of(id, now),
            recipients: Vec::new(),
            seq: self.msg_seq,
        };
        self.msg_seq += 1;
        self.bsm_tx += 1;
        let sender_slot = self.active_index[idx];
        let (expected, received) = count_receptions(
            msg.tx_position,
            self.tracks
                .iter()
                .enumerate()
                .filter(|&(slot, _)| slot != sender_slot)
                .map(|(_, track)| track.at(t)),
            &self.profile,
            &mut self.bsm_rng,
        );
        self.bsm_expected += expected;
        self.bsm_rx += received;
        self.schedule(now + self.cfg.bsm_period, EventKind::BsmTimer(id))
    }

    fn on_arrival(&mut self, msg: Message) -> Result<(), EngineError> {
        let now = self.now();
        match msg.kind {
            MessageKind::Sam => {
                let candidates: Vec<(EntityId, Position)> = self
                    .active
                    .iter()
                    .filter(|v| self.vehicles[v.0 as usize].obu.phase == ObuPhase::Idle)
                    .map(|&v| (EntityId::Vehicle(v), self.position_of(v, now)))
                    .collect();
                let heard =
                    deliver_broadcast(&msg, candidates, &self.profile, &mut self.service_rng);
                for entity in heard {
                    let EntityId::Vehicle(v) = entity else {
                        continue;
                    };
                    let idx = v.0 as usize;
                    let before = self.vehicles[idx].obu.phase;
                    let (next, out) = self.vehicles[idx].obu.clone().on_sam(now, &self.params);
                    self.vehicles[idx].obu = next;
                    self.trace_obu(v, "sam_rx", before)?;
                    self.apply(entity, out)?;
                }
            }
            MessageKind::Sum => {
                let EntityId::Vehicle(sender) = msg.sender else {
                    return Ok(());
                };
                let heard = deliver_broadcast(
                    &msg,
                    [(EntityId::Rsu, self.cfg.rsu_position())],
                    &self.profile,
                    &mut self.service_rng,
                );
                if heard.is_empty() {
                    return Ok(());
                }
                let before = self.rsu.pending.len();
                let (next, out) = self.rsu.clone().on_sum(now, sender, &self.params);
                self.rsu = next;
                self.trace_rsu(&format!("sum_rx:{sender}"), before)?;
                self.apply(EntityId::Rsu, out)?;
            }
            MessageKind::Ack => {
                let candidates: Vec<(EntityId, Position)> = msg
                    .recipients
                    .iter()
                    .filter(|v| self.vehicles[v.0 as usize].active)
                    .map(|&v| (EntityId::Vehicle(v), self.position_of(v, now)))
                    .collect();
                let heard =
                    deliver_broadcast(&msg, candidates, &self.profile, &mut self.service_rng);
                for entity in heard {
                    let EntityId::Vehicle(v) = entity else {
                        continue;
                    };
                    let idx = v.0 as usize;
                    let before = self.vehicles[idx].obu.phase;
                    let (next, _) = self.vehicles[idx].obu.clone().on_ack(now, &msg.recipients);
                    self.vehicles[idx].obu = next;
                    self.trace_obu(v, "ack_rx", before)?;
                }
            }
            MessageKind::Bsm => {}
        }
        Ok(())
    }

    /// Processes events up to the configured end of simulation.
    pub fn run(mut self) -> Result<RunSummary, EngineError> {
        while let Some(ev) = self.queue.pop() {
            match ev.kind {
                EventKind::VehicleSpawn(v) => self.on_spawn(v)?,
                EventKind::MsgArrival(msg) => self.on_arrival(*msg)?,
                EventKind::TriggerCross(v) => self.on_trigger(v)?,
                EventKind::RetryTimer(v) => self.on_retry(v)?,
                EventKind::AckTimer => self.on_ack_timer()?,
                EventKind::SamTimer => self.on_sam_timer()?,
                EventKind::BsmTimer(v) => self.on_bsm(v)?,
                EventKind::VehicleDespawn(v) => self.on_despawn(v)?,
                EventKind::SimEnd => {
                    self.on_sim_end()?;
                    break;
                }
            }
        }
        self.records.sort_by_key(|r| r.vehicle);
        Ok(RunSummary {
            config: self.cfg,
            records: self.records,
            bsm_tx_count: self.bsm_tx,
            bsm_rx_count: self.bsm_rx,
            bsm_expected_rx_count: self.bsm_expected,
            sum_tx_count: self.sum_tx,
            ack_tx_count: self.ack_tx,
            sam_tx_count: self.sam_tx,
        })
    }
}

/// Runs one scenario, resolving its PER curve from the config.
pub fn run(cfg: &ScenarioConfig) -> Result<RunSummary, EngineError> {
    let violations = validate_config(cfg);
    if !violations.is_empty() {
        return Err(EngineError::InvalidConfig(violations));
    }
    let curve = cfg.channel.resolve()?;
    Simulation::new(cfg, &curve)?.run()
}

/// Runs every config on a pool of `threads` workers. Results keep input
/// order and are identical for any thread count.
pub fn run_batch(cfgs: &[ScenarioConfig], threads: usize) -> Vec<Result<RunSummary, EngineError>> {
    if threads <= 1 {
        return cfgs.iter().map(run).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| cfgs.par_iter().map(run).collect()),
        Err(_) => cfgs.iter().map(run).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSpec;
    use crate::types::SignedMeters;

    fn lossless() -> ScenarioConfig {
        ScenarioConfig {
            channel: ChannelSpec::Constant(0.0),
            bsm_period: TimeMs::ZERO,
            ..Default::default()
        }
    }

    fn msg_from(sender: EntityId, at: Position) -> Message {
        Message {
            kind: MessageKind::Bsm,
            sender,
            tx_time: TimeMs::ZERO,
            tx_position: at,
            recipients: vec![],
            seq: 0,
        }
    }

    #[test]
    fn broadcast_lossless_and_self_exclusion() {
        let profile = PerCurve::constant(0.0).unwrap().at_density(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let me = EntityId::Vehicle(VehicleId(0));
        let msg = msg_from(me, Position::new(0.0, 0.0));
        let cands = vec![
            (me, Position::new(0.0, 0.0)),
            (EntityId::Vehicle(VehicleId(1)), Position::new(0.0, 0.0)),
            (EntityId::Rsu, Position::new(900.0, 3.0)),
        ];
        let got = deliver_broadcast(&msg, cands, &profile, &mut rng);
        assert_eq!(got, vec![EntityId::Vehicle(VehicleId(1)), EntityId::Rsu]);
    }

    #[test]
    fn broadcast_binomial_count() {
        let profile = PerCurve::constant(0.5).unwrap().at_density(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let msg = msg_from(EntityId::Rsu, Position::new(0.0, 0.0));
        let cands: Vec<_> = (0..1000)
            .map(|i| {
                (
                    EntityId::Vehicle(VehicleId(i)),
                    Position::new(i as f64, 1.0),
                )
            })
            .collect();
        let n = deliver_broadcast(&msg, cands, &profile, &mut rng).len() as f64;
        // Binomial(1000, 0.5): sigma = sqrt(250)
        assert!((n - 500.0).abs() <= 3.0 * 250f64.sqrt(), "{n}");
    }

    #[test]
    fn counted_receptions_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rx: Vec<Position> = (0..500)
            .map(|i| Position::new(i as f64 * 6.0, 1.75))
            .collect();
        for (per, want) in [(0.0, 500), (1.0, 0)] {
            let profile = PerCurve::constant(per).unwrap().at_density(10.0);
            let got = count_receptions(Position::default(), rx.iter().copied(), &profile, &mut rng);
            assert_eq!(got, (500, want));
        }
    }

    #[test]
    fn counted_receptions_match_expected_mean() {
        // receivers every 6 m out to 3 km: about 3/4 of them on the plateau
        let profile = PerCurve::default_calibration().at_density(20.0);
        let rx: Vec<Position> = (0..500)
            .map(|i| Position::new(i as f64 * 6.0, 1.75))
            .collect();
        let probs: Vec<f64> = rx
            .iter()
            .map(|p| profile.success(p.distance_to(&Position::default())))
            .collect();
        let mean: f64 = probs.iter().sum();
        let var: f64 = probs.iter().map(|s| s * (1.0 - s)).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 400;
        let total: u64 = (0..reps)
            .map(|_| {
                count_receptions(Position::default(), rx.iter().copied(), &profile, &mut rng).1
            })
            .sum();
        let sigma = (var * reps as f64).sqrt();
        assert!(
            (total as f64 - mean * reps as f64).abs() <= 3.0 * sigma,
            "{total}"
        );
    }

    #[test]
    fn single_lossless_vehicle_completes_first_try() {
        let cfg = ScenarioConfig {
            flow_rate: 0.02,
            sim_duration: TimeMs::from_secs(300),
            warmup: TimeMs::ZERO,
            rng_seed: 3,
            ..lossless()
        };
        let s = run(&cfg).unwrap();
        let done: Vec<_> = s
            .records
            .iter()
            .filter(|r| r.outcome == Outcome::Complete)
            .collect();
        assert!(!done.is_empty());
        for r in &done {
            assert_eq!(r.attempts, 1);
            let sct = r.sct().unwrap();
            assert!(sct.0 >= 4 + 400 + 4 && sct.0 <= 100 + 400 + 100, "{sct}");
        }
    }

    #[test]
    fn blocked_channel_never_completes() {
        // no SAM is ever heard, so nobody transmits
        let cfg = ScenarioConfig {
            channel: ChannelSpec::Constant(1.0),
            sim_duration: TimeMs::from_secs(200),
            ..lossless()
        };
        let s = run(&cfg).unwrap();
        assert!(s.records.is_empty());
        assert_eq!(s.sum_tx_count, 0);
    }

    #[test]
    fn retries_fill_residence_when_acks_never_arrive() {
        // SAMs are pre-delivered; every SUM and ACK is then lost.
        let cfg = ScenarioConfig {
            flow_rate: 0.05,
            sim_duration: TimeMs::from_secs(400),
            trigger_distance: SignedMeters(300.0),
            ..lossless()
        };
        let mut sim = Simulation::new(&cfg, &PerCurve::constant(1.0).unwrap()).unwrap();
        for slot in sim.vehicles.iter_mut() {
            slot.obu = ObuState::new(slot.kin.id)
                .on_sam(TimeMs::ZERO, &sim.params)
                .0;
        }
        let s = sim.run().unwrap();
        assert!(!s.records.is_empty());
        let freeway = Freeway::from_config(&cfg);
        for r in &s.records {
            assert_ne!(r.outcome, Outcome::Complete);
            if r.outcome == Outcome::IncompleteDespawn {
                let kin = VehicleKinematics {
                    id: r.vehicle,
                    direction: r.direction,
                    lane: 0,
                    spawn_secs: 0.0,
                    spawn_position: freeway.entry_position(r.direction, 0),
                    speed: cfg.mean_speed,
                };
                // residence between crossing and exit
                let residence = freeway.exit_time(&kin)
                    - freeway.trigger_crossing_time(&kin, cfg.trigger_distance);
                let expect = residence.0 / 600 + 1;
                assert!(
                    (r.attempts as u64).abs_diff(expect) <= 1,
                    "attempts {} expected about {expect}",
                    r.attempts
                );
            }
        }
        assert_eq!(
            s.sum_tx_count,
            s.records.iter().map(|r| r.attempts as u64).sum::<u64>()
        );
    }

    #[test]
    fn same_seed_same_summary() {
        let cfg = ScenarioConfig {
            sim_duration: TimeMs::from_secs(120),
            warmup: TimeMs::from_secs(10),
            bsm_period: TimeMs(600),
            ..Default::default()
        };
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let other = ScenarioConfig {
            rng_seed: 99,
            ..cfg.clone()
        };
        assert_ne!(run(&cfg).unwrap(), run(&other).unwrap());
    }

    #[test]
    fn invalid_config_is_reported() {
        let cfg = ScenarioConfig {
            ack_batch_size: 0,
            ..Default::default()
        };
        assert!(matches!(run(&cfg), Err(EngineError::InvalidConfig(v)) if v.len() == 1));
    }

    #[test]
    fn trace_lines_are_emitted() {
        let cfg = ScenarioConfig {
            flow_rate: 0.05,
            sim_duration: TimeMs::from_secs(120),
            ..lossless()
        };
        let mut buf = Vec::new();
        let curve = PerCurve::constant(0.0).unwrap();
        Simulation::new(&cfg, &curve)
            .unwrap()
            .with_trace(&mut buf)
            .unwrap()
            .run()
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time_ms,entity,event,before,after"));
        assert!(text.contains(",trigger,sam_stored,awaiting_ack"));
        assert!(text.contains(",ack_rx,awaiting_ack,complete"));
        assert!(text.contains("rsu,sam_timer,"));
        let times: Vec<u64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn batch_preserves_order() {
        let base = ScenarioConfig {
            sim_duration: TimeMs::from_secs(60),
            warmup: TimeMs::ZERO,
            ..lossless()
        };
        let cfgs: Vec<_> = [1u64, 2, 3]
            .iter()
            .map(|&s| ScenarioConfig {
                rng_seed: s,
                ..base.clone()
            })
            .collect();
        let serial: Vec<_> = run_batch(&cfgs, 1)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        let parallel: Vec<_> = run_batch(&cfgs, 3)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(serial, parallel);
        assert_eq!(serial[1].config.rng_seed, 2);
        assert!(run_batch(&[], 4).is_empty());
        let mixed = run_batch(
            &[
                base.clone(),
                ScenarioConfig {
                    ack_batch_size: 0,
                    ..base
                },
            ],
            2,
        );
        assert!(mixed[0].is_ok() && mixed[1].is_err());
    }
}
