//! Units and message vocabulary shared by every module.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Whole milliseconds since simulation start.
///
/// One millisecond is the scheduling granularity of the simulator. The type is
/// unsigned, so no arithmetic on it can produce a negative instant.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeMs(pub u64);

impl TimeMs {
    pub const ZERO: TimeMs = TimeMs(0);

    pub const fn from_secs(secs: u64) -> Self {
        TimeMs(secs * 1000)
    }

    /// Rounds a real-valued instant (seconds) up to the next whole millisecond.
    ///
    /// A tolerance of one nanosecond absorbs floating-point noise so that an
    /// exact instant such as `40.0 s` is not bumped to `40001 ms`.
    pub fn ceil_from_secs(secs: f64) -> Self {
        let ms = secs * 1000.0;
        if ms <= 0.0 {
            return TimeMs::ZERO;
        }
        TimeMs((ms - 1e-6).ceil().max(0.0) as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, rhs: TimeMs) -> TimeMs {
        TimeMs(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: TimeMs) -> Option<TimeMs> {
        self.0.checked_sub(rhs.0).map(TimeMs)
    }
}

impl Add for TimeMs {
    type Output = TimeMs;

    fn add(self, rhs: TimeMs) -> TimeMs {
        TimeMs(self.0 + rhs.0)
    }
}

impl Sub for TimeMs {
    type Output = TimeMs;

    /// Panics if `rhs > self`; time never runs backward.
    fn sub(self, rhs: TimeMs) -> TimeMs {
        TimeMs(
            self.0
                .checked_sub(rhs.0)
                .expect("time subtraction would be negative"),
        )
    }
}

impl fmt::Display for TimeMs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Signed longitudinal distance to the RSU measured along a vehicle's own
/// direction of travel: positive before reaching the RSU, negative after
/// passing it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignedMeters(pub f64);

impl SignedMeters {
    pub fn abs(self) -> f64 {
        self.0.abs()
    }
}

impl fmt::Display for SignedMeters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}m", self.0)
    }
}

/// Planar coordinates in meters: `x` runs along the freeway, `y` across it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Anything that can transmit or receive on the sidelink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityId {
    Rsu,
    Vehicle(VehicleId),
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityId::Rsu => f.write_str("rsu"),
            EntityId::Vehicle(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Eastbound,
    Westbound,
}

impl Direction {
    /// Sign of longitudinal motion: `+1` eastbound, `-1` westbound.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Eastbound => 1.0,
            Direction::Westbound => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Eastbound => "eastbound",
            Direction::Westbound => "westbound",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sidelink message types. The ACK uses the parameter row the message-set
/// table labels "SCM".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Bsm,
    Sam,
    Sum,
    Ack,
}

impl MessageKind {
    /// ProSe per-packet priority.
    pub const fn priority(self) -> u8 {
        match self {
            MessageKind::Bsm => 5,
            MessageKind::Sam | MessageKind::Sum | MessageKind::Ack => 6,
        }
    }

    pub const fn payload_bytes(self) -> u32 {
        match self {
            MessageKind::Bsm => 300,
            MessageKind::Sam => 700,
            MessageKind::Sum => 450,
            MessageKind::Ack => 300,
        }
    }

    pub const fn mcs(self) -> u8 {
        match self {
            MessageKind::Bsm => 11,
            MessageKind::Sam => 7,
            MessageKind::Sum => 11,
            MessageKind::Ack => 6,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            MessageKind::Bsm => "BSM",
            MessageKind::Sam => "SAM",
            MessageKind::Sum => "SUM",
            MessageKind::Ack => "ACK",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A transmitted sidelink packet as seen by the simulator.
///
/// `recipients` is non-empty only for ACKs; a SUM carries the id of the
/// vehicle that sent it in `sender`.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: EntityId,
    pub tx_time: TimeMs,
    pub tx_position: Position,
    pub recipients: Vec<VehicleId>,
    pub seq: u64,
}
