//! Poisson arrivals and constant-velocity motion on a bidirectional freeway.
//!
//! The stretch spans `x` in `[-L/2, +L/2]` with the RSU inside it. Eastbound traffic
//! enters at `-L/2` and drives toward `+x`; westbound traffic enters at `+L/2`.
//! Eastbound lanes sit at negative `y`, westbound at positive `y`, lane `k`
//! centered `(k + 0.5) * lane_width` from the median.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::config::ScenarioConfig;
use crate::types::{Direction, Position, SignedMeters, TimeMs, VehicleId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MobilityError {
    #[error("{vehicle} queried at {at} before its spawn at {spawn_secs} s")]
    BeforeSpawn {
        vehicle: VehicleId,
        at: TimeMs,
        spawn_secs: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleKinematics {
    pub id: VehicleId,
    pub direction: Direction,
    pub lane: u32,
    /// Real-valued spawn instant, seconds.
    pub spawn_secs: f64,
    pub spawn_position: Position,
    pub speed: f64,
}

impl VehicleKinematics {
    /// Spawn instant rounded up to the scheduling grid.
    pub fn spawn_time(&self) -> TimeMs {
        TimeMs::ceil_from_secs(self.spawn_secs)
    }
}

/// Where a vehicle is, and whether it is still on the modeled stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub position: Position,
    pub in_stretch: bool,
}

/// Static road geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Freeway {
    pub road_length: f64,
    pub lane_width: f64,
    pub lanes_per_direction: u32,
    pub rsu: Position,
    pub speed: f64,
}

impl Freeway {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Freeway {
            road_length: cfg.road_length,
            lane_width: cfg.lane_width,
            lanes_per_direction: cfg.lanes_per_direction(),
            rsu: cfg.rsu_position(),
            speed: cfg.mean_speed,
        }
    }

    pub fn entry_position(&self, direction: Direction, lane: u32) -> Position {
        let half = self.road_length / 2.0;
        let offset = (lane as f64 + 0.5) * self.lane_width;
        match direction {
            Direction::Eastbound => Position::new(-half, -offset),
            Direction::Westbound => Position::new(half, offset),
        }
    }

    pub fn position_at(
        &self,
        v: &VehicleKinematics,
        t: TimeMs,
    ) -> Result<Placement, MobilityError> {
        let elapsed = t.as_secs_f64() - v.spawn_secs;
        if elapsed < 0.0 {
            return Err(MobilityError::BeforeSpawn {
                vehicle: v.id,
                at: t,
                spawn_secs: v.spawn_secs,
            });
        }
        Ok(self.placement_after(v, elapsed))
    }

    /// Position `elapsed` seconds after spawn; no spawn check.
    pub fn placement_after(&self, v: &VehicleKinematics, elapsed: f64) -> Placement {
        let travelled = v.speed * elapsed;
        Placement {
            position: Position::new(
                v.spawn_position.x + v.direction.sign() * travelled,
                v.spawn_position.y,
            ),
            in_stretch: travelled < self.road_length,
        }
    }

    /// Signed distance to the RSU along the vehicle's travel direction at
    /// longitudinal coordinate `x`.
    pub fn signed_distance(&self, direction: Direction, x: f64) -> SignedMeters {
        SignedMeters(direction.sign() * (self.rsu.x - x))
    }

    /// Real-valued instant (seconds) at which `v` reaches signed distance
    /// `trigger` from the RSU.
    pub fn trigger_crossing_secs(&self, v: &VehicleKinematics, trigger: SignedMeters) -> f64 {
        let start = self.signed_distance(v.direction, v.spawn_position.x).0;
        v.spawn_secs + (start - trigger.0) / v.speed
    }

    /// First whole millisecond at or after the trigger crossing.
    pub fn trigger_crossing_time(&self, v: &VehicleKinematics, trigger: SignedMeters) -> TimeMs {
        TimeMs::ceil_from_secs(self.trigger_crossing_secs(v, trigger))
    }

    pub fn exit_secs(&self, v: &VehicleKinematics) -> f64 {
        v.spawn_secs + self.road_length / v.speed
    }

    pub fn exit_time(&self, v: &VehicleKinematics) -> TimeMs {
        TimeMs::ceil_from_secs(self.exit_secs(v))
    }
}

/// Aggregate Poisson arrivals, split evenly between the two directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalProcess {
    /// Aggregate over both directions, veh/s.
    pub flow_rate: f64,
    pub horizon: TimeMs,
}

impl ArrivalProcess {
    pub fn per_direction_rate(&self) -> f64 {
        self.flow_rate / 2.0
    }
}

/// Draws the spawn schedule for both directions, merged by spawn time.
///
/// Each direction is an independent Poisson stream; lanes are uniform among
/// that direction's lanes. Vehicle ids follow merged spawn order.
pub fn generate_arrivals<R: Rng + ?Sized>(
    process: &ArrivalProcess,
    freeway: &Freeway,
    rng: &mut R,
) -> Vec<VehicleKinematics> {
    let horizon = process.horizon.as_secs_f64();
    let rate = process.per_direction_rate();
    if horizon <= 0.0 || rate.is_nan() || rate <= 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate).expect("positive arrival rate");
    let mut all = Vec::new();
    for direction in [Direction::Eastbound, Direction::Westbound] {
        let mut t = 0.0;
        loop {
            t += gap.sample(rng);
            if t >= horizon {
                break;
            }
            let lane = rng.random_range(0..freeway.lanes_per_direction);
            all.push(VehicleKinematics {
                id: VehicleId(0),
                direction,
                lane,
                spawn_secs: t,
                spawn_position: freeway.entry_position(direction, lane),
                speed: freeway.speed,
            });
        }
    }
    // stable: eastbound first on exact ties
    all.sort_by(|a, b| a.spawn_secs.total_cmp(&b.spawn_secs));
    for (i, v) in all.iter_mut().enumerate() {
        v.id = VehicleId(i as u32);
    }
    all
}
