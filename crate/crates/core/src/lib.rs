//! Simulation and closed-form analysis of a zone-activated RSU transaction
//! service over the C-V2X sidelink.
//!
//! A roadside unit advertises a service (SAM); each vehicle requests it (SUM)
//! when crossing a trigger line and repeats the request until an ACK naming
//! it arrives. The crate provides the protocol state machines, a
//! deterministic discrete-event simulator of a bidirectional freeway, the
//! analytic first-success model of the attempt count, and the metrics and
//! tables used to compare them.

pub mod analytic;
pub mod channel;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod protocol;
pub mod sweep;
pub mod types;
pub mod validation;

pub use channel::{ChannelSpec, PerCurve, PerProfile, TauModel};
pub use config::{load_config, validate_config, ConfigError, ScenarioConfig, Violation};
pub use engine::{run, run_batch, EngineError, Simulation};
pub use metrics::{CompletionRecord, Outcome, RunSummary};
pub use types::{
    Direction, EntityId, Message, MessageKind, Position, SignedMeters, TimeMs, VehicleId,
};
