//! Longitudinal and lateral vehicle dynamics on the ring.

pub mod idm;
pub mod lane_change;
pub mod ring;
pub mod step;

use thiserror::Error;

pub use idm::{desired_gap, free_road_acceleration, idm_acceleration, idm_acceleration_raw};
pub use lane_change::{mobil_decision, FollowerView, LaneChangeDecision, LaneOption};
pub use ring::{forward_distance, ring_distance, ring_gap, wrap};
pub use step::{check_invariants, step, SafetyEvent, SafetyEventKind, StepOutcome, StepParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("gap must be positive, got {gap} m")]
    NonPositiveGap { gap: f64 },
    #[error("invariant breach after step {step}: {detail}")]
    InvariantBreach { step: u64, detail: String },
}
