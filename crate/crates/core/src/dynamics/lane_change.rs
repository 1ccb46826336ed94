//! Lane choice: incentive criterion with politeness plus a safety bound on
//! the deceleration imposed on the new follower.

use serde::{Deserialize, Serialize};

use crate::scenario::DriverParams;

use super::idm::idm_acceleration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneChangeDecision {
    Stay,
    /// Towards the higher lane index.
    ChangeLeft,
    ChangeRight,
}

/// The vehicle behind the ego in some lane, as the ego perceives it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerView {
    pub speed: f64,
    pub params: DriverParams,
    /// Gap from this follower's front bumper to the ego's rear bumper.
    pub gap_to_ego: f64,
    /// This follower's acceleration when the ego is not in front of it.
    pub accel_without_ego: f64,
}

/// Everything the decision needs about one lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneOption {
    /// Ego acceleration when driving in this lane.
    pub ego_accel: f64,
    /// Gap from the ego to the lane leader; `None` for an open lane.
    pub leader_gap: Option<f64>,
    pub follower: Option<FollowerView>,
}

impl LaneOption {
    fn follower_accel_behind_ego(&self, ego_speed: f64) -> Option<f64> {
        self.follower.map(|f| {
            idm_acceleration(f.speed, f.speed - ego_speed, f.gap_to_ego, &f.params)
                .unwrap_or(-f.params.emergency_decel_mps2)
        })
    }

    /// Target-lane evaluation: `Some(ego_accel)` when the move is admissible
    /// and beats the threshold.
    fn evaluate(
        &self,
        current: &LaneOption,
        ego_speed: f64,
        params: &DriverParams,
    ) -> Option<f64> {
        if self.leader_gap.is_some_and(|g| !(g > 0.0)) {
            return None;
        }
        if self.follower.is_some_and(|f| !(f.gap_to_ego > 0.0)) {
            return None;
        }

        // safety: the new follower must not be forced below -b_safe
        let new_follower_gain = match (self.follower, self.follower_accel_behind_ego(ego_speed)) {
            (Some(f), Some(after)) => {
                if after < -params.safe_decel_mps2 {
                    return None;
                }
                after - f.accel_without_ego
            }
            _ => 0.0,
        };
        let old_follower_gain = match (current.follower, current.follower_accel_behind_ego(ego_speed)) {
            (Some(f), Some(before)) => f.accel_without_ego - before,
            _ => 0.0,
        };

        let incentive = self.ego_accel - current.ego_accel
            + params.politeness * (new_follower_gain + old_follower_gain);
        (incentive > params.change_threshold_mps2).then_some(self.ego_accel)
    }
}

/// Picks the lane for the next step. When both neighbours qualify, the one
/// with the larger post-change ego acceleration wins; an exact tie stays.
pub fn mobil_decision(
    ego_speed: f64,
    params: &DriverParams,
    current: &LaneOption,
    left: Option<&LaneOption>,
    right: Option<&LaneOption>,
) -> LaneChangeDecision {
    let left = left.and_then(|l| l.evaluate(current, ego_speed, params));
    let right = right.and_then(|r| r.evaluate(current, ego_speed, params));
    match (left, right) {
        (Some(l), Some(r)) if l > r => LaneChangeDecision::ChangeLeft,
        (Some(l), Some(r)) if r > l => LaneChangeDecision::ChangeRight,
        (Some(_), Some(_)) => LaneChangeDecision::Stay,
        (Some(_), None) => LaneChangeDecision::ChangeLeft,
        (None, Some(_)) => LaneChangeDecision::ChangeRight,
        (None, None) => LaneChangeDecision::Stay,
    }
}
