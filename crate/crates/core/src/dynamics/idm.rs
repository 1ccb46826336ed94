//! Intelligent Driver Model longitudinal acceleration.

use crate::scenario::DriverParams;

use super::DynamicsError;

#[inline]
fn speed_ratio_term(speed: f64, params: &DriverParams) -> f64 {
    let r = speed / params.desired_speed_mps;
    let delta = params.accel_exponent;
    if delta == 4.0 {
        let r2 = r * r;
        r2 * r2
    } else {
        r.powf(delta)
    }
}

/// Desired dynamic gap `s*(v, dv)`. `approach_rate` is own speed minus leader
/// speed, positive when closing in.
#[inline]
pub fn desired_gap(speed: f64, approach_rate: f64, params: &DriverParams) -> f64 {
    params.min_gap_m
        + speed * params.time_headway_s
        + speed * approach_rate
            / (2.0 * (params.max_accel_mps2 * params.comfort_decel_mps2).sqrt())
}

/// IDM acceleration without the emergency clamp and without input checks.
#[inline]
pub fn idm_acceleration_raw(speed: f64, approach_rate: f64, gap: f64, params: &DriverParams) -> f64 {
    let interaction = desired_gap(speed, approach_rate, params) / gap;
    params.max_accel_mps2 * (1.0 - speed_ratio_term(speed, params) - interaction * interaction)
}

/// Acceleration on an empty road.
#[inline]
pub fn free_road_acceleration(speed: f64, params: &DriverParams) -> f64 {
    params.max_accel_mps2 * (1.0 - speed_ratio_term(speed, params))
}

/// IDM acceleration, bounded below by `-emergency_decel_mps2`.
pub fn idm_acceleration(
    speed: f64,
    approach_rate: f64,
    gap: f64,
    params: &DriverParams,
) -> Result<f64, DynamicsError> {
    if !(gap > 0.0) {
        return Err(DynamicsError::NonPositiveGap { gap });
    }
    Ok(idm_acceleration_raw(speed, approach_rate, gap, params).max(-params.emergency_decel_mps2))
}
