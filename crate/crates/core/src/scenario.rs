//! Scenario configuration, ring-road geometry, fleet composition and
//! deterministic construction of the initial world.

use std::ops::{Index, IndexMut};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::idm::idm_acceleration_raw;
use crate::perception::ClassPerception;
use crate::rng::{self, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(
        "infeasible density: {vehicles} vehicles need {required_m:.1} m of stopped road but only {available_m:.1} m exist"
    )]
    InfeasibleDensity {
        vehicles: u32,
        required_m: f64,
        available_m: f64,
    },
    #[error("class shares sum to {sum}, expected 1")]
    ShareMismatch { sum: f64 },
    #[error("speed {speed} m/s is at or above the desired speed {desired} m/s")]
    SpeedAtOrAboveDesired { speed: f64, desired: f64 },
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidField {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleClass {
    #[serde(rename = "RV")]
    Rv,
    #[serde(rename = "AV")]
    Av,
    #[serde(rename = "GV")]
    Gv,
}

impl VehicleClass {
    /// Enum order; also the tie-break order for share rounding.
    pub const ALL: [VehicleClass; 3] = [VehicleClass::Rv, VehicleClass::Av, VehicleClass::Gv];

    pub fn label(self) -> &'static str {
        match self {
            VehicleClass::Rv => "RV",
            VehicleClass::Av => "AV",
            VehicleClass::Gv => "GV",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl std::fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One value per vehicle class. Serializes as a table keyed `rv`, `av`, `gv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PerClass<T> {
    pub rv: T,
    pub av: T,
    pub gv: T,
}

impl<T> PerClass<T> {
    pub fn from_fn(mut f: impl FnMut(VehicleClass) -> T) -> Self {
        PerClass {
            rv: f(VehicleClass::Rv),
            av: f(VehicleClass::Av),
            gv: f(VehicleClass::Gv),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(VehicleClass, &T) -> U) -> PerClass<U> {
        PerClass::from_fn(|c| f(c, &self[c]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VehicleClass, &T)> {
        VehicleClass::ALL.into_iter().map(move |c| (c, &self[c]))
    }
}

impl<T> Index<VehicleClass> for PerClass<T> {
    type Output = T;
    fn index(&self, class: VehicleClass) -> &T {
        match class {
            VehicleClass::Rv => &self.rv,
            VehicleClass::Av => &self.av,
            VehicleClass::Gv => &self.gv,
        }
    }
}

impl<T> IndexMut<VehicleClass> for PerClass<T> {
    fn index_mut(&mut self, class: VehicleClass) -> &mut T {
        match class {
            VehicleClass::Rv => &mut self.rv,
            VehicleClass::Av => &mut self.av,
            VehicleClass::Gv => &mut self.gv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadGeometry {
    /// Ring circumference per direction.
    pub length_m: f64,
    pub lanes_per_direction: u8,
    /// 1 or 2; directions never interact.
    pub directions: u8,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        RoadGeometry {
            length_m: 1000.0,
            lanes_per_direction: 2,
            directions: 2,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.length_m.is_finite() && self.length_m > 0.0) {
            return Err(invalid("geometry.length_m", "must be a positive length"));
        }
        if self.lanes_per_direction == 0 {
            return Err(invalid("geometry.lanes_per_direction", "must be at least 1"));
        }
        if !(1..=2).contains(&self.directions) {
            return Err(invalid("geometry.directions", "must be 1 or 2"));
        }
        Ok(())
    }

    pub fn lane_count(&self) -> usize {
        self.directions as usize * self.lanes_per_direction as usize
    }
}

/// Car-following (IDM) and lane-changing parameters of one driver class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverParams {
    pub desired_speed_mps: f64,
    pub time_headway_s: f64,
    pub max_accel_mps2: f64,
    pub comfort_decel_mps2: f64,
    pub accel_exponent: f64,
    pub min_gap_m: f64,
    pub vehicle_length_m: f64,
    pub politeness: f64,
    pub change_threshold_mps2: f64,
    pub safe_decel_mps2: f64,
    /// Lower bound applied to every IDM output.
    pub emergency_decel_mps2: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        DriverParams {
            desired_speed_mps: 33.3,
            time_headway_s: 1.6,
            max_accel_mps2: 0.73,
            comfort_decel_mps2: 1.67,
            accel_exponent: 4.0,
            min_gap_m: 2.0,
            vehicle_length_m: 5.0,
            politeness: 0.2,
            change_threshold_mps2: 0.1,
            safe_decel_mps2: 4.0,
            emergency_decel_mps2: 9.0,
        }
    }
}

impl DriverParams {
    /// Class defaults: machine drivers differ from the human baseline only in
    /// time headway.
    pub fn for_class(class: VehicleClass) -> Self {
        let time_headway_s = match class {
            VehicleClass::Rv => 1.6,
            VehicleClass::Av => 1.2,
            VehicleClass::Gv => 1.0,
        };
        DriverParams {
            time_headway_s,
            ..DriverParams::default()
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ScenarioError> {
        let positive = [
            ("desired_speed_mps", self.desired_speed_mps),
            ("time_headway_s", self.time_headway_s),
            ("max_accel_mps2", self.max_accel_mps2),
            ("comfort_decel_mps2", self.comfort_decel_mps2),
            ("accel_exponent", self.accel_exponent),
            ("min_gap_m", self.min_gap_m),
            ("vehicle_length_m", self.vehicle_length_m),
            ("safe_decel_mps2", self.safe_decel_mps2),
            ("emergency_decel_mps2", self.emergency_decel_mps2),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(format!("{prefix}.{name}"), "must be strictly positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.politeness) {
            return Err(invalid(format!("{prefix}.politeness"), "must lie in [0, 1]"));
        }
        if !(self.change_threshold_mps2.is_finite() && self.change_threshold_mps2 >= 0.0) {
            return Err(invalid(
                format!("{prefix}.change_threshold_mps2"),
                "must be non-negative",
            ));
        }
        if self.safe_decel_mps2 < self.comfort_decel_mps2 {
            return Err(invalid(
                format!("{prefix}.safe_decel_mps2"),
                "must be at least comfort_decel_mps2",
            ));
        }
        if self.emergency_decel_mps2 < self.safe_decel_mps2 {
            return Err(invalid(
                format!("{prefix}.emergency_decel_mps2"),
                "must be at least safe_decel_mps2",
            ));
        }
        Ok(())
    }

    /// Bumper-to-bumper footprint of a stopped vehicle.
    pub fn stopped_footprint_m(&self) -> f64 {
        self.vehicle_length_m + self.min_gap_m
    }
}

/// Placement of roadside sensing units along the ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadsideDeployment {
    pub spacing_m: f64,
    pub sensing_radius_m: f64,
}

impl Default for RoadsideDeployment {
    fn default() -> Self {
        RoadsideDeployment {
            spacing_m: 400.0,
            sensing_radius_m: 250.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub geometry: RoadGeometry,
    pub total_vehicles: u32,
    pub class_shares: PerClass<f64>,
    pub driver: PerClass<DriverParams>,
    pub perception: PerClass<ClassPerception>,
    pub roadside: RoadsideDeployment,
    pub dt_s: f64,
    pub steps: u64,
    pub warmup_steps: u64,
    pub seed: u64,
    pub lane_change_cooldown_s: f64,
    /// Upper bound on a single time-to-collision sample.
    pub ttc_cap_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            geometry: RoadGeometry::default(),
            total_vehicles: 100,
            class_shares: PerClass {
                rv: 0.6,
                av: 0.2,
                gv: 0.2,
            },
            driver: PerClass::from_fn(DriverParams::for_class),
            perception: PerClass::from_fn(ClassPerception::for_class),
            roadside: RoadsideDeployment::default(),
            dt_s: 0.25,
            steps: 4800,
            warmup_steps: 960,
            seed: 2023,
            lane_change_cooldown_s: 4.0,
            ttc_cap_s: 100.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.geometry.validate()?;
        for (class, share) in self.class_shares.iter() {
            if !(share.is_finite() && (0.0..=1.0).contains(share)) {
                return Err(invalid(
                    format!("class_shares.{}", class.label().to_lowercase()),
                    "must lie in [0, 1]",
                ));
            }
        }
        let sum: f64 = self.class_shares.iter().map(|(_, s)| s).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::ShareMismatch { sum });
        }
        for (class, params) in self.driver.iter() {
            params.validate(&format!("driver.{}", class.label().to_lowercase()))?;
        }
        for (class, perception) in self.perception.iter() {
            perception.validate(&format!("perception.{}", class.label().to_lowercase()))?;
        }
        if !(self.roadside.spacing_m.is_finite() && self.roadside.spacing_m > 0.0) {
            return Err(invalid("roadside.spacing_m", "must be strictly positive"));
        }
        if !(self.roadside.sensing_radius_m.is_finite() && self.roadside.sensing_radius_m >= 0.0) {
            return Err(invalid("roadside.sensing_radius_m", "must be non-negative"));
        }
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return Err(invalid("dt_s", "must be strictly positive"));
        }
        if self.steps <= self.warmup_steps {
            return Err(invalid("steps", "must exceed warmup_steps"));
        }
        if !(self.lane_change_cooldown_s.is_finite() && self.lane_change_cooldown_s >= 0.0) {
            return Err(invalid("lane_change_cooldown_s", "must be non-negative"));
        }
        if !(self.ttc_cap_s.is_finite() && self.ttc_cap_s > 0.0) {
            return Err(invalid("ttc_cap_s", "must be strictly positive"));
        }
        Ok(())
    }

    pub fn class_counts(&self) -> PerClass<u32> {
        apportion(&self.class_shares, self.total_vehicles)
    }

    pub fn cooldown_steps(&self) -> u32 {
        (self.lane_change_cooldown_s / self.dt_s).round() as u32
    }

    pub fn check_feasible(&self) -> Result<(), ScenarioError> {
        let counts = self.class_counts();
        let required_m: f64 = VehicleClass::ALL
            .iter()
            .map(|&c| counts[c] as f64 * self.driver[c].stopped_footprint_m())
            .sum();
        let available_m = self.geometry.lane_count() as f64 * self.geometry.length_m;
        if required_m > available_m {
            return Err(ScenarioError::InfeasibleDensity {
                vehicles: self.total_vehicles,
                required_m,
                available_m,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub class: VehicleClass,
    pub direction: u8,
    pub lane: u8,
    /// Front-bumper position along the ring, in `[0, L)`.
    pub position_m: f64,
    pub speed_mps: f64,
    pub accel_mps2: f64,
    pub length_m: f64,
    /// Steps left before another lane change is allowed.
    pub cooldown_steps: u32,
}

/// Every vehicle on the road at one instant. `vehicles[i].id == i`.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub geometry: RoadGeometry,
    pub step: u64,
    pub vehicles: Vec<VehicleState>,
}

impl World {
    pub fn ring_length(&self) -> f64 {
        self.geometry.length_m
    }

    pub fn vehicle(&self, id: u32) -> &VehicleState {
        &self.vehicles[id as usize]
    }
}

/// Largest-remainder apportionment of `total` across the classes; ties go to
/// the earlier class in enum order.
pub fn apportion(shares: &PerClass<f64>, total: u32) -> PerClass<u32> {
    let quotas = shares.map(|_, s| s * total as f64);
    let mut counts = quotas.map(|_, q| q.floor().max(0.0) as u32);
    let assigned: u32 = counts.iter().map(|(_, c)| *c).sum();
    let mut leftover = total.saturating_sub(assigned);
    let mut order = VehicleClass::ALL;
    // stable sort keeps enum order among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for class in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[*class] += 1;
        leftover -= 1;
    }
    counts
}

/// Steady-state bumper-to-bumper gap at which a driver travelling at `speed`
/// neither accelerates nor brakes.
pub fn equilibrium_spacing(speed: f64, params: &DriverParams) -> Result<f64, ScenarioError> {
    if !(speed >= 0.0 && speed < params.desired_speed_mps) {
        return Err(ScenarioError::SpeedAtOrAboveDesired {
            speed,
            desired: params.desired_speed_mps,
        });
    }
    let ratio = (speed / params.desired_speed_mps).powf(params.accel_exponent);
    Ok((params.min_gap_m + speed * params.time_headway_s) / (1.0 - ratio).sqrt())
}

/// Inverse of [`equilibrium_spacing`]: the speed whose equilibrium gap is `gap`.
pub fn equilibrium_speed(gap: f64, params: &DriverParams) -> f64 {
    if gap <= params.min_gap_m {
        return 0.0;
    }
    if !gap.is_finite() {
        return params.desired_speed_mps;
    }
    let (mut lo, mut hi) = (0.0, params.desired_speed_mps);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if idm_acceleration_raw(mid, 0.0, gap, params) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Initial world: vehicles spread evenly over directions and lanes, equally
/// spaced within each lane and travelling at their equilibrium speed.
pub fn build_scenario(config: &ScenarioConfig) -> Result<World, ScenarioError> {
    config.validate()?;
    config.check_feasible()?;

    let counts = config.class_counts();
    let mut labels: Vec<VehicleClass> = VehicleClass::ALL
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, counts[c] as usize))
        .collect();
    let mut rng = Pcg64Mcg::seed_from_u64(rng::substream_seed(
        config.seed,
        Purpose::ClassAssignment,
        0,
        0,
        0,
    ));
    labels.shuffle(&mut rng);

    let geometry = config.geometry;
    let lanes = geometry.lane_count();
    let total = config.total_vehicles as usize;
    let mut vehicles = Vec::with_capacity(total);
    for slot in 0..lanes {
        let in_lane = total / lanes + usize::from(slot < total % lanes);
        if in_lane == 0 {
            continue;
        }
        let direction = (slot / geometry.lanes_per_direction as usize) as u8;
        let lane = (slot % geometry.lanes_per_direction as usize) as u8;
        let spacing = geometry.length_m / in_lane as f64;
        for k in 0..in_lane {
            let id = vehicles.len() as u32;
            let class = labels[id as usize];
            let params = &config.driver[class];
            let speed = if in_lane == 1 {
                params.desired_speed_mps
            } else {
                equilibrium_speed(spacing - params.vehicle_length_m, params)
            };
            vehicles.push(VehicleState {
                id,
                class,
                direction,
                lane,
                position_m: k as f64 * spacing,
                speed_mps: speed.min(params.desired_speed_mps),
                accel_mps2: 0.0,
                length_m: params.vehicle_length_m,
                cooldown_steps: 0,
            });
        }
    }
    Ok(World {
        geometry,
        step: 0,
        vehicles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mix_counts() {
        let shares = PerClass {
            rv: 0.6,
            av: 0.2,
            gv: 0.2,
        };
        let c = apportion(&shares, 100);
        assert_eq!((c.rv, c.av, c.gv), (60, 20, 20));
    }

    #[test]
    fn remainder_ties_follow_enum_order() {
        let third = 1.0 / 3.0;
        let shares = PerClass {
            rv: third,
            av: third,
            gv: third,
        };
        let c = apportion(&shares, 100);
        assert_eq!((c.rv, c.av, c.gv), (34, 33, 33));
        let c = apportion(&shares, 2);
        assert_eq!((c.rv, c.av, c.gv), (1, 1, 0));
    }

    #[test]
    fn four_vehicles_single_lane_uniform() {
        let config = ScenarioConfig {
            geometry: RoadGeometry {
                length_m: 1000.0,
                lanes_per_direction: 1,
                directions: 1,
            },
            total_vehicles: 4,
            ..ScenarioConfig::default()
        };
        let world = build_scenario(&config).unwrap();
        let pos: Vec<f64> = world.vehicles.iter().map(|v| v.position_m).collect();
        assert_eq!(pos, vec![0.0, 250.0, 500.0, 750.0]);
    }

    #[test]
    fn six_hundred_with_default_lengths_is_infeasible() {
        let mut config = ScenarioConfig {
            total_vehicles: 600,
            ..ScenarioConfig::default()
        };
        for c in VehicleClass::ALL {
            config.driver[c].vehicle_length_m = 5.0;
            config.driver[c].min_gap_m = 2.0;
        }
        match build_scenario(&config) {
            Err(ScenarioError::InfeasibleDensity {
                required_m,
                available_m,
                ..
            }) => {
                assert_eq!(required_m, 4200.0);
                assert_eq!(available_m, 4000.0);
            }
            other => panic!("expected InfeasibleDensity, got {other:?}"),
        }
        for c in VehicleClass::ALL {
            config.driver[c].vehicle_length_m = 4.5;
            config.driver[c].min_gap_m = 1.5;
        }
        assert!(build_scenario(&config).is_ok());
    }

    #[test]
    fn share_mismatch_rejected() {
        let config = ScenarioConfig {
            class_shares: PerClass {
                rv: 0.6,
                av: 0.2,
                gv: 0.3,
            },
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            build_scenario(&config),
            Err(ScenarioError::ShareMismatch { .. })
        ));
    }

    #[test]
    fn equilibrium_spacing_at_standstill_is_min_gap() {
        let p = DriverParams::default();
        assert_eq!(equilibrium_spacing(0.0, &p).unwrap(), p.min_gap_m);
        assert!(matches!(
            equilibrium_spacing(p.desired_speed_mps, &p),
            Err(ScenarioError::SpeedAtOrAboveDesired { .. })
        ));
        let near = equilibrium_spacing(p.desired_speed_mps * (1.0 - 1e-9), &p).unwrap();
        assert!(near > 1e4);
    }

    #[test]
    fn equilibrium_spacing_known_value() {
        // (2 + 15*1.6) / sqrt(1 - (15/33.3)^4), evaluated independently
        let p = DriverParams::default();
        let r = 15.0_f64 / 33.3;
        let expected = 26.0 / (1.0 - r * r * r * r).sqrt();
        let got = equilibrium_spacing(15.0, &p).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 26.552_333_632_5).abs() < 1e-9);
        assert!(crate::dynamics::idm_acceleration(15.0, 0.0, got, &p).unwrap().abs() < 1e-9);
    }

    #[test]
    fn equilibrium_speed_inverts_spacing() {
        let p = DriverParams::for_class(VehicleClass::Av);
        for v in [0.5, 5.0, 12.0, 25.0, 32.0] {
            let s = equilibrium_spacing(v, &p).unwrap();
            assert!((equilibrium_speed(s, &p) - v).abs() < 1e-9);
        }
        assert_eq!(equilibrium_speed(1.0, &p), 0.0);
    }

    #[test]
    fn build_is_deterministic_and_gaps_respect_min_gap() {
        let config = ScenarioConfig {
            total_vehicles: 300,
            ..ScenarioConfig::default()
        };
        let a = build_scenario(&config).unwrap();
        let b = build_scenario(&config).unwrap();
        assert_eq!(a, b);
        let counts = config.class_counts();
        for class in VehicleClass::ALL {
            let n = a.vehicles.iter().filter(|v| v.class == class).count() as u32;
            assert_eq!(n, counts[class]);
        }
        // 75 per lane, spacing 13.33 m, footprint 7 m
        for v in &a.vehicles {
            assert!(v.speed_mps >= 0.0 && v.speed_mps <= config.driver[v.class].desired_speed_mps);
        }
        let other = build_scenario(&ScenarioConfig {
            seed: config.seed + 1,
            ..config.clone()
        })
        .unwrap();
        assert_ne!(
            a.vehicles.iter().map(|v| v.class).collect::<Vec<_>>(),
            other.vehicles.iter().map(|v| v.class).collect::<Vec<_>>()
        );
    }
}
