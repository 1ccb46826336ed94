//! One synchronous update of the whole world.
//!
//! Every driver decides from a view of stored past frames only. Decisions are
//! collected first and committed together, so the outcome does not depend on
//! the order in which vehicles are visited.

use serde::{Deserialize, Serialize};

use crate::perception::{History, Perceive, Sighting, SnapshotView};
use crate::scenario::{DriverParams, PerClass, VehicleState, World};

use super::idm::{free_road_acceleration, idm_acceleration_raw};
use super::lane_change::{mobil_decision, FollowerView, LaneChangeDecision, LaneOption};
use super::ring::{forward_distance, ring_gap, wrap};
use super::DynamicsError;

/// Clearance left behind a leader when an overlap is resolved.
pub const CONTACT_CLEARANCE_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyEventKind {
    /// Unclamped IDM demanded more than the emergency deceleration.
    EmergencyBrake,
    /// Integration produced an overlap that had to be clamped away.
    ContactPrevented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyEvent {
    /// Step index of the world being produced.
    pub time_step: u64,
    pub follower_id: u32,
    pub leader_id: u32,
    pub kind: SafetyEventKind,
}

#[derive(Debug, Clone, Copy)]
pub struct StepParams<'a> {
    pub driver: &'a PerClass<DriverParams>,
    pub dt_s: f64,
    pub cooldown_steps: u32,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub world: World,
    pub events: Vec<SafetyEvent>,
}

#[derive(Debug, Clone, Copy)]
struct Intent {
    lane: u8,
    changed: bool,
    accel: f64,
    emergency_leader: Option<u32>,
}

/// The ego's estimate of the present, reconstructed from a lagged view by
/// dead-reckoning every perceived vehicle at its perceived speed.
struct Planner<'v, 'h> {
    view: &'v SnapshotView<'h>,
    ego: &'v VehicleState,
    params: &'v DriverParams,
    driver: &'v PerClass<DriverParams>,
    /// Seconds between the viewed frame and the present.
    age_s: f64,
    /// How far the ego moved since the viewed frame.
    ego_travel_m: f64,
    lookahead_m: f64,
}

struct LaneEval {
    option: LaneOption,
    raw_accel: f64,
    leader: Option<u32>,
}

impl Planner<'_, '_> {
    fn gap_to(&self, leader: &Sighting) -> f64 {
        self.view.offset_ahead(leader) + leader.perceived.speed_mps * self.age_s
            - self.ego_travel_m
            - leader.perceived.length_m
    }

    fn accel_behind(params: &DriverParams, speed: f64, leader_speed: f64, gap: f64) -> f64 {
        if gap > 0.0 {
            idm_acceleration_raw(speed, speed - leader_speed, gap, params)
                .max(-params.emergency_decel_mps2)
        } else {
            -params.emergency_decel_mps2
        }
    }

    fn evaluate(&self, lane: u8) -> LaneEval {
        let v = self.ego.speed_mps;
        let leader = self.view.leader(lane);
        let (raw_accel, leader_gap) = match &leader {
            None => (free_road_acceleration(v, self.params), None),
            Some(l) => {
                let gap = self.gap_to(l);
                let mut target_speed = l.perceived.speed_mps;
                if self.lookahead_m > 0.0 {
                    if let Some(h) = self.view.hazard_speed(lane, self.lookahead_m) {
                        target_speed = target_speed.min(h);
                    }
                }
                let raw = if gap > 0.0 {
                    idm_acceleration_raw(v, v - target_speed, gap, self.params)
                } else {
                    f64::NEG_INFINITY
                };
                (raw, Some(gap))
            }
        };

        let follower = self.view.follower(lane).map(|f| {
            let fp = &self.driver[f.perceived.class];
            let fv = f.perceived.speed_mps;
            let gap_to_ego = self.view.offset_behind(&f) + self.ego_travel_m - fv * self.age_s
                - self.ego.length_m;
            let accel_without_ego = match &leader {
                Some(l) if l.perceived.id != f.perceived.id => {
                    let gap = self.view.offset_between(&f, l)
                        + (l.perceived.speed_mps - fv) * self.age_s
                        - l.perceived.length_m;
                    Self::accel_behind(fp, fv, l.perceived.speed_mps, gap)
                }
                _ => free_road_acceleration(fv, fp),
            };
            FollowerView {
                speed: fv,
                params: *fp,
                gap_to_ego,
                accel_without_ego,
            }
        });

        LaneEval {
            option: LaneOption {
                ego_accel: raw_accel.max(-self.params.emergency_decel_mps2),
                leader_gap,
                follower,
            },
            raw_accel,
            leader: leader.map(|l| l.perceived.id),
        }
    }

    fn decide(&self, lanes_per_direction: u8) -> Intent {
        let lane = self.ego.lane;
        let current = self.evaluate(lane);
        let mut chosen = (lane, false, current.raw_accel, current.option.ego_accel, current.leader);

        if self.ego.cooldown_steps == 0 && lanes_per_direction > 1 {
            let left = (lane + 1 < lanes_per_direction).then(|| self.evaluate(lane + 1));
            let right = (lane > 0).then(|| self.evaluate(lane - 1));
            let decision = mobil_decision(
                self.ego.speed_mps,
                self.params,
                &current.option,
                left.as_ref().map(|e| &e.option),
                right.as_ref().map(|e| &e.option),
            );
            let target = match decision {
                LaneChangeDecision::Stay => None,
                LaneChangeDecision::ChangeLeft => left.map(|e| (lane + 1, e)),
                LaneChangeDecision::ChangeRight => right.map(|e| (lane - 1, e)),
            };
            if let Some((l, e)) = target {
                chosen = (l, true, e.raw_accel, e.option.ego_accel, e.leader);
            }
        }

        let (lane, changed, raw, accel, leader) = chosen;
        Intent {
            lane,
            changed,
            accel,
            emergency_leader: leader.filter(|_| raw < -self.params.emergency_decel_mps2),
        }
    }
}

fn intent_for<P: Perceive>(
    ego: &VehicleState,
    history: &History,
    perceiver: &P,
    params: &StepParams,
    lanes_per_direction: u8,
) -> Intent {
    let view = perceiver.view(ego, history);
    let ring = view.ring_length();
    let planner = Planner {
        view: &view,
        ego,
        params: &params.driver[ego.class],
        driver: params.driver,
        age_s: (view.lag_steps() - 1) as f64 * params.dt_s,
        ego_travel_m: forward_distance(view.observer_position_m(), ego.position_m, ring),
        lookahead_m: perceiver.lookahead_m(ego.class),
    };
    planner.decide(lanes_per_direction)
}

/// Ballistic update over one step; a vehicle that would reverse stops within
/// the step instead. Returns `(displacement, new speed)`.
pub fn integrate(speed: f64, accel: f64, dt: f64) -> (f64, f64) {
    let v_next = speed + accel * dt;
    if v_next < 0.0 {
        (-speed * speed / (2.0 * accel), 0.0)
    } else {
        (speed * dt + 0.5 * accel * dt * dt, v_next)
    }
}

/// Clamps overlapping followers behind their leaders, lane by lane, until no
/// overlap remains. `travelled` holds each vehicle's unwrapped displacement.
fn resolve_contacts(
    previous: &World,
    next: &mut World,
    travelled: &[f64],
    events: &mut Vec<SafetyEvent>,
) {
    let ring = previous.ring_length();
    let lpd = previous.geometry.lanes_per_direction as usize;
    let mut slots: Vec<Vec<usize>> = vec![Vec::new(); previous.geometry.lane_count()];
    for v in &next.vehicles {
        slots[v.direction as usize * lpd + v.lane as usize].push(v.id as usize);
    }
    for members in &mut slots {
        let n = members.len();
        if n < 2 {
            continue;
        }
        members.sort_by(|&a, &b| {
            let (pa, pb) = (&previous.vehicles[a], &previous.vehicles[b]);
            pa.position_m.total_cmp(&pb.position_m).then(pa.id.cmp(&pb.id))
        });
        let mut unwrapped: Vec<f64> = members
            .iter()
            .map(|&i| previous.vehicles[i].position_m + travelled[i])
            .collect();
        // each clamp only moves a vehicle backwards, so this terminates
        loop {
            let mut clamped = false;
            for k in (0..n).rev() {
                let lead = (k + 1) % n;
                let lead_pos = unwrapped[lead] + if lead == 0 { ring } else { 0.0 };
                let lead_len = next.vehicles[members[lead]].length_m;
                if lead_pos - unwrapped[k] - lead_len < 0.0 {
                    unwrapped[k] = lead_pos - lead_len - CONTACT_CLEARANCE_M;
                    let follower = &mut next.vehicles[members[k]];
                    follower.speed_mps = 0.0;
                    events.push(SafetyEvent {
                        time_step: next.step,
                        follower_id: follower.id,
                        leader_id: members[lead] as u32,
                        kind: SafetyEventKind::ContactPrevented,
                    });
                    clamped = true;
                }
            }
            if !clamped {
                break;
            }
        }
        for (k, &i) in members.iter().enumerate() {
            next.vehicles[i].position_m = wrap(unwrapped[k], ring);
        }
    }
}

/// Checks the state invariants that must hold after every step.
pub fn check_invariants(world: &World, expected_vehicles: usize) -> Result<(), DynamicsError> {
    let breach = |detail: String| DynamicsError::InvariantBreach {
        step: world.step,
        detail,
    };
    if world.vehicles.len() != expected_vehicles {
        return Err(breach(format!(
            "{} vehicles present, expected {expected_vehicles}",
            world.vehicles.len()
        )));
    }
    let ring = world.ring_length();
    let lpd = world.geometry.lanes_per_direction;
    for (i, v) in world.vehicles.iter().enumerate() {
        if v.id as usize != i {
            return Err(breach(format!("vehicle at index {i} has id {}", v.id)));
        }
        if !(v.position_m >= 0.0 && v.position_m < ring) {
            return Err(breach(format!("vehicle {} at position {}", v.id, v.position_m)));
        }
        if !(v.speed_mps >= 0.0 && v.speed_mps.is_finite()) {
            return Err(breach(format!("vehicle {} has speed {}", v.id, v.speed_mps)));
        }
        if v.lane >= lpd || v.direction >= world.geometry.directions {
            return Err(breach(format!("vehicle {} in lane {}/{}", v.id, v.direction, v.lane)));
        }
    }
    let index = crate::perception::LaneIndex::build(world);
    for d in 0..world.geometry.directions {
        for l in 0..lpd {
            let ids = index.lane(d, l);
            if ids.len() < 2 {
                continue;
            }
            for (k, &id) in ids.iter().enumerate() {
                let f = world.vehicle(id);
                let lead = world.vehicle(ids[(k + 1) % ids.len()]);
                let gap = ring_gap(f.position_m, lead.position_m, lead.length_m, ring);
                // allow for rounding in the clamp arithmetic
                if gap < -1e-6 {
                    return Err(breach(format!(
                        "vehicles {} and {} overlap by {:.6} m",
                        f.id, lead.id, -gap
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Produces the next world from the newest frame in `history`.
pub fn step<P: Perceive>(
    history: &History,
    perceiver: &P,
    params: &StepParams,
) -> Result<StepOutcome, DynamicsError> {
    let current = &history.newest().world;
    let lpd = current.geometry.lanes_per_direction;
    let intents: Vec<Intent> = current
        .vehicles
        .iter()
        .map(|v| intent_for(v, history, perceiver, params, lpd))
        .collect();

    let mut next = World {
        geometry: current.geometry,
        step: current.step + 1,
        vehicles: Vec::with_capacity(current.vehicles.len()),
    };
    let mut events = Vec::new();
    let mut travelled = Vec::with_capacity(current.vehicles.len());
    let ring = current.ring_length();
    for (v, intent) in current.vehicles.iter().zip(&intents) {
        if let Some(leader_id) = intent.emergency_leader {
            events.push(SafetyEvent {
                time_step: next.step,
                follower_id: v.id,
                leader_id,
                kind: SafetyEventKind::EmergencyBrake,
            });
        }
        let (dx, speed) = integrate(v.speed_mps, intent.accel, params.dt_s);
        travelled.push(dx);
        next.vehicles.push(VehicleState {
            lane: intent.lane,
            position_m: wrap(v.position_m + dx, ring),
            speed_mps: speed,
            accel_mps2: intent.accel,
            cooldown_steps: if intent.changed {
                params.cooldown_steps
            } else {
                v.cooldown_steps.saturating_sub(1)
            },
            ..*v
        });
    }
    resolve_contacts(current, &mut next, &travelled, &mut events);
    check_invariants(&next, current.vehicles.len())?;
    Ok(StepOutcome {
        world: next,
        events,
    })
}
