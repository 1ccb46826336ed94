//! Time-to-collision and speed statistics over ground-truth states.
//!
//! Two entry points share the same per-world sampling: [`SimTrace`] keeps
//! every world in memory and suits small runs and tests, while
//! [`MetricsAccumulator`] folds worlds as they are produced.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{ring_gap, SafetyEvent, SafetyEventKind};
use crate::perception::LaneIndex;
use crate::scenario::{PerClass, ScenarioConfig, VehicleClass, VehicleState, World};
use crate::simulation::{RunSummary, SimError, Simulation, StepObserver, TraceHasher};

/// Bumped whenever the metrics CSV columns change.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("gap must be positive, got {gap} m")]
    NonPositiveGap { gap: f64 },
    #[error("no risk-bearing time-to-collision samples for {class}")]
    EmptySampleSet { class: VehicleClass },
    #[error("no {class} vehicles in the fleet")]
    ClassAbsent { class: VehicleClass },
    #[error("window {first}..={last} lies outside the trace (0..={available})")]
    WindowOutOfRange { first: u64, last: u64, available: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ttc {
    Seconds(f64),
    /// The follower is not closing in.
    NoRisk,
}

pub fn ttc(gap_m: f64, follower_speed: f64, leader_speed: f64, cap_s: f64) -> Result<Ttc, MetricsError> {
    if !(gap_m > 0.0) {
        return Err(MetricsError::NonPositiveGap { gap: gap_m });
    }
    if follower_speed > leader_speed {
        Ok(Ttc::Seconds((gap_m / (follower_speed - leader_speed)).min(cap_s)))
    } else {
        Ok(Ttc::NoRisk)
    }
}

/// Inclusive range of world steps that enter the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub first_step: u64,
    pub last_step: u64,
}

impl Window {
    /// Every world after the warmup: steps `warmup + 1 ..= steps`.
    pub fn post_warmup(config: &ScenarioConfig) -> Self {
        Window {
            first_step: config.warmup_steps + 1,
            last_step: config.steps,
        }
    }

    pub fn contains(&self, step: u64) -> bool {
        (self.first_step..=self.last_step).contains(&step)
    }

    pub fn len(&self) -> u64 {
        (self.last_step + 1).saturating_sub(self.first_step)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TtcStats {
    pub sum_s: f64,
    pub samples: u64,
    /// Samples that hit the cap; they enter the mean at the cap value.
    pub capped: u64,
}

impl TtcStats {
    pub fn mean(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.sum_s / self.samples as f64)
    }
}

/// Calls `f(follower, ttc, capped)` for every same-lane follower that is
/// closing in on its leader. Lanes are visited in index order and vehicles
/// in position order.
pub fn for_each_ttc_sample(world: &World, cap_s: f64, mut f: impl FnMut(&VehicleState, f64, bool)) {
    let index = LaneIndex::build(world);
    let ring = world.ring_length();
    for d in 0..world.geometry.directions {
        for l in 0..world.geometry.lanes_per_direction {
            let ids = index.lane(d, l);
            if ids.len() < 2 {
                continue;
            }
            for (k, &id) in ids.iter().enumerate() {
                let follower = world.vehicle(id);
                let leader = world.vehicle(ids[(k + 1) % ids.len()]);
                let gap = ring_gap(follower.position_m, leader.position_m, leader.length_m, ring);
                if let Ok(Ttc::Seconds(t)) = ttc(gap, follower.speed_mps, leader.speed_mps, cap_s) {
                    f(follower, t, t >= cap_s);
                }
            }
        }
    }
}

/// Streaming metrics over the post-warmup window.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    cap_s: f64,
    window: Window,
    ttc: PerClass<TtcStats>,
    speed_sum: PerClass<f64>,
    speed_samples: PerClass<u64>,
    contact_events: u64,
    emergency_events: u64,
}

impl MetricsAccumulator {
    pub fn new(window: Window, cap_s: f64) -> Self {
        MetricsAccumulator {
            cap_s,
            window,
            ttc: PerClass::default(),
            speed_sum: PerClass::default(),
            speed_samples: PerClass::default(),
            contact_events: 0,
            emergency_events: 0,
        }
    }

    pub fn for_config(config: &ScenarioConfig) -> Self {
        Self::new(Window::post_warmup(config), config.ttc_cap_s)
    }

    pub fn finish(&self) -> MetricsRecord {
        let total_sum: f64 = self.speed_sum.iter().map(|(_, s)| s).sum();
        let total_n: u64 = self.speed_samples.iter().map(|(_, n)| n).sum();
        MetricsRecord {
            window: self.window,
            ttc: self.ttc,
            mean_speed_mps: if total_n > 0 {
                total_sum / total_n as f64
            } else {
                0.0
            },
            class_mean_speed_mps: PerClass::from_fn(|c| {
                (self.speed_samples[c] > 0).then(|| self.speed_sum[c] / self.speed_samples[c] as f64)
            }),
            contact_events: self.contact_events,
            emergency_events: self.emergency_events,
        }
    }
}

impl StepObserver for MetricsAccumulator {
    fn on_world(&mut self, world: &World, events: &[SafetyEvent]) {
        for e in events {
            match e.kind {
                SafetyEventKind::ContactPrevented => self.contact_events += 1,
                SafetyEventKind::EmergencyBrake => self.emergency_events += 1,
            }
        }
        if !self.window.contains(world.step) {
            return;
        }
        for v in &world.vehicles {
            self.speed_sum[v.class] += v.speed_mps;
            self.speed_samples[v.class] += 1;
        }
        let ttc = &mut self.ttc;
        for_each_ttc_sample(world, self.cap_s, |f, t, capped| {
            let s = &mut ttc[f.class];
            s.sum_s += t;
            s.samples += 1;
            s.capped += u64::from(capped);
        });
    }
}

/// Summary statistics of one run. Event counts cover the whole run; every
/// other field covers `window` only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub window: Window,
    pub ttc: PerClass<TtcStats>,
    pub mean_speed_mps: f64,
    pub class_mean_speed_mps: PerClass<Option<f64>>,
    pub contact_events: u64,
    pub emergency_events: u64,
}

impl MetricsRecord {
    /// Numeric metric columns in CSV order. These are the columns that
    /// experiment tables average across replications.
    pub fn metric_columns(&self) -> Vec<(String, Option<f64>)> {
        let mut out = Vec::new();
        for c in VehicleClass::ALL {
            let t = &self.ttc[c];
            let c = c.label().to_lowercase();
            out.push((format!("ttc_mean_s_{c}"), t.mean()));
            out.push((format!("ttc_samples_{c}"), Some(t.samples as f64)));
            out.push((format!("ttc_capped_{c}"), Some(t.capped as f64)));
        }
        out.push(("mean_speed_mps".into(), Some(self.mean_speed_mps)));
        for c in VehicleClass::ALL {
            out.push((
                format!("mean_speed_mps_{}", c.label().to_lowercase()),
                self.class_mean_speed_mps[c],
            ));
        }
        out.push(("contact_events".into(), Some(self.contact_events as f64)));
        out.push(("emergency_events".into(), Some(self.emergency_events as f64)));
        out
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec![
            "schema_version".to_string(),
            "window_first_step".into(),
            "window_last_step".into(),
        ];
        h.extend(self.metric_columns().into_iter().map(|(name, _)| name));
        h
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut r = vec![
            METRICS_SCHEMA_VERSION.to_string(),
            self.window.first_step.to_string(),
            self.window.last_step.to_string(),
        ];
        r.extend(self.metric_columns().into_iter().map(|(_, v)| fmt_opt(v)));
        r
    }
}

/// Shortest round-trip decimal form; empty for a missing value.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Runs a scenario while folding metrics; nothing but the last worlds is kept.
pub fn run_with_metrics(config: &ScenarioConfig) -> Result<(RunSummary, MetricsRecord), SimError> {
    let mut acc = MetricsAccumulator::for_config(config);
    let summary = Simulation::new(config)?.run(&mut acc)?;
    Ok((summary, acc.finish()))
}

/// Every world of a run plus its safety events.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub config: ScenarioConfig,
    /// `worlds[k].step == k`, from the initial world to the last step.
    pub worlds: Vec<World>,
    pub events: Vec<SafetyEvent>,
    pub hash: String,
}

#[derive(Default)]
struct Recorder {
    worlds: Vec<World>,
    events: Vec<SafetyEvent>,
}

impl StepObserver for Recorder {
    fn on_world(&mut self, world: &World, events: &[SafetyEvent]) {
        self.worlds.push(world.clone());
        self.events.extend_from_slice(events);
    }
}

impl SimTrace {
    pub fn record(config: &ScenarioConfig) -> Result<SimTrace, SimError> {
        let mut rec = Recorder::default();
        let summary = Simulation::new(config)?.run(&mut rec)?;
        Ok(SimTrace {
            config: config.clone(),
            worlds: rec.worlds,
            events: rec.events,
            hash: summary.trace_hash,
        })
    }

    pub fn steps(&self) -> u64 {
        self.worlds.len() as u64 - 1
    }

    pub fn post_warmup_window(&self) -> Window {
        Window::post_warmup(&self.config)
    }

    fn window_worlds(&self, window: Window) -> Result<&[World], MetricsError> {
        if window.is_empty() || window.last_step > self.steps() {
            return Err(MetricsError::WindowOutOfRange {
                first: window.first_step,
                last: window.last_step,
                available: self.steps(),
            });
        }
        Ok(&self.worlds[window.first_step as usize..=window.last_step as usize])
    }

    /// Recomputes the hash from the stored worlds.
    pub fn rehash(&self) -> String {
        let mut h = TraceHasher::new();
        for w in &self.worlds {
            let events: Vec<SafetyEvent> = self
                .events
                .iter()
                .filter(|e| e.time_step == w.step)
                .copied()
                .collect();
            h.on_world(w, &events);
        }
        h.finish()
    }
}

pub fn class_mean_ttc(trace: &SimTrace, class: VehicleClass, window: Window, cap_s: f64) -> Result<f64, MetricsError> {
    let worlds = trace.window_worlds(window)?;
    if !worlds[0].vehicles.iter().any(|v| v.class == class) {
        return Err(MetricsError::ClassAbsent { class });
    }
    let mut stats = TtcStats::default();
    for w in worlds {
        for_each_ttc_sample(w, cap_s, |f, t, _| {
            if f.class == class {
                stats.sum_s += t;
                stats.samples += 1;
            }
        });
    }
    stats.mean().ok_or(MetricsError::EmptySampleSet { class })
}

/// Time-and-fleet average of true speeds, optionally for one class.
pub fn mean_speed(trace: &SimTrace, window: Window, class: Option<VehicleClass>) -> Result<f64, MetricsError> {
    let worlds = trace.window_worlds(window)?;
    let (mut sum, mut n) = (0.0, 0u64);
    for w in worlds {
        for v in w.vehicles.iter().filter(|v| class.is_none_or(|c| v.class == c)) {
            sum += v.speed_mps;
            n += 1;
        }
    }
    Ok(if n > 0 { sum / n as f64 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::RoadGeometry;

    #[test]
    fn ttc_examples() {
        assert_eq!(ttc(50.0, 30.0, 20.0, 100.0).unwrap(), Ttc::Seconds(5.0));
        assert_eq!(ttc(50.0, 20.0, 25.0, 100.0).unwrap(), Ttc::NoRisk);
        assert_eq!(ttc(1000.0, 10.1, 10.0, 100.0).unwrap(), Ttc::Seconds(100.0));
        assert!(matches!(
            ttc(0.0, 1.0, 0.0, 100.0),
            Err(MetricsError::NonPositiveGap { .. })
        ));
    }

    fn veh(id: u32, class: VehicleClass, pos: f64, speed: f64) -> VehicleState {
        VehicleState {
            id,
            class,
            direction: 0,
            lane: 0,
            position_m: pos,
            speed_mps: speed,
            accel_mps2: 0.0,
            length_m: 5.0,
            cooldown_steps: 0,
        }
    }

    fn trace_of(worlds: Vec<Vec<VehicleState>>) -> SimTrace {
        let geometry = RoadGeometry {
            length_m: 1000.0,
            lanes_per_direction: 1,
            directions: 1,
        };
        let steps = worlds.len() as u64 - 1;
        SimTrace {
            config: ScenarioConfig {
                steps,
                warmup_steps: 0,
                ..ScenarioConfig::default()
            },
            worlds: worlds
                .into_iter()
                .enumerate()
                .map(|(k, vehicles)| World {
                    geometry,
                    step: k as u64,
                    vehicles,
                })
                .collect(),
            events: Vec::new(),
            hash: String::new(),
        }
    }

    #[test]
    fn equal_speeds_give_no_samples() {
        let w = vec![veh(0, VehicleClass::Av, 0.0, 10.0), veh(1, VehicleClass::Av, 500.0, 10.0)];
        let t = trace_of(vec![w.clone(), w.clone(), w]);
        assert_eq!(
            class_mean_ttc(&t, VehicleClass::Av, t.post_warmup_window(), 100.0),
            Err(MetricsError::EmptySampleSet {
                class: VehicleClass::Av
            })
        );
    }

    #[test]
    fn mean_of_two_samples() {
        let w1 = vec![veh(0, VehicleClass::Av, 0.0, 12.0), veh(1, VehicleClass::Rv, 45.0, 2.0), veh(2, VehicleClass::Rv, 600.0, 2.0)];
        // gap 40 at closing 10 -> 4 s; RV 1 -> RV 2 does not close; RV 2 -> AV 0 opens
        let w2 = vec![veh(0, VehicleClass::Av, 0.0, 12.0), veh(1, VehicleClass::Rv, 65.0, 2.0), veh(2, VehicleClass::Rv, 600.0, 2.0)];
        // gap 60 at closing 10 -> 6 s
        let t = trace_of(vec![w1.clone(), w1, w2]);
        assert_eq!(class_mean_ttc(&t, VehicleClass::Av, t.post_warmup_window(), 100.0).unwrap(), 5.0);
        assert_eq!(
            class_mean_ttc(&t, VehicleClass::Gv, t.post_warmup_window(), 100.0),
            Err(MetricsError::ClassAbsent {
                class: VehicleClass::Gv
            })
        );
    }

    #[test]
    fn mean_speed_examples() {
        let p = ScenarioConfig::default().driver.rv.desired_speed_mps;
        let free = vec![veh(0, VehicleClass::Rv, 0.0, p)];
        let t = trace_of(vec![free.clone(), free]);
        assert_eq!(mean_speed(&t, t.post_warmup_window(), None).unwrap(), p);
        let stopped = vec![veh(0, VehicleClass::Rv, 0.0, 0.0), veh(1, VehicleClass::Gv, 10.0, 0.0)];
        let t = trace_of(vec![stopped.clone(), stopped]);
        assert_eq!(mean_speed(&t, t.post_warmup_window(), Some(VehicleClass::Gv)).unwrap(), 0.0);
    }

    #[test]
    fn window_checked() {
        let w = vec![veh(0, VehicleClass::Rv, 0.0, 1.0)];
        let t = trace_of(vec![w.clone(), w]);
        let bad = Window {
            first_step: 1,
            last_step: 5,
        };
        assert!(matches!(mean_speed(&t, bad, None), Err(MetricsError::WindowOutOfRange { .. })));
    }

    #[test]
    fn csv_header_matches_fields() {
        let rec = MetricsAccumulator::new(
            Window {
                first_step: 1,
                last_step: 2,
            },
            100.0,
        )
        .finish();
        assert_eq!(rec.csv_header().len(), rec.csv_fields().len());
    }
}
