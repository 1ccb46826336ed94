//! What each driver class gets to see: onboard sensors with limited range,
//! or the roadside network's segment-wide, delayed view.
//!
//! Snapshots are read from stored past worlds, never from the world being
//! built. Measurement noise comes from counter-keyed substreams, so the same
//! `(observer, subject, frame step)` always yields the same reading no matter
//! who asks first.
//!
//! [`SnapshotView`] is the lazy form used inside the step loop: it answers
//! leader/follower queries by walking the lane index of the lagged frame and
//! only measures the vehicles it touches. [`PerceptionSnapshot`] is the
//! materialized form with every visible vehicle.

use std::collections::VecDeque;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ring::{forward_distance, ring_distance, wrap};
use crate::rng::{self, Purpose, ROADSIDE_OBSERVER};
use crate::scenario::{PerClass, RoadGeometry, ScenarioError, VehicleClass, VehicleState, World};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("history holds {depth} frames but latency {latency} was requested")]
    HistoryTooShallow { depth: usize, latency: u32 },
    #[error("no perceived vehicle ahead of the ego")]
    NoLeaderAhead,
}

/// Marker for a sensor that sees the whole segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentWide {
    #[serde(rename = "segment-wide")]
    SegmentWide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensingRange {
    Meters(f64),
    Segment(SegmentWide),
}

impl SensingRange {
    pub const SEGMENT_WIDE: SensingRange = SensingRange::Segment(SegmentWide::SegmentWide);

    /// Detection radius; infinite for segment-wide sensing.
    pub fn meters(self) -> f64 {
        match self {
            SensingRange::Meters(m) => m,
            SensingRange::Segment(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionSettings {
    pub range_m: SensingRange,
    pub pos_noise_sigma_m: f64,
    pub speed_noise_sigma_mps: f64,
    /// 1 means the freshest stored world.
    pub latency_steps: u32,
    pub confidence_floor: f64,
}

impl PerceptionSettings {
    pub fn onboard(range_m: f64, sigma_m: f64, sigma_mps: f64) -> Self {
        PerceptionSettings {
            range_m: SensingRange::Meters(range_m),
            pos_noise_sigma_m: sigma_m,
            speed_noise_sigma_mps: sigma_mps,
            latency_steps: 1,
            confidence_floor: 0.0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.pos_noise_sigma_m == 0.0 && self.speed_noise_sigma_mps == 0.0
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ScenarioError> {
        let bad = |field: &str, reason: &str| ScenarioError::InvalidField {
            field: format!("{prefix}.{field}"),
            reason: reason.to_string(),
        };
        if let SensingRange::Meters(m) = self.range_m {
            if !(m.is_finite() && m > 0.0) {
                return Err(bad("range_m", "must be positive or \"segment-wide\""));
            }
        }
        if !(self.pos_noise_sigma_m >= 0.0 && self.pos_noise_sigma_m.is_finite()) {
            return Err(bad("pos_noise_sigma_m", "must be non-negative"));
        }
        if !(self.speed_noise_sigma_mps >= 0.0 && self.speed_noise_sigma_mps.is_finite()) {
            return Err(bad("speed_noise_sigma_mps", "must be non-negative"));
        }
        if self.latency_steps < 1 {
            return Err(bad("latency_steps", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(bad("confidence_floor", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorSource {
    Onboard,
    Roadside,
}

/// Per-class perception model.
///
/// With `source = roadside`, vehicles inside roadside coverage are reported by
/// the network (`roadside` settings, constant `roadside_confidence`); vehicles
/// outside it fall back to the `onboard` sensor. `lookahead_m > 0` turns on
/// downstream-hazard anticipation (see [`gv_effective_leader`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPerception {
    pub source: SensorSource,
    pub onboard: PerceptionSettings,
    pub roadside: PerceptionSettings,
    pub roadside_confidence: f64,
    pub lookahead_m: f64,
}

impl Default for ClassPerception {
    fn default() -> Self {
        ClassPerception::for_class(VehicleClass::Rv)
    }
}

impl ClassPerception {
    pub fn for_class(class: VehicleClass) -> Self {
        let roadside = PerceptionSettings {
            range_m: SensingRange::SEGMENT_WIDE,
            pos_noise_sigma_m: 0.2,
            speed_noise_sigma_mps: 0.2,
            latency_steps: 2,
            confidence_floor: 0.0,
        };
        let av_onboard = PerceptionSettings::onboard(100.0, 0.5, 0.5);
        match class {
            VehicleClass::Rv => ClassPerception {
                source: SensorSource::Onboard,
                onboard: PerceptionSettings::onboard(250.0, 0.0, 0.0),
                roadside,
                roadside_confidence: 0.95,
                lookahead_m: 0.0,
            },
            VehicleClass::Av => ClassPerception {
                source: SensorSource::Onboard,
                onboard: av_onboard,
                roadside,
                roadside_confidence: 0.95,
                lookahead_m: 0.0,
            },
            VehicleClass::Gv => ClassPerception {
                source: SensorSource::Roadside,
                onboard: av_onboard,
                roadside,
                roadside_confidence: 0.95,
                lookahead_m: 200.0,
            },
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ScenarioError> {
        self.onboard.validate(&format!("{prefix}.onboard"))?;
        self.roadside.validate(&format!("{prefix}.roadside"))?;
        if !(0.0..=1.0).contains(&self.roadside_confidence) {
            return Err(ScenarioError::InvalidField {
                field: format!("{prefix}.roadside_confidence"),
                reason: "must lie in [0, 1]".into(),
            });
        }
        if !(self.lookahead_m >= 0.0 && self.lookahead_m.is_finite()) {
            return Err(ScenarioError::InvalidField {
                field: format!("{prefix}.lookahead_m"),
                reason: "must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Settings of the sensor that defines latency for this class.
    pub fn primary(&self) -> &PerceptionSettings {
        match self.source {
            SensorSource::Onboard => &self.onboard,
            SensorSource::Roadside => &self.roadside,
        }
    }

    /// Same model with every noise sigma set to zero.
    pub fn noiseless(mut self) -> Self {
        for s in [&mut self.onboard, &mut self.roadside] {
            s.pos_noise_sigma_m = 0.0;
            s.speed_noise_sigma_mps = 0.0;
        }
        self
    }
}

/// Roadside unit layout on the ring.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeploymentPlan {
    /// Realized spacing `L / n`.
    pub spacing_m: f64,
    /// Same positions on each side of the road.
    pub unit_positions_m: Vec<f64>,
    pub sensing_radius_m: f64,
    /// Ideal density `1000 / requested spacing`.
    pub units_per_km_per_direction: f64,
    /// Density of the units actually placed on this ring.
    pub placed_units_per_km_per_direction: f64,
    pub directions: u8,
}

impl DeploymentPlan {
    pub fn units_per_km_all_directions(&self) -> f64 {
        self.units_per_km_per_direction * self.directions as f64
    }

    pub fn coverage_fraction(&self) -> f64 {
        (2.0 * self.sensing_radius_m / self.spacing_m).min(1.0)
    }

    /// Whether a ring position lies within some unit's sensing radius.
    pub fn covers(&self, position_m: f64) -> bool {
        if self.coverage_fraction() >= 1.0 {
            return true;
        }
        let offset = position_m.rem_euclid(self.spacing_m);
        offset.min(self.spacing_m - offset) <= self.sensing_radius_m
    }
}

/// Places `round(L / spacing)` units uniformly around the ring (ties round to
/// even, minimum one unit).
pub fn deploy_roadside(geometry: &RoadGeometry, spacing_m: f64, sensing_radius_m: f64) -> DeploymentPlan {
    assert!(spacing_m > 0.0, "unit spacing must be positive");
    let length = geometry.length_m;
    let n = ((length / spacing_m).round_ties_even() as usize).max(1);
    let realized = length / n as f64;
    DeploymentPlan {
        spacing_m: realized,
        unit_positions_m: (0..n).map(|k| k as f64 * realized).collect(),
        sensing_radius_m,
        units_per_km_per_direction: 1000.0 / spacing_m,
        placed_units_per_km_per_direction: n as f64 / (length / 1000.0),
        directions: geometry.directions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceivedVehicle {
    pub id: u32,
    pub class: VehicleClass,
    pub lane: u8,
    pub position_m: f64,
    pub speed_mps: f64,
    pub length_m: f64,
    pub confidence: f64,
}

/// Materialized view of the neighbours one observer can see.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionSnapshot {
    pub observer_id: u32,
    pub snapshot_lag_steps: u32,
    pub ring_length_m: f64,
    /// How far ahead a vehicle may be and still count as a leader.
    pub forward_horizon_m: f64,
    /// Ordered by lane, then by position within the lane.
    pub entries: Vec<PerceivedVehicle>,
}

impl PerceptionSnapshot {
    pub fn get(&self, id: u32) -> Option<&PerceivedVehicle> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Ids of one `(direction, lane)` sorted by position, with the positions
/// alongside for binary search.
#[derive(Debug, Clone, Default)]
struct LaneList {
    ids: Vec<u32>,
    positions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LaneIndex {
    lanes_per_direction: u8,
    lanes: Vec<LaneList>,
}

impl LaneIndex {
    pub fn build(world: &World) -> Self {
        let lpd = world.geometry.lanes_per_direction;
        let mut lanes = vec![LaneList::default(); world.geometry.lane_count()];
        let mut order: Vec<&VehicleState> = world.vehicles.iter().collect();
        order.sort_by(|a, b| {
            a.position_m
                .total_cmp(&b.position_m)
                .then(a.id.cmp(&b.id))
        });
        for v in order {
            let slot = &mut lanes[v.direction as usize * lpd as usize + v.lane as usize];
            slot.ids.push(v.id);
            slot.positions.push(v.position_m);
        }
        LaneIndex {
            lanes_per_direction: lpd,
            lanes,
        }
    }

    /// Vehicle ids of one lane in position order.
    pub fn lane(&self, direction: u8, lane: u8) -> &[u32] {
        &self.lanes[self.slot(direction, lane)].ids
    }

    fn slot(&self, direction: u8, lane: u8) -> usize {
        direction as usize * self.lanes_per_direction as usize + lane as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RoadsideKey {
    seed: u64,
    pos_sigma: f64,
    speed_sigma: f64,
    spacing_m: f64,
    radius_m: f64,
}

/// Measurements broadcast by the roadside network for one frame. Every
/// guided vehicle receives the same numbers.
#[derive(Debug)]
struct RoadsideMeasurements {
    key: RoadsideKey,
    covered: Vec<bool>,
    readings: Vec<(f64, f64)>,
}

impl RoadsideMeasurements {
    fn measure(world: &World, plan: &DeploymentPlan, settings: &PerceptionSettings, seed: u64) -> Self {
        let key = RoadsideKey {
            seed,
            pos_sigma: settings.pos_noise_sigma_m,
            speed_sigma: settings.speed_noise_sigma_mps,
            spacing_m: plan.spacing_m,
            radius_m: plan.sensing_radius_m,
        };
        let ring = world.ring_length();
        let noiseless = settings.is_noiseless();
        let mut covered = Vec::with_capacity(world.vehicles.len());
        let mut readings = Vec::with_capacity(world.vehicles.len());
        for v in &world.vehicles {
            covered.push(plan.covers(v.position_m));
            if noiseless {
                readings.push((v.position_m, v.speed_mps));
            } else {
                let mut stream =
                    rng::substream(seed, Purpose::RoadsideSensing, ROADSIDE_OBSERVER, v.id, world.step);
                let (zp, zv) = rng::normal_pair(&mut stream);
                readings.push((
                    wrap(v.position_m + settings.pos_noise_sigma_m * zp, ring),
                    v.speed_mps + settings.speed_noise_sigma_mps * zv,
                ));
            }
        }
        RoadsideMeasurements {
            key,
            covered,
            readings,
        }
    }
}

/// A stored world with its lane index.
#[derive(Debug)]
pub struct Frame {
    pub world: World,
    index: LaneIndex,
    roadside: OnceLock<Arc<RoadsideMeasurements>>,
}

impl Frame {
    pub fn new(world: World) -> Self {
        let index = LaneIndex::build(&world);
        Frame {
            world,
            index,
            roadside: OnceLock::new(),
        }
    }

    pub fn index(&self) -> &LaneIndex {
        &self.index
    }

    fn roadside(&self, plan: &DeploymentPlan, settings: &PerceptionSettings, seed: u64) -> Arc<RoadsideMeasurements> {
        let cached = self
            .roadside
            .get_or_init(|| Arc::new(RoadsideMeasurements::measure(&self.world, plan, settings, seed)));
        let key = RoadsideKey {
            seed,
            pos_sigma: settings.pos_noise_sigma_m,
            speed_sigma: settings.speed_noise_sigma_mps,
            spacing_m: plan.spacing_m,
            radius_m: plan.sensing_radius_m,
        };
        if cached.key == key {
            Arc::clone(cached)
        } else {
            Arc::new(RoadsideMeasurements::measure(&self.world, plan, settings, seed))
        }
    }
}

/// The most recent stored worlds, newest first.
#[derive(Debug)]
pub struct History {
    frames: VecDeque<Frame>,
    capacity: usize,
}

impl History {
    pub fn new(initial: World, capacity: usize) -> Self {
        let mut frames = VecDeque::with_capacity(capacity.max(1));
        frames.push_front(Frame::new(initial));
        History {
            frames,
            capacity: capacity.max(1),
        }
    }

    pub fn from_worlds(worlds_oldest_first: impl IntoIterator<Item = World>, capacity: usize) -> Self {
        let mut iter = worlds_oldest_first.into_iter();
        let first = iter.next().expect("history needs at least one world");
        let mut history = History::new(first, capacity);
        for w in iter {
            history.push(w);
        }
        history
    }

    pub fn push(&mut self, world: World) {
        self.frames.push_front(Frame::new(world));
        self.frames.truncate(self.capacity);
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn newest(&self) -> &Frame {
        &self.frames[0]
    }

    /// The frame `latency` steps behind the world being produced; latency 1
    /// is the newest stored frame.
    pub fn lagged(&self, latency: u32) -> Result<&Frame, PerceptionError> {
        let depth = self.frames.len();
        if latency == 0 || latency as usize > depth {
            return Err(PerceptionError::HistoryTooShallow { depth, latency });
        }
        Ok(&self.frames[latency as usize - 1])
    }
}

#[derive(Debug, Clone, Copy)]
struct OnboardSensor {
    range_m: f64,
    pos_sigma: f64,
    speed_sigma: f64,
    floor: f64,
    seed: u64,
}

#[derive(Debug, Clone)]
struct RoadsideSensor {
    measurements: Arc<RoadsideMeasurements>,
    confidence: f64,
    floor: f64,
}

/// A perceived vehicle together with where it truly was in the lagged frame.
/// The true position only fixes lane order and unwraps noise across the
/// ring seam; gaps come from the perceived values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sighting {
    pub perceived: PerceivedVehicle,
    pub true_position_m: f64,
}

impl Sighting {
    /// Perceived position expressed as an unwrapped offset from the true one.
    fn noise_offset(&self, ring: f64) -> f64 {
        let d = forward_distance(self.true_position_m, self.perceived.position_m, ring);
        if d > 0.5 * ring {
            d - ring
        } else {
            d
        }
    }
}

/// Lazy snapshot for one observer, backed by a stored frame.
#[derive(Debug, Clone)]
pub struct SnapshotView<'h> {
    frame: &'h Frame,
    observer: u32,
    direction: u8,
    lag_steps: u32,
    ring: f64,
    observer_position_m: f64,
    horizon_m: f64,
    onboard: Option<OnboardSensor>,
    roadside: Option<RoadsideSensor>,
}

impl<'h> SnapshotView<'h> {
    /// Onboard-only view.
    pub fn local(frame: &'h Frame, observer: u32, settings: &PerceptionSettings, lag_steps: u32, seed: u64) -> Self {
        let ring = frame.world.ring_length();
        let me = frame.world.vehicle(observer);
        let range_m = settings.range_m.meters();
        SnapshotView {
            frame,
            observer,
            direction: me.direction,
            lag_steps,
            ring,
            observer_position_m: me.position_m,
            horizon_m: range_m.min(ring),
            onboard: Some(OnboardSensor {
                range_m,
                pos_sigma: settings.pos_noise_sigma_m,
                speed_sigma: settings.speed_noise_sigma_mps,
                floor: settings.confidence_floor,
                seed,
            }),
            roadside: None,
        }
    }

    /// Roadside view with onboard fallback outside coverage.
    pub fn roadside(
        frame: &'h Frame,
        observer: u32,
        model: &ClassPerception,
        plan: &DeploymentPlan,
        lag_steps: u32,
        seed: u64,
    ) -> Self {
        let mut view = SnapshotView::local(frame, observer, &model.onboard, lag_steps, seed);
        view.horizon_m = view.ring;
        view.roadside = Some(RoadsideSensor {
            measurements: frame.roadside(plan, &model.roadside, seed),
            confidence: model.roadside_confidence,
            floor: model.roadside.confidence_floor,
        });
        if plan.coverage_fraction() >= 1.0 {
            view.onboard = None;
        }
        view
    }

    pub fn observer(&self) -> u32 {
        self.observer
    }

    pub fn lag_steps(&self) -> u32 {
        self.lag_steps
    }

    pub fn frame(&self) -> &'h Frame {
        self.frame
    }

    pub fn ring_length(&self) -> f64 {
        self.ring
    }

    /// Observer position in the lagged frame.
    pub fn observer_position_m(&self) -> f64 {
        self.observer_position_m
    }

    fn observe(&self, v: &VehicleState) -> Option<PerceivedVehicle> {
        let mut out = PerceivedVehicle {
            id: v.id,
            class: v.class,
            lane: v.lane,
            position_m: v.position_m,
            speed_mps: v.speed_mps,
            length_m: v.length_m,
            confidence: 1.0,
        };
        if let Some(rs) = &self.roadside {
            if rs.measurements.covered[v.id as usize] {
                if rs.confidence < rs.floor {
                    return None;
                }
                let (p, s) = rs.measurements.readings[v.id as usize];
                out.position_m = p;
                out.speed_mps = s;
                out.confidence = rs.confidence;
                return Some(out);
            }
        }
        let sensor = self.onboard.as_ref()?;
        let d = ring_distance(self.observer_position_m, v.position_m, self.ring);
        if !(d <= sensor.range_m) {
            return None;
        }
        out.confidence = if sensor.range_m.is_finite() {
            1.0 - d / sensor.range_m
        } else {
            1.0
        };
        if out.confidence < sensor.floor {
            return None;
        }
        if sensor.pos_sigma != 0.0 || sensor.speed_sigma != 0.0 {
            let mut stream = rng::substream(
                sensor.seed,
                Purpose::OnboardSensing,
                self.observer,
                v.id,
                self.frame.world.step,
            );
            let (zp, zv) = rng::normal_pair(&mut stream);
            out.position_m = wrap(v.position_m + sensor.pos_sigma * zp, self.ring);
            out.speed_mps = v.speed_mps + sensor.speed_sigma * zv;
        }
        Some(out)
    }

    fn lane_list(&self, lane: u8) -> &'h LaneList {
        let idx = &self.frame.index;
        &idx.lanes[idx.slot(self.direction, lane)]
    }

    /// Visible vehicles ahead of `reference` in `lane`, nearest first.
    pub fn ahead(&self, lane: u8, reference: f64) -> impl Iterator<Item = Sighting> + '_ {
        let list = self.lane_list(lane);
        let n = list.ids.len();
        let start = list.positions.partition_point(|&p| p < reference);
        (0..n)
            .map(move |k| list.ids[(start + k) % n])
            .filter(move |&id| id != self.observer)
            .map(move |id| self.frame.world.vehicle(id))
            .take_while(move |v| forward_distance(reference, v.position_m, self.ring) <= self.horizon_m)
            .filter_map(move |v| {
                self.observe(v).map(|perceived| Sighting {
                    perceived,
                    true_position_m: v.position_m,
                })
            })
    }

    /// Visible vehicles behind `reference` in `lane`, nearest first.
    pub fn behind(&self, lane: u8, reference: f64) -> impl Iterator<Item = Sighting> + '_ {
        let list = self.lane_list(lane);
        let n = list.ids.len();
        let start = list.positions.partition_point(|&p| p < reference);
        (1..=n)
            .map(move |k| list.ids[(start + n - k) % n])
            .filter(move |&id| id != self.observer)
            .map(move |id| self.frame.world.vehicle(id))
            .take_while(move |v| forward_distance(v.position_m, reference, self.ring) <= self.horizon_m)
            .filter_map(move |v| {
                self.observe(v).map(|perceived| Sighting {
                    perceived,
                    true_position_m: v.position_m,
                })
            })
    }

    pub fn leader(&self, lane: u8) -> Option<Sighting> {
        self.ahead(lane, self.observer_position_m).next()
    }

    pub fn follower(&self, lane: u8) -> Option<Sighting> {
        self.behind(lane, self.observer_position_m).next()
    }

    /// Lowest perceived speed among vehicles within `lookahead_m` ahead.
    pub fn hazard_speed(&self, lane: u8, lookahead_m: f64) -> Option<f64> {
        let reference = self.observer_position_m;
        self.ahead(lane, reference)
            .take_while(|s| forward_distance(reference, s.true_position_m, self.ring) <= lookahead_m)
            .map(|s| s.perceived.speed_mps)
            .reduce(f64::min)
    }

    /// Perceived distance from the observer (lagged frame) forward to `s`.
    pub fn offset_ahead(&self, s: &Sighting) -> f64 {
        forward_distance(self.observer_position_m, s.true_position_m, self.ring) + s.noise_offset(self.ring)
    }

    /// Perceived distance from `s` forward to the observer (lagged frame).
    pub fn offset_behind(&self, s: &Sighting) -> f64 {
        forward_distance(s.true_position_m, self.observer_position_m, self.ring) - s.noise_offset(self.ring)
    }

    /// Perceived distance from `back` forward to `front`.
    pub fn offset_between(&self, back: &Sighting, front: &Sighting) -> f64 {
        forward_distance(back.true_position_m, front.true_position_m, self.ring) + front.noise_offset(self.ring)
            - back.noise_offset(self.ring)
    }

    pub fn materialize(&self) -> PerceptionSnapshot {
        let world = &self.frame.world;
        let mut entries = Vec::new();
        for lane in 0..world.geometry.lanes_per_direction {
            for &id in self.lane_list(lane).ids.iter() {
                if id == self.observer {
                    continue;
                }
                if let Some(p) = self.observe(world.vehicle(id)) {
                    entries.push(p);
                }
            }
        }
        PerceptionSnapshot {
            observer_id: self.observer,
            snapshot_lag_steps: self.lag_steps,
            ring_length_m: self.ring,
            forward_horizon_m: self.horizon_m,
            entries,
        }
    }
}

/// Onboard perception of `previous` by `ego`: every same-direction vehicle
/// within `range_m`, with Gaussian measurement noise.
pub fn perceive_local(ego: &VehicleState, previous: &World, settings: &PerceptionSettings, seed: u64) -> PerceptionSnapshot {
    let frame = Frame::new(previous.clone());
    SnapshotView::local(&frame, ego.id, settings, settings.latency_steps, seed).materialize()
}

/// Roadside perception: the covered segment as stored `latency_steps` frames
/// ago, with onboard fallback for uncovered vehicles.
pub fn perceive_roadside(
    ego: &VehicleState,
    history: &History,
    plan: &DeploymentPlan,
    model: &ClassPerception,
    seed: u64,
) -> Result<PerceptionSnapshot, PerceptionError> {
    let latency = model.roadside.latency_steps;
    let frame = history.lagged(latency)?;
    Ok(SnapshotView::roadside(frame, ego.id, model, plan, latency, seed).materialize())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveLeader {
    pub leader_id: u32,
    pub gap_m: f64,
    /// Ego speed minus the slower of the leader and the downstream hazard.
    pub approach_rate_mps: f64,
}

/// Nearest perceived leader in the ego lane, but closing speed measured
/// against the slowest vehicle visible within `lookahead_m`.
pub fn gv_effective_leader(
    snapshot: &PerceptionSnapshot,
    ego: &VehicleState,
    lookahead_m: f64,
) -> Result<EffectiveLeader, PerceptionError> {
    let ring = snapshot.ring_length_m;
    let in_lane = snapshot
        .entries
        .iter()
        .filter(|e| e.lane == ego.lane && e.id != ego.id)
        .map(|e| (forward_distance(ego.position_m, e.position_m, ring), e))
        .filter(|(d, _)| *d <= snapshot.forward_horizon_m);
    let mut nearest: Option<(f64, &PerceivedVehicle)> = None;
    let mut hazard = f64::INFINITY;
    for (d, e) in in_lane {
        if nearest.is_none_or(|(best, b)| d < best || (d == best && e.id < b.id)) {
            nearest = Some((d, e));
        }
        if d <= lookahead_m {
            hazard = hazard.min(e.speed_mps);
        }
    }
    let (d, leader) = nearest.ok_or(PerceptionError::NoLeaderAhead)?;
    Ok(EffectiveLeader {
        leader_id: leader.id,
        gap_m: d - leader.length_m,
        approach_rate_mps: ego.speed_mps - leader.speed_mps.min(hazard),
    })
}

/// Builds the view each driver acts on during a step.
pub trait Perceive: Sync {
    fn view<'h>(&self, ego: &VehicleState, history: &'h History) -> SnapshotView<'h>;

    /// Downstream hazard lookahead for a class; zero disables it.
    fn lookahead_m(&self, class: VehicleClass) -> f64;
}

/// The per-class perception models of a scenario. Latency is capped at the
/// history that exists, which only matters during the first steps.
#[derive(Debug, Clone)]
pub struct ClassPerceiver {
    pub models: PerClass<ClassPerception>,
    pub plan: DeploymentPlan,
    pub seed: u64,
}

impl Perceive for ClassPerceiver {
    fn view<'h>(&self, ego: &VehicleState, history: &'h History) -> SnapshotView<'h> {
        let model = &self.models[ego.class];
        let lag = model.primary().latency_steps.min(history.depth() as u32).max(1);
        let frame = history.lagged(lag).expect("lag is capped at history depth");
        match model.source {
            SensorSource::Onboard => SnapshotView::local(frame, ego.id, &model.onboard, lag, self.seed),
            SensorSource::Roadside => SnapshotView::roadside(frame, ego.id, model, &self.plan, lag, self.seed),
        }
    }

    fn lookahead_m(&self, class: VehicleClass) -> f64 {
        self.models[class].lookahead_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::RoadGeometry;

    fn geometry(lanes: u8) -> RoadGeometry {
        RoadGeometry {
            length_m: 1000.0,
            lanes_per_direction: lanes,
            directions: 1,
        }
    }

    fn vehicle(id: u32, lane: u8, position_m: f64, speed_mps: f64) -> VehicleState {
        VehicleState {
            id,
            class: VehicleClass::Rv,
            direction: 0,
            lane,
            position_m,
            speed_mps,
            accel_mps2: 0.0,
            length_m: 5.0,
            cooldown_steps: 0,
        }
    }

    fn world(vehicles: Vec<VehicleState>) -> World {
        World {
            geometry: geometry(2),
            step: 7,
            vehicles,
        }
    }

    #[test]
    fn deployment_density_matches_long_road() {
        let long = RoadGeometry {
            length_m: 10_000.0,
            lanes_per_direction: 2,
            directions: 2,
        };
        let plan = deploy_roadside(&long, 400.0, 200.0);
        assert_eq!(plan.unit_positions_m.len(), 25);
        assert_eq!(plan.units_per_km_per_direction, 2.5);
        assert_eq!(plan.placed_units_per_km_per_direction, 2.5);
        assert_eq!(plan.units_per_km_all_directions(), 5.0);
    }

    #[test]
    fn one_km_ring_rounds_half_to_even() {
        let plan = deploy_roadside(&geometry(2), 400.0, 100.0);
        assert_eq!(plan.unit_positions_m, vec![0.0, 500.0]);
        assert_eq!(plan.spacing_m, 500.0);
        assert_eq!(plan.units_per_km_per_direction, 2.5);
        assert_eq!(plan.coverage_fraction(), 0.4);
        assert!(plan.covers(990.0));
        assert!(!plan.covers(250.0));
        let tangent = deploy_roadside(&geometry(2), 400.0, 250.0);
        assert_eq!(tangent.coverage_fraction(), 1.0);
        let single = deploy_roadside(&geometry(1), 5000.0, 10.0);
        assert_eq!(single.unit_positions_m, vec![0.0]);
    }

    #[test]
    fn noiseless_local_matches_truth() {
        let w = world(vec![
            vehicle(0, 0, 100.0, 10.0),
            vehicle(1, 0, 150.0, 12.0),
            vehicle(2, 1, 80.0, 9.0),
            vehicle(3, 0, 400.0, 20.0),
        ]);
        let settings = PerceptionSettings::onboard(100.0, 0.0, 0.0);
        let snap = perceive_local(&w.vehicles[0], &w, &settings, 1);
        let ids: Vec<u32> = snap.entries.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1, 2]);
        let e1 = snap.get(1).unwrap();
        assert_eq!((e1.position_m, e1.speed_mps), (150.0, 12.0));
        assert!((e1.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn range_cutoff_is_inclusive() {
        let w = world(vec![
            vehicle(0, 0, 0.0, 10.0),
            vehicle(1, 0, 100.0, 10.0),
            vehicle(2, 1, 900.0 - 1e-9, 10.0),
        ]);
        let settings = PerceptionSettings::onboard(100.0, 0.0, 0.0);
        let snap = perceive_local(&w.vehicles[0], &w, &settings, 1);
        let ids: Vec<u32> = snap.entries.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn confidence_floor_drops_far_entries() {
        let w = world(vec![
            vehicle(0, 0, 0.0, 10.0),
            vehicle(1, 0, 30.0, 10.0),
            vehicle(2, 0, 80.0, 10.0),
        ]);
        let mut settings = PerceptionSettings::onboard(100.0, 0.0, 0.0);
        settings.confidence_floor = 0.5;
        let snap = perceive_local(&w.vehicles[0], &w, &settings, 1);
        assert_eq!(snap.entries.len(), 1);
        assert!(snap.entries.iter().all(|e| e.confidence >= 0.5));
    }

    #[test]
    fn roadside_latency_reads_old_frames() {
        let frames: Vec<World> = (0..4)
            .map(|k| {
                let mut w = world(vec![
                    vehicle(0, 0, 0.0, 10.0),
                    vehicle(1, 0, 300.0, 5.0 + k as f64),
                    vehicle(2, 1, 700.0, 1.0 + k as f64),
                ]);
                w.step = k;
                w
            })
            .collect();
        let history = History::from_worlds(frames, 4);
        let mut model = ClassPerception::for_class(VehicleClass::Gv).noiseless();
        let plan = deploy_roadside(&geometry(2), 400.0, 250.0);

        model.roadside.latency_steps = 1;
        let snap = perceive_roadside(&history.newest().world.vehicles[0], &history, &plan, &model, 3).unwrap();
        assert_eq!(snap.entries.len(), 2);
        assert_eq!(snap.get(1).unwrap().speed_mps, 8.0);

        model.roadside.latency_steps = 3;
        let snap = perceive_roadside(&history.newest().world.vehicles[0], &history, &plan, &model, 3).unwrap();
        // world steps 3,2,1,0 newest first: latency 3 -> step 1
        assert_eq!(snap.get(1).unwrap().speed_mps, 6.0);
        assert_eq!(snap.get(2).unwrap().speed_mps, 2.0);
        assert!(snap.entries.iter().all(|e| e.confidence == 0.95));

        model.roadside.latency_steps = 5;
        assert!(matches!(
            perceive_roadside(&history.newest().world.vehicles[0], &history, &plan, &model, 3),
            Err(PerceptionError::HistoryTooShallow { depth: 4, latency: 5 })
        ));
    }

    #[test]
    fn partial_coverage_falls_back_to_onboard() {
        let w = world(vec![
            vehicle(0, 0, 200.0, 10.0),
            vehicle(1, 0, 250.0, 10.0),
            vehicle(2, 0, 350.0, 10.0),
            vehicle(3, 0, 480.0, 10.0),
        ]);
        let history = History::new(w, 2);
        let plan = deploy_roadside(&geometry(2), 500.0, 100.0);
        let mut model = ClassPerception::for_class(VehicleClass::Gv).noiseless();
        model.roadside.latency_steps = 1;
        let snap = perceive_roadside(&history.newest().world.vehicles[0], &history, &plan, &model, 0).unwrap();
        // 1: onboard, 2: uncovered and out of onboard range, 3: covered by unit at 500
        let ids: Vec<u32> = snap.entries.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1, 3]);
        assert_eq!(snap.get(3).unwrap().confidence, 0.95);
        assert!((snap.get(1).unwrap().confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn effective_leader_sees_downstream_stop() {
        let ego = vehicle(0, 0, 0.0, 20.0);
        let snap = PerceptionSnapshot {
            observer_id: 0,
            snapshot_lag_steps: 1,
            ring_length_m: 1000.0,
            forward_horizon_m: 1000.0,
            entries: vec![
                PerceivedVehicle {
                    id: 1,
                    class: VehicleClass::Rv,
                    lane: 0,
                    position_m: 60.0,
                    speed_mps: 18.0,
                    length_m: 5.0,
                    confidence: 1.0,
                },
                PerceivedVehicle {
                    id: 2,
                    class: VehicleClass::Rv,
                    lane: 0,
                    position_m: 180.0,
                    speed_mps: 0.0,
                    length_m: 5.0,
                    confidence: 1.0,
                },
                PerceivedVehicle {
                    id: 3,
                    class: VehicleClass::Rv,
                    lane: 1,
                    position_m: 30.0,
                    speed_mps: 0.0,
                    length_m: 5.0,
                    confidence: 1.0,
                },
            ],
        };
        let hazard = gv_effective_leader(&snap, &ego, 200.0).unwrap();
        assert_eq!(hazard.leader_id, 1);
        assert_eq!(hazard.gap_m, 55.0);
        assert_eq!(hazard.approach_rate_mps, 20.0);
        let plain = gv_effective_leader(&snap, &ego, 0.0).unwrap();
        assert_eq!(plain.approach_rate_mps, 2.0);
        assert_eq!(plain.gap_m, 55.0);

        let mut lonely = snap.clone();
        lonely.entries.retain(|e| e.lane == 1);
        assert_eq!(
            gv_effective_leader(&lonely, &ego, 200.0),
            Err(PerceptionError::NoLeaderAhead)
        );
    }

    #[test]
    fn view_queries_wrap_around_ring() {
        let w = world(vec![
            vehicle(0, 0, 990.0, 10.0),
            vehicle(1, 0, 10.0, 8.0),
            vehicle(2, 0, 900.0, 12.0),
        ]);
        let frame = Frame::new(w);
        let settings = PerceptionSettings::onboard(1000.0, 0.0, 0.0);
        let view = SnapshotView::local(&frame, 0, &settings, 1, 0);
        let leader = view.leader(0).unwrap();
        assert_eq!(leader.perceived.id, 1);
        assert!((view.offset_ahead(&leader) - 20.0).abs() < 1e-9);
        let follower = view.follower(0).unwrap();
        assert_eq!(follower.perceived.id, 2);
        assert!((view.offset_behind(&follower) - 90.0).abs() < 1e-9);
        assert!((view.offset_between(&follower, &leader) - 110.0).abs() < 1e-9);
        assert_eq!(view.hazard_speed(0, 50.0), Some(8.0));
        assert_eq!(view.leader(1), None);
    }

    #[test]
    fn limited_range_never_wraps_a_follower_into_a_leader() {
        let w = world(vec![vehicle(0, 0, 500.0, 10.0), vehicle(1, 0, 450.0, 10.0)]);
        let frame = Frame::new(w);
        let settings = PerceptionSettings::onboard(100.0, 0.0, 0.0);
        let view = SnapshotView::local(&frame, 0, &settings, 1, 0);
        assert!(view.leader(0).is_none());
        assert_eq!(view.follower(0).unwrap().perceived.id, 1);
    }
}
