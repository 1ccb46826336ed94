//! Drives the step function over a whole run and hashes the trace.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{step, DynamicsError, SafetyEvent, SafetyEventKind, StepParams};
use crate::perception::{deploy_roadside, ClassPerceiver, History};
use crate::scenario::{build_scenario, ScenarioConfig, ScenarioError, World};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{error}")]
    Invariant {
        error: DynamicsError,
        /// Last world that satisfied every invariant.
        last_good: Box<World>,
    },
}

/// Receives every world of a run, starting with the initial one.
pub trait StepObserver {
    fn on_world(&mut self, world: &World, events: &[SafetyEvent]);
}

impl<O: StepObserver + ?Sized> StepObserver for &mut O {
    fn on_world(&mut self, world: &World, events: &[SafetyEvent]) {
        (**self).on_world(world, events)
    }
}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn on_world(&mut self, world: &World, events: &[SafetyEvent]) {
        self.0.on_world(world, events);
        self.1.on_world(world, events);
    }
}

impl StepObserver for () {
    fn on_world(&mut self, _: &World, _: &[SafetyEvent]) {}
}

/// SHA-256 over the canonical byte encoding of every world and event.
#[derive(Debug, Clone, Default)]
pub struct TraceHasher {
    hasher: Sha256,
}

impl TraceHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

impl StepObserver for TraceHasher {
    fn on_world(&mut self, world: &World, events: &[SafetyEvent]) {
        let h = &mut self.hasher;
        h.update(world.step.to_le_bytes());
        h.update((world.vehicles.len() as u64).to_le_bytes());
        for v in &world.vehicles {
            h.update(v.id.to_le_bytes());
            h.update([v.class.code(), v.direction, v.lane]);
            h.update(v.position_m.to_bits().to_le_bytes());
            h.update(v.speed_mps.to_bits().to_le_bytes());
            h.update(v.accel_mps2.to_bits().to_le_bytes());
            h.update(v.length_m.to_bits().to_le_bytes());
            h.update(v.cooldown_steps.to_le_bytes());
        }
        h.update((events.len() as u64).to_le_bytes());
        for e in events {
            h.update(e.time_step.to_le_bytes());
            h.update(e.follower_id.to_le_bytes());
            h.update(e.leader_id.to_le_bytes());
            h.update([match e.kind {
                SafetyEventKind::EmergencyBrake => 0u8,
                SafetyEventKind::ContactPrevented => 1u8,
            }]);
        }
    }
}

/// Totals over a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub trace_hash: String,
    pub steps: u64,
    pub contact_events: u64,
    pub emergency_events: u64,
    pub final_world: World,
}

/// One running simulation.
#[derive(Debug)]
pub struct Simulation {
    config: ScenarioConfig,
    perceiver: ClassPerceiver,
    history: History,
    vehicles: usize,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        let world = build_scenario(config)?;
        Self::from_world(config, world)
    }

    /// Starts from a given world instead of the built scenario.
    pub fn from_world(config: &ScenarioConfig, world: World) -> Result<Self, ScenarioError> {
        config.validate()?;
        let perceiver = ClassPerceiver {
            models: config.perception,
            plan: deploy_roadside(
                &world.geometry,
                config.roadside.spacing_m,
                config.roadside.sensing_radius_m,
            ),
            seed: config.seed,
        };
        let depth = config
            .perception
            .iter()
            .map(|(_, m)| m.primary().latency_steps as usize)
            .max()
            .unwrap_or(1);
        Ok(Simulation {
            config: config.clone(),
            perceiver,
            vehicles: world.vehicles.len(),
            history: History::new(world, depth),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.history.newest().world
    }

    pub fn perceiver(&self) -> &ClassPerceiver {
        &self.perceiver
    }

    /// Advances one step and returns the events it produced.
    pub fn advance(&mut self) -> Result<Vec<SafetyEvent>, DynamicsError> {
        let params = StepParams {
            driver: &self.config.driver,
            dt_s: self.config.dt_s,
            cooldown_steps: self.config.cooldown_steps(),
        };
        let out = step(&self.history, &self.perceiver, &params)?;
        debug_assert_eq!(out.world.vehicles.len(), self.vehicles);
        self.history.push(out.world);
        Ok(out.events)
    }

    /// Runs the configured number of steps, feeding every world to `observer`.
    pub fn run<O: StepObserver>(mut self, mut observer: O) -> Result<RunSummary, SimError> {
        let mut hasher = TraceHasher::new();
        hasher.on_world(self.world(), &[]);
        observer.on_world(self.world(), &[]);
        let (mut contacts, mut emergencies) = (0u64, 0u64);
        for _ in 0..self.config.steps {
            let events = self.advance().map_err(|error| SimError::Invariant {
                error,
                last_good: Box::new(self.world().clone()),
            })?;
            for e in &events {
                match e.kind {
                    SafetyEventKind::ContactPrevented => contacts += 1,
                    SafetyEventKind::EmergencyBrake => emergencies += 1,
                }
            }
            hasher.on_world(self.world(), &events);
            observer.on_world(self.world(), &events);
        }
        Ok(RunSummary {
            trace_hash: hasher.finish(),
            steps: self.config.steps,
            contact_events: contacts,
            emergency_events: emergencies,
            final_world: self.world().clone(),
        })
    }
}
