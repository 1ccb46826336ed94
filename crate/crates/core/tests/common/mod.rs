#![allow(dead_code)]

use smartroad_core::dynamics::{step, SafetyEvent, StepParams};
use smartroad_core::perception::{deploy_roadside, ClassPerceiver, History};
use smartroad_core::scenario::{DriverParams, RoadGeometry};
use smartroad_core::{PerClass, ScenarioConfig, VehicleClass, VehicleState, World};

pub fn vehicle(id: u32, class: VehicleClass, lane: u8, position_m: f64, speed_mps: f64) -> VehicleState {
    VehicleState {
        id,
        class,
        direction: 0,
        lane,
        position_m,
        speed_mps,
        accel_mps2: 0.0,
        length_m: 5.0,
        cooldown_steps: 0,
    }
}

/// One-direction world on a ring of `length_m` with the given lanes.
pub fn world(length_m: f64, lanes: u8, vehicles: Vec<VehicleState>) -> World {
    World {
        geometry: RoadGeometry {
            length_m,
            lanes_per_direction: lanes,
            directions: 1,
        },
        step: 0,
        vehicles,
    }
}

pub fn noiseless_perceiver(world: &World) -> ClassPerceiver {
    let config = ScenarioConfig::default();
    ClassPerceiver {
        models: config.perception.map(|_, m| m.noiseless()),
        plan: deploy_roadside(&world.geometry, 400.0, 250.0),
        seed: 11,
    }
}

pub fn driver() -> PerClass<DriverParams> {
    PerClass::from_fn(DriverParams::for_class)
}

/// Steps `world` `n` times, handing every produced world and its events to
/// `visit`, which may edit the world before it is stored.
pub fn run_steps(
    world: World,
    perceiver: &ClassPerceiver,
    driver: &PerClass<DriverParams>,
    dt_s: f64,
    n: usize,
    mut visit: impl FnMut(&World, &mut World, &[SafetyEvent]),
) -> World {
    let mut history = History::new(world, 3);
    let params = StepParams {
        driver,
        dt_s,
        cooldown_steps: 16,
    };
    for _ in 0..n {
        let mut out = step(&history, perceiver, &params).expect("step succeeds");
        visit(&history.newest().world, &mut out.world, &out.events);
        history.push(out.world);
    }
    history.newest().world.clone()
}

/// Bumper-to-bumper gap from `f` to `l` on a ring, computed from scratch.
pub fn gap(f: &VehicleState, l: &VehicleState, ring: f64) -> f64 {
    let mut d = l.position_m - f.position_m;
    while d < 0.0 {
        d += ring;
    }
    d - l.length_m
}
