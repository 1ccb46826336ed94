mod common;

use common::*;
use smartroad_core::perception::{
    deploy_roadside, perceive_local, perceive_roadside, ClassPerception, History, PerceptionSettings, SensingRange,
};
use smartroad_core::{VehicleClass, World};

fn crowd() -> World {
    let vehicles = (0..52)
        .map(|k| vehicle(k, VehicleClass::Av, (k % 2) as u8, k as f64 * 9.5, 10.0 + 0.1 * k as f64))
        .collect();
    world(1000.0, 2, vehicles)
}

fn signed_offset(d: f64, ring: f64) -> f64 {
    if d > ring / 2.0 {
        d - ring
    } else if d < -ring / 2.0 {
        d + ring
    } else {
        d
    }
}

#[test]
fn measurement_noise_has_the_configured_spread() {
    let settings = PerceptionSettings::onboard(600.0, 0.5, 0.3);
    let mut w = crowd();
    let ring = w.ring_length();
    let (mut dp, mut dv) = (Vec::new(), Vec::new());
    let mut t = 0;
    while dp.len() < 100_000 {
        w.step = t;
        let ego = w.vehicles[0];
        let snap = perceive_local(&ego, &w, &settings, 99);
        for e in &snap.entries {
            let truth = w.vehicle(e.id);
            dp.push(signed_offset(e.position_m - truth.position_m, ring));
            dv.push(e.speed_mps - truth.speed_mps);
        }
        t += 1;
    }
    for (draws, sigma) in [(&dp, 0.5), (&dv, 0.3)] {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / sigma - 1.0).abs() < 0.02, "sd {sd} vs {sigma}");
        assert!(mean.abs() < 4.0 * sigma / n.sqrt(), "mean {mean}");
    }
}

#[test]
fn noise_is_reproducible_per_seed() {
    let w = crowd();
    let settings = PerceptionSettings::onboard(100.0, 0.5, 0.5);
    let a = perceive_local(&w.vehicles[3], &w, &settings, 5);
    let b = perceive_local(&w.vehicles[3], &w, &settings, 5);
    let c = perceive_local(&w.vehicles[3], &w, &settings, 6);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn noiseless_local_and_roadside_agree() {
    let w = crowd();
    let local = PerceptionSettings::onboard(200.0, 0.0, 0.0);
    let mut model = ClassPerception::for_class(VehicleClass::Gv).noiseless();
    model.roadside.latency_steps = 1;
    let plan = deploy_roadside(&w.geometry, 400.0, 250.0);
    let history = History::new(w.clone(), 2);
    for ego in [0, 17, 51] {
        let ego = w.vehicles[ego];
        let a = perceive_local(&ego, &w, &local, 1);
        let b = perceive_roadside(&ego, &history, &plan, &model, 1).unwrap();
        assert_eq!(b.entries.len(), w.vehicles.len() - 1);
        for e in &a.entries {
            let f = b.get(e.id).expect("roadside sees everything");
            assert_eq!((e.position_m, e.speed_mps, e.lane), (f.position_m, f.speed_mps, f.lane));
        }
    }
}

#[test]
fn roadside_reads_the_lagged_frame() {
    let mut worlds = Vec::new();
    let mut w = crowd();
    for s in 0..6 {
        w.step = s;
        for v in &mut w.vehicles {
            v.speed_mps = s as f64 + v.id as f64 * 0.01;
        }
        worlds.push(w.clone());
    }
    let history = History::from_worlds(worlds.clone(), 6);
    let mut model = ClassPerception::for_class(VehicleClass::Gv).noiseless();
    model.roadside.latency_steps = 3;
    model.roadside.range_m = SensingRange::SEGMENT_WIDE;
    let plan = deploy_roadside(&w.geometry, 400.0, 250.0);
    let snap = perceive_roadside(&w.vehicles[0], &history, &plan, &model, 3).unwrap();
    assert_eq!(snap.snapshot_lag_steps, 3);
    // latency 1 is the newest frame, so latency 3 is two frames older
    let old = &worlds[worlds.len() - 3];
    for e in &snap.entries {
        assert_eq!(e.speed_mps, old.vehicle(e.id).speed_mps);
    }
}
