//! Mixed-autonomy ring-road traffic simulation with roadside-assisted
//! perception, safety and throughput metrics, parameter sweeps and a
//! cost-benefit model for smart-road deployment.

pub mod cba;
pub mod config;
pub mod dynamics;
pub mod experiments;
pub mod metrics;
pub mod perception;
pub mod rng;
pub mod scenario;
pub mod simulation;
pub mod stats;
pub mod svg;

pub use metrics::{run_with_metrics, MetricsRecord, SimTrace};
pub use scenario::{build_scenario, PerClass, ScenarioConfig, ScenarioError, VehicleClass, VehicleState, World};
pub use simulation::{RunSummary, SimError, Simulation};
