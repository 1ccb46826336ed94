//! `smartroad`: run simulations, sweeps and the cost-benefit ledger from a
//! TOML config and write CSV/SVG reports plus a JSON manifest.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 infeasible
//! scenario, 4 internal invariant breach (a dump is written to the output
//! directory).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use smartroad_core::cba::run_cba;
use smartroad_core::config::{validate_cba, validate_scenario, validate_sweep, ConfigError, ProjectConfig};
use smartroad_core::dynamics::{SafetyEvent, SafetyEventKind};
use smartroad_core::experiments::{density_sweep, penetration_sweep, ExperimentError, SweepTable};
use smartroad_core::metrics::{MetricsAccumulator, METRICS_SCHEMA_VERSION};
use smartroad_core::simulation::StepObserver;
use smartroad_core::{ScenarioError, SimError, Simulation, VehicleClass, World};

#[derive(Parser)]
#[command(name = "smartroad", version, about = "Mixed-autonomy ring-road simulation and smart-highway cost-benefit reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Simulate(Common),
    /// Run a replicated sweep over fleet size or GV share.
    Sweep {
        kind: KindArg,
        #[command(flatten)]
        common: Common,
        /// Worker threads; never changes results.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        parallel: u32,
    },
    /// Build the regular and smart highway ledgers.
    Cba(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Density,
    Penetration,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write SVG charts (default).
    #[arg(long, overrides_with = "no_svg")]
    svg: bool,
    /// Skip SVG charts.
    #[arg(long = "no-svg", overrides_with = "svg")]
    no_svg: bool,
}

impl Common {
    fn svg_enabled(&self) -> bool {
        !self.no_svg
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure {
            code: 1,
            message: format!("cannot create {}: {e}", dir.display()),
        })?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure {
            code: 1,
            message: format!("cannot write {}: {e}", path.display()),
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, mut manifest: serde_json::Value) -> Result<(), Failure> {
        self.files.push("manifest.json".into());
        manifest["files"] = json!(self.files);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| Failure {
            code: 1,
            message: format!("cannot write {}: {e}", path.display()),
        })
    }
}

fn load(common: &Common) -> Result<(ProjectConfig, String), Failure> {
    let origin = common.config.display().to_string();
    let mut config = ProjectConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.scenario.seed = seed;
    }
    Ok((config, origin))
}

#[derive(Serialize)]
struct InvariantDump<'a> {
    error: String,
    step: u64,
    vehicles: &'a [smartroad_core::VehicleState],
}

fn invariant_failure(out: &mut Output, error: String, last_good: &World) -> Failure {
    let dump = InvariantDump {
        error: error.clone(),
        step: last_good.step,
        vehicles: &last_good.vehicles,
    };
    let text = serde_json::to_string_pretty(&dump).expect("dump serializes");
    let note = match out.write("invariant_dump.json", &text) {
        Ok(()) => format!("; last good state written to {}", out.dir.join("invariant_dump.json").display()),
        Err(f) => format!("; {}", f.message),
    };
    Failure { code: 4, message: format!("{error}{note}") }
}

fn scenario_failure(e: ScenarioError) -> Failure {
    let code = if matches!(e, ScenarioError::InfeasibleDensity { .. }) { 3 } else { 2 };
    Failure { code, message: e.to_string() }
}

/// Per-step fleet summary written alongside the metrics.
struct StepSummary {
    rows: csv::Writer<Vec<u8>>,
}

impl StepSummary {
    fn new() -> Self {
        let mut rows = csv::Writer::from_writer(Vec::new());
        rows.write_record([
            "step",
            "time_s",
            "mean_speed_mps",
            "mean_speed_mps_rv",
            "mean_speed_mps_av",
            "mean_speed_mps_gv",
            "emergency_events",
            "contact_events",
        ])
        .expect("in-memory write");
        StepSummary { rows }
    }
}

struct Summarizer {
    summary: StepSummary,
    dt_s: f64,
}

impl StepObserver for Summarizer {
    fn on_world(&mut self, world: &World, events: &[SafetyEvent]) {
        let mean = |class: Option<VehicleClass>| {
            let v: Vec<f64> = world
                .vehicles
                .iter()
                .filter(|v| class.is_none_or(|c| v.class == c))
                .map(|v| v.speed_mps)
                .collect();
            if v.is_empty() {
                String::new()
            } else {
                (v.iter().sum::<f64>() / v.len() as f64).to_string()
            }
        };
        let count = |k: SafetyEventKind| events.iter().filter(|e| e.kind == k).count().to_string();
        self.summary
            .rows
            .write_record([
                world.step.to_string(),
                (world.step as f64 * self.dt_s).to_string(),
                mean(None),
                mean(Some(VehicleClass::Rv)),
                mean(Some(VehicleClass::Av)),
                mean(Some(VehicleClass::Gv)),
                count(SafetyEventKind::EmergencyBrake),
                count(SafetyEventKind::ContactPrevented),
            ])
            .expect("in-memory write");
    }
}

fn cmd_simulate(common: &Common) -> Result<(), Failure> {
    let (config, origin) = load(common)?;
    let scenario = &config.scenario;
    validate_scenario(scenario, &origin)?;
    scenario.check_feasible().map_err(scenario_failure)?;
    let sim = Simulation::new(scenario).map_err(scenario_failure)?;
    let mut out = Output::new(&common.out)?;

    let mut metrics = MetricsAccumulator::for_config(scenario);
    let mut summarizer = Summarizer {
        summary: StepSummary::new(),
        dt_s: scenario.dt_s,
    };
    let summary = match sim.run((&mut metrics, &mut summarizer)) {
        Ok(s) => s,
        Err(SimError::Scenario(e)) => return Err(scenario_failure(e)),
        Err(SimError::Invariant { error, last_good }) => {
            return Err(invariant_failure(&mut out, error.to_string(), &last_good))
        }
    };
    let record = metrics.finish();

    let trace = String::from_utf8(summarizer.summary.rows.into_inner().expect("in-memory flush")).expect("UTF-8");
    out.write("trace_summary.csv", &trace)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["seed".to_string(), "trace_hash".into()];
    header.extend(record.csv_header());
    let mut fields = vec![scenario.seed.to_string(), summary.trace_hash.clone()];
    fields.extend(record.csv_fields());
    w.write_record(&header).expect("in-memory write");
    w.write_record(&fields).expect("in-memory write");
    out.write("metrics.csv", &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8"))?;

    println!("trace hash {}", summary.trace_hash);
    for (name, value) in record.metric_columns() {
        println!("{name:<24} {}", smartroad_core::metrics::fmt_opt(value));
    }
    out.finish(json!({
        "command": "simulate",
        "config": scenario,
        "seed": scenario.seed,
        "trace_hash": summary.trace_hash,
        "metrics_schema_version": METRICS_SCHEMA_VERSION,
    }))
}

fn cmd_sweep(kind: KindArg, common: &Common, parallel: u32) -> Result<(), Failure> {
    let (config, origin) = load(common)?;
    validate_scenario(&config.scenario, &origin)?;
    validate_sweep(&config.sweep, &origin)?;
    let mut out = Output::new(&common.out)?;
    let (base, sweep) = (&config.scenario, &config.sweep);
    let result = match kind {
        KindArg::Density => density_sweep(base, &sweep.vehicle_counts, sweep.replications, parallel as usize),
        KindArg::Penetration => penetration_sweep(
            base,
            &sweep.penetrations,
            &sweep.penetration_counts,
            sweep.replications,
            parallel as usize,
        ),
    };
    let table: SweepTable = match result {
        Ok(t) => t,
        Err(ExperimentError::Infeasible { vehicles, source }) => {
            return Err(Failure {
                code: 3,
                message: format!("{vehicles} vehicles: {source}"),
            })
        }
        Err(ExperimentError::InvalidSweep { field, reason }) => {
            return Err(Failure::config(format!("{origin}: [sweep] `{field}`: {reason}")))
        }
        Err(ExperimentError::Simulation {
            cell,
            source: SimError::Invariant { error, last_good },
        }) => return Err(invariant_failure(&mut out, format!("cell {cell}: {error}"), &last_good)),
        Err(e) => return Err(Failure { code: 1, message: e.to_string() }),
    };
    let csv_name = format!("sweep_{}.csv", table.kind.label());
    out.write(&csv_name, &table.to_csv())?;
    if common.svg_enabled() {
        for (name, svg) in table.charts() {
            out.write(&name, &svg)?;
        }
    }
    println!(
        "{} sweep: {} runs, {} aggregate rows -> {}",
        table.kind.label(),
        table.runs.len(),
        table.aggregates.len(),
        common.out.join(&csv_name).display()
    );
    out.finish(json!({
        "command": "sweep",
        "kind": table.kind.label(),
        "config": {"scenario": base, "sweep": sweep},
        "seed": base.seed,
        "metrics_schema_version": METRICS_SCHEMA_VERSION,
        "trace_hashes": table.runs.iter().map(|r| r.trace_hash.clone()).collect::<Vec<_>>(),
    }))
}

fn cmd_cba(common: &Common) -> Result<(), Failure> {
    let (config, origin) = load(common)?;
    let c = &config.cba;
    validate_cba(c, &origin)?;
    let result = run_cba(&c.profile, &c.traffic, c.horizon).map_err(Failure::config)?;
    let mut out = Output::new(&common.out)?;
    out.write("ledger_regular.csv", &result.regular.to_csv())?;
    out.write("ledger_smart.csv", &result.smart.to_csv())?;
    out.write("bcr_summary.csv", &result.summary_csv())?;
    if common.svg_enabled() {
        out.write("cost_revenue.svg", &result.chart())?;
    }
    println!("{:<8} {:>16} {:>18} {:>14} {:>16}", "highway", "total cost", "total net benefit", "BCR full", "BCR recurring");
    for (name, l) in [("regular", &result.regular), ("smart", &result.smart)] {
        println!(
            "{name:<8} {:>16.4} {:>18.4} {:>14.6} {:>16.6}",
            l.total_cost.0, l.total_net.0, l.bcr_full_cost, l.bcr_recurring_cost
        );
    }
    out.finish(json!({
        "command": "cba",
        "config": c,
        "currency_unit": "CNY 10k",
        "revenue_curve": result.revenue_curve,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(common) => cmd_simulate(common),
        Command::Sweep { kind, common, parallel } => cmd_sweep(*kind, common, *parallel),
        Command::Cba(common) => cmd_cba(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
