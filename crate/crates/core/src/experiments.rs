//! Replicated parameter sweeps over fleet size and guided-vehicle share.
//!
//! Every cell derives its own seed from the master seed and its coordinates,
//! so a cell run on its own reproduces its row from a full sweep, and the
//! order or parallelism of execution never changes the table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{fmt_opt, run_with_metrics, MetricsRecord};
use crate::rng::{derive_seed, Purpose};
use crate::scenario::{PerClass, ScenarioConfig, ScenarioError, VehicleClass};
use crate::simulation::SimError;
use crate::stats;
use crate::svg::{line_chart, Axis, Series};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{vehicles} vehicles: {source}")]
    Infeasible {
        vehicles: u32,
        #[source]
        source: ScenarioError,
    },
    #[error("invalid sweep setting `{field}`: {reason}")]
    InvalidSweep { field: String, reason: String },
    #[error("cell {cell}: {source}")]
    Simulation {
        cell: String,
        #[source]
        source: SimError,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Density,
    Penetration,
}

impl SweepKind {
    pub fn label(self) -> &'static str {
        match self {
            SweepKind::Density => "density",
            SweepKind::Penetration => "penetration",
        }
    }

    fn code(self) -> u64 {
        match self {
            SweepKind::Density => 1,
            SweepKind::Penetration => 2,
        }
    }
}

/// Grid settings shared by both sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub vehicle_counts: Vec<u32>,
    pub penetrations: Vec<f64>,
    /// Fleet sizes of the penetration sweep.
    pub penetration_counts: Vec<u32>,
    pub replications: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            vehicle_counts: vec![100, 200, 300, 400, 500, 600],
            penetrations: (0..=10).map(|k| k as f64 / 10.0).collect(),
            penetration_counts: vec![100, 200, 300, 400, 500, 600],
            replications: 5,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |field: &str, reason: &str| ExperimentError::InvalidSweep {
            field: field.into(),
            reason: reason.into(),
        };
        if self.replications == 0 {
            return Err(bad("replications", "must be at least 1"));
        }
        if self.vehicle_counts.is_empty() {
            return Err(bad("vehicle_counts", "must not be empty"));
        }
        if self.penetration_counts.is_empty() {
            return Err(bad("penetration_counts", "must not be empty"));
        }
        if self.penetrations.is_empty() {
            return Err(bad("penetrations", "must not be empty"));
        }
        if self.penetrations.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(bad("penetrations", "every share must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Coordinates of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub kind: SweepKind,
    pub vehicle_count: u32,
    pub gv_share: f64,
    pub replication: u32,
}

impl Cell {
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(
            master,
            &[
                Purpose::ExperimentCell as u64,
                self.kind.code(),
                self.vehicle_count as u64,
                self.gv_share.to_bits(),
                self.replication as u64,
            ],
        )
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} n={} gv={} rep={}",
            self.kind.label(),
            self.vehicle_count,
            self.gv_share,
            self.replication
        )
    }
}

/// Class shares with `gv` guided vehicles and the rest split between regular
/// and autonomous vehicles in the base ratio.
pub fn penetration_shares(base: &PerClass<f64>, gv: f64) -> PerClass<f64> {
    let rest = 1.0 - gv;
    let others = base.rv + base.av;
    let rv = if others > 0.0 { rest * base.rv / others } else { rest };
    PerClass {
        rv,
        av: rest - rv,
        gv,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub cell: Cell,
    pub seed: u64,
    pub shares: PerClass<f64>,
    pub trace_hash: String,
    pub record: MetricsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub kind: SweepKind,
    pub vehicle_count: u32,
    pub gv_share: f64,
    pub replications: u32,
    pub shares: PerClass<f64>,
    /// `(column, mean, sample std)` over the replications that have a value.
    pub columns: Vec<(String, Option<f64>, Option<f64>)>,
    /// Rank correlation of fleet mean speed with GV share at this fleet
    /// size; penetration sweeps only.
    pub speed_penetration_spearman: Option<f64>,
}

impl AggregateRow {
    pub fn mean(&self, column: &str) -> Option<f64> {
        self.columns.iter().find(|c| c.0 == column).and_then(|c| c.1)
    }

    pub fn std(&self, column: &str) -> Option<f64> {
        self.columns.iter().find(|c| c.0 == column).and_then(|c| c.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub master_seed: u64,
    pub runs: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn scenario_for(base: &ScenarioConfig, cell: &Cell, master: u64) -> ScenarioConfig {
    let mut config = base.clone();
    config.total_vehicles = cell.vehicle_count;
    config.seed = cell.seed(master);
    if cell.kind == SweepKind::Penetration {
        config.class_shares = penetration_shares(&base.class_shares, cell.gv_share);
    }
    config
}

/// Runs a single cell exactly as a sweep would.
pub fn run_cell(base: &ScenarioConfig, cell: Cell) -> Result<RunRow, ExperimentError> {
    let config = scenario_for(base, &cell, base.seed);
    let (summary, record) = run_with_metrics(&config).map_err(|source| match source {
        SimError::Scenario(source) => ExperimentError::Infeasible {
            vehicles: cell.vehicle_count,
            source,
        },
        source => ExperimentError::Simulation {
            cell: cell.to_string(),
            source,
        },
    })?;
    Ok(RunRow {
        cell,
        seed: config.seed,
        shares: config.class_shares,
        trace_hash: summary.trace_hash,
        record,
    })
}

fn check_cells(base: &ScenarioConfig, cells: &[Cell]) -> Result<(), ExperimentError> {
    for cell in cells {
        let config = scenario_for(base, cell, base.seed);
        config
            .validate()
            .and_then(|_| config.check_feasible())
            .map_err(|source| ExperimentError::Infeasible {
                vehicles: cell.vehicle_count,
                source,
            })?;
    }
    Ok(())
}

fn run_cells(base: &ScenarioConfig, cells: &[Cell], parallel: usize) -> Result<Vec<RunRow>, ExperimentError> {
    check_cells(base, cells)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    pool.install(|| cells.par_iter().map(|&c| run_cell(base, c)).collect())
}

fn aggregate(kind: SweepKind, runs: &[RunRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut start = 0;
    while start < runs.len() {
        let head = runs[start].cell;
        let end = start
            + runs[start..]
                .iter()
                .take_while(|r| r.cell.vehicle_count == head.vehicle_count && r.cell.gv_share == head.gv_share)
                .count();
        let group = &runs[start..end];
        let names: Vec<String> = group[0].record.metric_columns().into_iter().map(|c| c.0).collect();
        let columns = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let values: Vec<f64> = group
                    .iter()
                    .filter_map(|r| r.record.metric_columns()[k].1)
                    .collect();
                (name.clone(), stats::mean(&values), stats::std_dev(&values))
            })
            .collect();
        out.push(AggregateRow {
            kind,
            vehicle_count: head.vehicle_count,
            gv_share: head.gv_share,
            replications: group.len() as u32,
            shares: group[0].shares,
            columns,
            speed_penetration_spearman: None,
        });
        start = end;
    }
    if kind == SweepKind::Penetration {
        let counts: Vec<u32> = out.iter().map(|a| a.vehicle_count).collect();
        for n in counts {
            let (xs, ys): (Vec<f64>, Vec<f64>) = out
                .iter()
                .filter(|a| a.vehicle_count == n)
                .filter_map(|a| a.mean("mean_speed_mps").map(|v| (a.gv_share, v)))
                .unzip();
            let rho = stats::spearman(&xs, &ys);
            for a in out.iter_mut().filter(|a| a.vehicle_count == n) {
                a.speed_penetration_spearman = rho;
            }
        }
    }
    out
}

/// Fleet-size sweep at the base class mix.
pub fn density_sweep(
    base: &ScenarioConfig,
    vehicle_counts: &[u32],
    replications: u32,
    parallel: usize,
) -> Result<SweepTable, ExperimentError> {
    let cells: Vec<Cell> = vehicle_counts
        .iter()
        .flat_map(|&n| {
            (0..replications).map(move |r| Cell {
                kind: SweepKind::Density,
                vehicle_count: n,
                gv_share: base.class_shares.gv,
                replication: r,
            })
        })
        .collect();
    let runs = run_cells(base, &cells, parallel)?;
    Ok(SweepTable {
        kind: SweepKind::Density,
        master_seed: base.seed,
        aggregates: aggregate(SweepKind::Density, &runs),
        runs,
    })
}

/// GV-share sweep at each of the given fleet sizes.
pub fn penetration_sweep(
    base: &ScenarioConfig,
    penetrations: &[f64],
    vehicle_counts: &[u32],
    replications: u32,
    parallel: usize,
) -> Result<SweepTable, ExperimentError> {
    if let Some(p) = penetrations.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ExperimentError::InvalidSweep {
            field: "penetrations".into(),
            reason: format!("{p} is outside [0, 1]"),
        });
    }
    let cells: Vec<Cell> = vehicle_counts
        .iter()
        .flat_map(|&n| {
            penetrations.iter().flat_map(move |&p| {
                (0..replications).map(move |r| Cell {
                    kind: SweepKind::Penetration,
                    vehicle_count: n,
                    gv_share: p,
                    replication: r,
                })
            })
        })
        .collect();
    let runs = run_cells(base, &cells, parallel)?;
    Ok(SweepTable {
        kind: SweepKind::Penetration,
        master_seed: base.seed,
        aggregates: aggregate(SweepKind::Penetration, &runs),
        runs,
    })
}

impl SweepTable {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "row_type",
            "sweep",
            "vehicle_count",
            "gv_share",
            "replication",
            "replications",
            "seed",
            "share_rv",
            "share_av",
            "share_gv",
            "schema_version",
            "window_first_step",
            "window_last_step",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let names: Vec<String> = self
            .runs
            .first()
            .map(|r| r.record.metric_columns().into_iter().map(|c| c.0).collect())
            .unwrap_or_default();
        h.extend(names.iter().cloned());
        h.extend(names.iter().map(|n| format!("{n}_std")));
        h.push("spearman_speed_vs_gv_share".into());
        h.push("trace_hash".into());
        h
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header = self.csv_header();
        let width = header.len();
        w.write_record(&header).expect("in-memory write");
        for r in &self.runs {
            let metrics = r.record.metric_columns();
            let mut row = vec![
                "run".to_string(),
                self.kind.label().into(),
                r.cell.vehicle_count.to_string(),
                r.cell.gv_share.to_string(),
                r.cell.replication.to_string(),
                String::new(),
                r.seed.to_string(),
                r.shares.rv.to_string(),
                r.shares.av.to_string(),
                r.shares.gv.to_string(),
                crate::metrics::METRICS_SCHEMA_VERSION.to_string(),
                r.record.window.first_step.to_string(),
                r.record.window.last_step.to_string(),
            ];
            row.extend(metrics.iter().map(|c| fmt_opt(c.1)));
            row.extend(metrics.iter().map(|_| String::new()));
            row.push(String::new());
            row.push(r.trace_hash.clone());
            debug_assert_eq!(row.len(), width);
            w.write_record(&row).expect("in-memory write");
        }
        let window = self.runs.first().map(|r| r.record.window);
        for a in &self.aggregates {
            let mut row = vec![
                "aggregate".to_string(),
                self.kind.label().into(),
                a.vehicle_count.to_string(),
                a.gv_share.to_string(),
                String::new(),
                a.replications.to_string(),
                String::new(),
                a.shares.rv.to_string(),
                a.shares.av.to_string(),
                a.shares.gv.to_string(),
                crate::metrics::METRICS_SCHEMA_VERSION.to_string(),
                window.map(|w| w.first_step.to_string()).unwrap_or_default(),
                window.map(|w| w.last_step.to_string()).unwrap_or_default(),
            ];
            row.extend(a.columns.iter().map(|c| fmt_opt(c.1)));
            row.extend(a.columns.iter().map(|c| fmt_opt(c.2)));
            row.push(fmt_opt(a.speed_penetration_spearman));
            row.push(String::new());
            debug_assert_eq!(row.len(), width);
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    /// Line charts for this sweep as `(file name, svg)` pairs.
    pub fn charts(&self) -> Vec<(String, String)> {
        match self.kind {
            SweepKind::Density => {
                let ttc: Vec<(Series, Axis)> = VehicleClass::ALL
                    .iter()
                    .map(|c| {
                        let col = format!("ttc_mean_s_{}", c.label().to_lowercase());
                        let points = self
                            .aggregates
                            .iter()
                            .filter_map(|a| a.mean(&col).map(|m| (a.vehicle_count as f64, m)))
                            .collect();
                        (
                            Series {
                                name: c.label().into(),
                                points,
                            },
                            Axis::Left,
                        )
                    })
                    .collect();
                let speed = vec![(
                    Series {
                        name: "fleet".into(),
                        points: self
                            .aggregates
                            .iter()
                            .filter_map(|a| a.mean("mean_speed_mps").map(|m| (a.vehicle_count as f64, m)))
                            .collect(),
                    },
                    Axis::Left,
                )];
                vec![
                    (
                        "ttc_vs_count.svg".into(),
                        line_chart("Mean TTC by class", "vehicles on ring", "mean TTC (s)", None, &ttc),
                    ),
                    (
                        "speed_vs_count.svg".into(),
                        line_chart("Fleet mean speed", "vehicles on ring", "mean speed (m/s)", None, &speed),
                    ),
                ]
            }
            SweepKind::Penetration => {
                let mut counts: Vec<u32> = self.aggregates.iter().map(|a| a.vehicle_count).collect();
                counts.dedup();
                let series: Vec<(Series, Axis)> = counts
                    .iter()
                    .map(|&n| {
                        (
                            Series {
                                name: format!("{n} vehicles"),
                                points: self
                                    .aggregates
                                    .iter()
                                    .filter(|a| a.vehicle_count == n)
                                    .filter_map(|a| a.mean("mean_speed_mps").map(|m| (a.gv_share, m)))
                                    .collect(),
                            },
                            Axis::Left,
                        )
                    })
                    .collect();
                vec![(
                    "speed_vs_penetration.svg".into(),
                    line_chart(
                        "Fleet mean speed by GV share",
                        "GV share",
                        "mean speed (m/s)",
                        None,
                        &series,
                    ),
                )]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig {
            steps: 60,
            warmup_steps: 10,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn shares_keep_base_ratio() {
        let base = PerClass {
            rv: 0.6,
            av: 0.2,
            gv: 0.2,
        };
        let s = penetration_shares(&base, 0.2);
        assert!((s.rv - 0.6).abs() < 1e-12 && (s.av - 0.2).abs() < 1e-12);
        let s = penetration_shares(&base, 1.0);
        assert_eq!((s.rv, s.av, s.gv), (0.0, 0.0, 1.0));
        let s = penetration_shares(&base, 0.0);
        assert!((s.rv - 0.75).abs() < 1e-12 && (s.av - 0.25).abs() < 1e-12);
    }

    #[test]
    fn table_shape_and_aggregates() {
        let t = density_sweep(&tiny(), &[20, 40], 3, 1).unwrap();
        assert_eq!(t.runs.len(), 6);
        assert_eq!(t.aggregates.len(), 2);
        let speeds: Vec<f64> = t.runs[..3].iter().map(|r| r.record.mean_speed_mps).collect();
        assert_eq!(t.aggregates[0].mean("mean_speed_mps"), stats::mean(&speeds));
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 1 + 6 + 2);
    }

    #[test]
    fn cell_in_isolation_matches_sweep() {
        let base = tiny();
        let t = penetration_sweep(&base, &[0.0, 1.0], &[30], 2, 2).unwrap();
        let again = run_cell(&base, t.runs[3].cell).unwrap();
        assert_eq!(again, t.runs[3]);
        assert_eq!(t.runs[3].shares.gv, 1.0);
    }

    #[test]
    fn infeasible_count_is_reported() {
        let err = density_sweep(&tiny(), &[100, 600], 1, 1).unwrap_err();
        assert!(matches!(err, ExperimentError::Infeasible { vehicles: 600, .. }));
    }
}
