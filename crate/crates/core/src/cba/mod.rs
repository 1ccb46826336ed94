//! Cost-benefit model of a highway run under the conventional toll model
//! or upgraded with roadside guidance sold as a per-kilometre fee.
//!
//! All money in the ledger is in units of 10 000 CNY ([`Cny10k`]).

pub mod fit;

use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::svg::{line_chart, Axis, Series};

pub use fit::{fit_revenue_curve, Quadratic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbaError {
    #[error("revenue fit needs at least 3 distinct flows, got {distinct_flows}")]
    DegenerateFit { distinct_flows: usize },
    #[error("benefit-cost ratio denominator is {denominator}")]
    ZeroDenominator { denominator: f64 },
    #[error("horizon {start}..={end} contains no years")]
    EmptyHorizon { start: i32, end: i32 },
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
}

/// Money in units of 10 000 CNY.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cny10k(pub f64);

impl Cny10k {
    pub fn from_cny(cny: f64) -> Self {
        Cny10k(cny / 1.0e4)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Add for Cny10k {
    type Output = Cny10k;
    fn add(self, o: Cny10k) -> Cny10k {
        Cny10k(self.0 + o.0)
    }
}

impl AddAssign for Cny10k {
    fn add_assign(&mut self, o: Cny10k) {
        self.0 += o.0;
    }
}

impl Sub for Cny10k {
    type Output = Cny10k;
    fn sub(self, o: Cny10k) -> Cny10k {
        Cny10k(self.0 - o.0)
    }
}

impl Mul<f64> for Cny10k {
    type Output = Cny10k;
    fn mul(self, k: f64) -> Cny10k {
        Cny10k(self.0 * k)
    }
}

impl Sum for Cny10k {
    fn sum<I: Iterator<Item = Cny10k>>(iter: I) -> Cny10k {
        iter.fold(Cny10k(0.0), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HighwayKind {
    Regular,
    Smart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighwayProfile {
    pub name: String,
    pub length_km: f64,
    pub baseline_maintenance_per_km: Cny10k,
    /// Escalation added per block, as a fraction of the baseline.
    pub maintenance_step_fraction: f64,
    pub maintenance_step_years: u32,
    pub smart_overhead_fraction: f64,
    pub device_cost_per_km: Cny10k,
    pub device_extra_initial_fraction: f64,
    pub device_extra_annual_growth: f64,
    /// Informational: upgrades are spread over the recurring device stream.
    pub upgrade_cycle_years: u32,
    /// Guidance fee in CNY per vehicle-kilometre.
    pub guided_fee_per_km_cny: f64,
    /// Share of guided vehicles that pay for guidance.
    pub fee_paying_share: f64,
}

impl Default for HighwayProfile {
    fn default() -> Self {
        HighwayProfile {
            name: "Guanghe Highway (Guangzhou section)".into(),
            length_km: 70.754,
            baseline_maintenance_per_km: Cny10k(84.083),
            maintenance_step_fraction: 0.2,
            maintenance_step_years: 3,
            smart_overhead_fraction: 0.2,
            device_cost_per_km: Cny10k(39.72),
            device_extra_initial_fraction: 0.1,
            device_extra_annual_growth: 0.05,
            upgrade_cycle_years: 5,
            guided_fee_per_km_cny: 0.2,
            fee_paying_share: 0.7,
        }
    }
}

impl HighwayProfile {
    pub fn validate(&self) -> Result<(), CbaError> {
        let bad = |field: &str, reason: &str| CbaError::InvalidField {
            field: format!("profile.{field}"),
            reason: reason.into(),
        };
        if !(self.length_km.is_finite() && self.length_km > 0.0) {
            return Err(bad("length_km", "must be strictly positive"));
        }
        for (field, v) in [
            ("baseline_maintenance_per_km", self.baseline_maintenance_per_km.0),
            ("maintenance_step_fraction", self.maintenance_step_fraction),
            ("smart_overhead_fraction", self.smart_overhead_fraction),
            ("device_cost_per_km", self.device_cost_per_km.0),
            ("device_extra_initial_fraction", self.device_extra_initial_fraction),
            ("device_extra_annual_growth", self.device_extra_annual_growth),
            ("guided_fee_per_km_cny", self.guided_fee_per_km_cny),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(field, "must be non-negative"));
            }
        }
        if self.maintenance_step_years == 0 {
            return Err(bad("maintenance_step_years", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.fee_paying_share) {
            return Err(bad("fee_paying_share", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// One-time cost of equipping the whole length with roadside devices.
    pub fn deployment_cost(&self) -> Cny10k {
        self.device_cost_per_km * self.length_km
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficModel {
    pub anchor_year: i32,
    /// Vehicles per year in the anchor year.
    pub anchor_flow: f64,
    pub anchor_revenue: Cny10k,
    pub flow_growth_rate: f64,
    pub capacity_per_hour: f64,
    /// Vehicles per year; at most `capacity_per_hour * 8760`.
    pub flow_cap: f64,
    pub penetration_step: f64,
    pub uplift_low: f64,
    pub uplift_high: f64,
    pub uplift_threshold: f64,
    /// Revenue growth used to back-cast the years after `revenue_break_year`.
    pub revenue_cagr_recent: f64,
    /// Revenue growth used to back-cast `history_start_year..revenue_break_year`.
    pub revenue_cagr_early: f64,
    pub history_start_year: i32,
    pub revenue_break_year: i32,
    /// Informational note on why penetration grows as it does.
    pub penetration_rationale: String,
}

impl Default for TrafficModel {
    fn default() -> Self {
        TrafficModel {
            anchor_year: 2022,
            anchor_flow: 19.5072e6,
            anchor_revenue: Cny10k::from_cny(503.4649e6),
            flow_growth_rate: 0.1114,
            capacity_per_hour: 4000.0,
            flow_cap: 35.0e6,
            penetration_step: 0.1,
            uplift_low: 0.03,
            uplift_high: 0.30,
            uplift_threshold: 0.5,
            revenue_cagr_recent: 0.1343,
            revenue_cagr_early: 0.1814,
            history_start_year: 2013,
            revenue_break_year: 2019,
            penetration_rationale: "new-energy vehicle share of new sales reached 27.6% in 2022".into(),
        }
    }
}

impl TrafficModel {
    pub fn validate(&self) -> Result<(), CbaError> {
        let bad = |field: &str, reason: &str| CbaError::InvalidField {
            field: format!("traffic.{field}"),
            reason: reason.into(),
        };
        for (field, v) in [
            ("anchor_flow", self.anchor_flow),
            ("anchor_revenue", self.anchor_revenue.0),
            ("flow_growth_rate", self.flow_growth_rate),
            ("capacity_per_hour", self.capacity_per_hour),
            ("flow_cap", self.flow_cap),
            ("penetration_step", self.penetration_step),
            ("uplift_low", self.uplift_low),
            ("uplift_high", self.uplift_high),
            ("uplift_threshold", self.uplift_threshold),
            ("revenue_cagr_recent", self.revenue_cagr_recent),
            ("revenue_cagr_early", self.revenue_cagr_early),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(field, "must be non-negative"));
            }
        }
        if self.flow_cap > self.capacity_per_hour * 8760.0 {
            return Err(bad("flow_cap", "exceeds capacity_per_hour * 8760"));
        }
        if !(self.history_start_year < self.revenue_break_year && self.revenue_break_year <= self.anchor_year) {
            return Err(bad(
                "revenue_break_year",
                "must satisfy history_start_year < revenue_break_year <= anchor_year",
            ));
        }
        Ok(())
    }

    /// Guided-vehicle share in `year`.
    pub fn penetration(&self, year: i32) -> f64 {
        (self.penetration_step * (year - self.anchor_year).max(0) as f64).min(1.0)
    }

    pub fn uplift(&self, penetration: f64) -> f64 {
        if penetration < self.uplift_threshold {
            self.uplift_low
        } else {
            self.uplift_high
        }
    }

    /// Flow and revenue for every year from `history_start_year` to the
    /// anchor, back-cast from the anchor with the configured growth rates.
    pub fn backcast_history(&self) -> Vec<(i32, f64, Cny10k)> {
        let break_revenue = self.anchor_revenue.0
            / (1.0 + self.revenue_cagr_recent).powi(self.anchor_year - self.revenue_break_year);
        (self.history_start_year..=self.anchor_year)
            .map(|y| {
                let flow = self.anchor_flow / (1.0 + self.flow_growth_rate).powi(self.anchor_year - y);
                let revenue = if y >= self.revenue_break_year {
                    self.anchor_revenue.0 / (1.0 + self.revenue_cagr_recent).powi(self.anchor_year - y)
                } else {
                    break_revenue / (1.0 + self.revenue_cagr_early).powi(self.revenue_break_year - y)
                };
                (y, flow, Cny10k(revenue))
            })
            .collect()
    }
}

/// Years `start..=end` of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub start_year: i32,
    pub end_year: i32,
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon {
            start_year: 2023,
            end_year: 2036,
        }
    }
}

impl Horizon {
    pub fn years(&self) -> Result<std::ops::RangeInclusive<i32>, CbaError> {
        if self.end_year < self.start_year {
            return Err(CbaError::EmptyHorizon {
                start: self.start_year,
                end: self.end_year,
            });
        }
        Ok(self.start_year..=self.end_year)
    }
}

/// `1 + step * floor(offset / years)`: each block adds a fixed share of the
/// baseline rather than compounding.
pub fn maintenance_factor(year_offset: u32, profile: &HighwayProfile) -> f64 {
    1.0 + profile.maintenance_step_fraction * (year_offset / profile.maintenance_step_years) as f64
}

pub fn annual_cost(year_offset: u32, kind: HighwayKind, profile: &HighwayProfile) -> Cny10k {
    let regular = profile.baseline_maintenance_per_km * profile.length_km * maintenance_factor(year_offset, profile);
    match kind {
        HighwayKind::Regular => regular,
        HighwayKind::Smart => {
            let deployment = profile.deployment_cost();
            let extra = deployment
                * profile.device_extra_initial_fraction
                * (1.0 + profile.device_extra_annual_growth).powi(year_offset as i32);
            let one_time = if year_offset == 0 { deployment } else { Cny10k(0.0) };
            regular * (1.0 + profile.smart_overhead_fraction) + extra + one_time
        }
    }
}

/// Annual vehicle flow for `year >= anchor_year`.
pub fn project_flow(year: i32, kind: HighwayKind, model: &TrafficModel) -> f64 {
    let regular = (model.anchor_flow * (1.0 + model.flow_growth_rate).powi(year - model.anchor_year)).min(model.flow_cap);
    match kind {
        HighwayKind::Regular => regular,
        HighwayKind::Smart => (regular * (1.0 + model.uplift(model.penetration(year)))).min(model.flow_cap),
    }
}

/// Fee income from the guided vehicles that pay for guidance.
pub fn guided_fee_revenue(flow: f64, penetration: f64, profile: &HighwayProfile, fee_per_km_cny: f64) -> Cny10k {
    Cny10k::from_cny(flow * penetration * profile.fee_paying_share * fee_per_km_cny * profile.length_km)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcrMode {
    /// Net benefit over total cost.
    FullCost,
    /// Net benefit over total cost without the one-time deployment.
    RecurringCost,
}

pub fn bcr(total_cost: Cny10k, total_net_benefit: Cny10k, one_time_deployment: Cny10k, mode: BcrMode) -> Result<f64, CbaError> {
    let denominator = match mode {
        BcrMode::FullCost => total_cost,
        BcrMode::RecurringCost => total_cost - one_time_deployment,
    };
    if !(denominator.0 > 0.0) {
        return Err(CbaError::ZeroDenominator {
            denominator: denominator.0,
        });
    }
    Ok(total_net_benefit.0 / denominator.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub year: i32,
    pub flow: f64,
    pub penetration: f64,
    pub cost: Cny10k,
    pub toll_revenue: Cny10k,
    pub guided_fee: Cny10k,
    pub net: Cny10k,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbaLedger {
    pub kind: HighwayKind,
    pub rows: Vec<LedgerRow>,
    pub total_cost: Cny10k,
    pub total_toll: Cny10k,
    pub total_fee: Cny10k,
    pub total_net: Cny10k,
    pub one_time_deployment: Cny10k,
    pub bcr_full_cost: f64,
    pub bcr_recurring_cost: f64,
}

impl CbaLedger {
    fn from_rows(kind: HighwayKind, rows: Vec<LedgerRow>, one_time_deployment: Cny10k) -> Result<Self, CbaError> {
        let total_cost: Cny10k = rows.iter().map(|r| r.cost).sum();
        let total_net: Cny10k = rows.iter().map(|r| r.net).sum();
        Ok(CbaLedger {
            kind,
            total_toll: rows.iter().map(|r| r.toll_revenue).sum(),
            total_fee: rows.iter().map(|r| r.guided_fee).sum(),
            bcr_full_cost: bcr(total_cost, total_net, one_time_deployment, BcrMode::FullCost)?,
            bcr_recurring_cost: bcr(total_cost, total_net, one_time_deployment, BcrMode::RecurringCost)?,
            rows,
            total_cost,
            total_net,
            one_time_deployment,
        })
    }

    pub fn bcr(&self, mode: BcrMode) -> f64 {
        match mode {
            BcrMode::FullCost => self.bcr_full_cost,
            BcrMode::RecurringCost => self.bcr_recurring_cost,
        }
    }

    /// Yearly rows followed by a footer block with totals and both ratios.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        let rec = |w: &mut csv::Writer<Vec<u8>>, r: Vec<String>| w.write_record(&r).expect("in-memory write");
        rec(
            &mut w,
            ["year", "flow_vehicles", "gv_penetration", "cost_cny10k", "toll_cny10k", "guided_fee_cny10k", "net_cny10k"]
                .map(String::from)
                .to_vec(),
        );
        for r in &self.rows {
            rec(
                &mut w,
                vec![
                    r.year.to_string(),
                    r.flow.to_string(),
                    r.penetration.to_string(),
                    r.cost.0.to_string(),
                    r.toll_revenue.0.to_string(),
                    r.guided_fee.0.to_string(),
                    r.net.0.to_string(),
                ],
            );
        }
        rec(
            &mut w,
            vec![
                "total".into(),
                String::new(),
                String::new(),
                self.total_cost.0.to_string(),
                self.total_toll.0.to_string(),
                self.total_fee.0.to_string(),
                self.total_net.0.to_string(),
            ],
        );
        rec(&mut w, vec!["one_time_deployment_cny10k".into(), self.one_time_deployment.0.to_string()]);
        rec(&mut w, vec!["bcr_full_cost".into(), self.bcr_full_cost.to_string()]);
        rec(&mut w, vec!["bcr_recurring_cost".into(), self.bcr_recurring_cost.to_string()]);
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbaResult {
    pub revenue_curve: Quadratic,
    pub regular: CbaLedger,
    pub smart: CbaLedger,
}

impl CbaResult {
    /// One row per highway kind with totals and both ratios.
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "highway",
            "total_cost_cny10k",
            "total_net_benefit_cny10k",
            "one_time_deployment_cny10k",
            "bcr_full_cost",
            "bcr_recurring_cost",
        ])
        .expect("in-memory write");
        for (name, l) in [("regular", &self.regular), ("smart", &self.smart)] {
            w.write_record([
                name.to_string(),
                l.total_cost.0.to_string(),
                l.total_net.0.to_string(),
                l.one_time_deployment.0.to_string(),
                l.bcr_full_cost.to_string(),
                l.bcr_recurring_cost.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    /// Yearly costs and revenues of both kinds, flows on the right axis.
    pub fn chart(&self) -> String {
        let series = |name: &str, l: &CbaLedger, f: fn(&LedgerRow) -> f64| Series {
            name: name.into(),
            points: l.rows.iter().map(|r| (r.year as f64, f(r))).collect(),
        };
        line_chart(
            "Annual cost and revenue",
            "year",
            "CNY 10k",
            Some("annual flow (million vehicles)"),
            &[
                (series("regular cost", &self.regular, |r| r.cost.0), Axis::Left),
                (series("smart cost", &self.smart, |r| r.cost.0), Axis::Left),
                (series("regular revenue", &self.regular, |r| (r.toll_revenue + r.guided_fee).0), Axis::Left),
                (series("smart revenue", &self.smart, |r| (r.toll_revenue + r.guided_fee).0), Axis::Left),
                (series("regular flow", &self.regular, |r| r.flow / 1e6), Axis::Right),
                (series("smart flow", &self.smart, |r| r.flow / 1e6), Axis::Right),
            ],
        )
    }
}

/// Builds both ledgers over the horizon.
pub fn run_cba(profile: &HighwayProfile, model: &TrafficModel, horizon: Horizon) -> Result<CbaResult, CbaError> {
    profile.validate()?;
    model.validate()?;
    let years = horizon.years()?;
    let history: Vec<(f64, f64)> = model.backcast_history().iter().map(|&(_, f, r)| (f, r.0)).collect();
    let curve = fit_revenue_curve(&history)?;

    let build = |kind: HighwayKind| -> Result<CbaLedger, CbaError> {
        let rows = years
            .clone()
            .map(|year| {
                let offset = (year - horizon.start_year) as u32;
                let flow = project_flow(year, kind, model);
                let cost = annual_cost(offset, kind, profile);
                let toll_revenue = Cny10k(curve.eval(flow));
                let (penetration, guided_fee) = match kind {
                    HighwayKind::Regular => (0.0, Cny10k(0.0)),
                    HighwayKind::Smart => {
                        let p = model.penetration(year);
                        (p, guided_fee_revenue(flow, p, profile, profile.guided_fee_per_km_cny))
                    }
                };
                LedgerRow {
                    year,
                    flow,
                    penetration,
                    cost,
                    toll_revenue,
                    guided_fee,
                    net: toll_revenue + guided_fee - cost,
                }
            })
            .collect();
        let deployment = match kind {
            HighwayKind::Regular => Cny10k(0.0),
            HighwayKind::Smart => profile.deployment_cost(),
        };
        CbaLedger::from_rows(kind, rows, deployment)
    };

    Ok(CbaResult {
        revenue_curve: curve,
        regular: build(HighwayKind::Regular)?,
        smart: build(HighwayKind::Smart)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maintenance_steps() {
        let p = HighwayProfile::default();
        assert_eq!(maintenance_factor(0, &p), 1.0);
        assert_eq!(maintenance_factor(2, &p), 1.0);
        assert_eq!(maintenance_factor(3, &p), 1.2);
        assert!((maintenance_factor(13, &p) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn first_year_costs() {
        let p = HighwayProfile::default();
        // 70.754 * 84.083 = 5949.208582
        let regular = annual_cost(0, HighwayKind::Regular, &p).0;
        assert!((regular - 5_949.208_582).abs() < 1e-6);
        let smart_recurring = annual_cost(1, HighwayKind::Smart, &p).0
            - p.deployment_cost().0 * 0.1 * 1.05;
        assert!((smart_recurring - 5_949.208_582 * 1.2).abs() < 1e-6);
        assert!((p.deployment_cost().0 - 2_810.348_88).abs() < 1e-9);
    }

    #[test]
    fn flow_projection() {
        let m = TrafficModel::default();
        // 19.5072e6 * 1.1114 = 21.68030208e6
        assert!((project_flow(2023, HighwayKind::Regular, &m) - 21_680_302.08).abs() < 1e-3);
        assert_eq!(m.penetration(2023), 0.1);
        assert_eq!(m.uplift(m.penetration(2023)), 0.03);
        assert!((m.penetration(2028) - 0.6).abs() < 1e-12);
        assert_eq!(m.uplift(m.penetration(2028)), 0.30);
        let r = project_flow(2023, HighwayKind::Regular, &m);
        assert!((project_flow(2023, HighwayKind::Smart, &m) - r * 1.03).abs() < 1e-6);
        assert_eq!(project_flow(2040, HighwayKind::Regular, &m), 35.0e6);
    }

    #[test]
    fn guided_fee_example() {
        let p = HighwayProfile::default();
        let fee = guided_fee_revenue(20.0e6, 0.1, &p, 0.2);
        // 20e6 * 0.1 * 0.7 * 0.2 * 70.754 CNY = 19_811_120 CNY
        assert!((fee.0 - 1_981.112).abs() < 1e-9);
        assert_eq!(guided_fee_revenue(20.0e6, 0.0, &p, 0.2).0, 0.0);
        assert_eq!(guided_fee_revenue(20.0e6, 0.1, &p, 0.0).0, 0.0);
    }

    #[test]
    fn bcr_conventions() {
        let r = bcr(Cny10k(114_224.804_8), Cny10k(1_351_606.198), Cny10k(0.0), BcrMode::FullCost).unwrap();
        assert!((r - 11.832_860_65).abs() < 1e-6);
        let s = bcr(
            Cny10k(147_468.056_6),
            Cny10k(1_894_420.077),
            Cny10k(2_810.348_88),
            BcrMode::RecurringCost,
        )
        .unwrap();
        assert!((s - 13.095_880_66).abs() < 1e-4);
        assert_eq!(bcr(Cny10k(5.0), Cny10k(0.0), Cny10k(0.0), BcrMode::FullCost).unwrap(), 0.0);
        assert!(matches!(
            bcr(Cny10k(5.0), Cny10k(1.0), Cny10k(5.0), BcrMode::RecurringCost),
            Err(CbaError::ZeroDenominator { .. })
        ));
    }

    #[test]
    fn empty_horizon_rejected() {
        let h = Horizon {
            start_year: 2030,
            end_year: 2029,
        };
        assert!(matches!(
            run_cba(&HighwayProfile::default(), &TrafficModel::default(), h),
            Err(CbaError::EmptyHorizon { .. })
        ));
    }

    #[test]
    fn fit_reproduces_anchor() {
        let m = TrafficModel::default();
        let hist: Vec<(f64, f64)> = m.backcast_history().iter().map(|&(_, f, r)| (f, r.0)).collect();
        let q = fit_revenue_curve(&hist).unwrap();
        let residual = (q.eval(m.anchor_flow) - m.anchor_revenue.0) / m.anchor_revenue.0;
        assert!(residual.abs() < 0.05, "residual {residual}");
    }

    #[test]
    fn smart_equals_regular_when_degenerate() {
        let p = HighwayProfile {
            smart_overhead_fraction: 0.0,
            device_cost_per_km: Cny10k(0.0),
            guided_fee_per_km_cny: 0.0,
            ..HighwayProfile::default()
        };
        let m = TrafficModel {
            uplift_low: 0.0,
            uplift_high: 0.0,
            ..TrafficModel::default()
        };
        let r = run_cba(&p, &m, Horizon::default()).unwrap();
        for (a, b) in r.regular.rows.iter().zip(&r.smart.rows) {
            assert_eq!((a.cost, a.flow, a.toll_revenue, a.net), (b.cost, b.flow, b.toll_revenue, b.net));
        }
    }

    #[test]
    fn anchor_revenue_unit() {
        assert_eq!(TrafficModel::default().anchor_revenue, Cny10k(50_346.49));
    }
}
