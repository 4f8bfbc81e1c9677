//! Ground-force situation-assessment domain: bundled knowledge base,
//! ground-truth scenario generator with configurable noise and clutter,
//! report/estimate file formats, and a scoring harness.

mod scenario;
mod score;
mod suggest;
#[cfg(test)]
mod tests;

pub use scenario::{generate_scenario, GroundTruth, Scenario, TrueCompany, TruePlatoon, TrueVehicle};
pub use score::{
    extract_estimate, score_situation, CompanyEstimate, PlatoonEstimate, ScoreMetrics,
    SituationEstimate,
};
pub use suggest::PlatoonSuggestor;

use crate::hypman::ObservedReport;
use crate::kb::MebnKb;

/// Parses the bundled knowledge base. Must never fail: the asset is
/// validated by the test suite.
pub fn build_domain_kb() -> MebnKb {
    crate::kb::parse_kb(include_str!("../../assets/battlefield.mkb"))
        .expect("bundled knowledge base is well-formed")
}

pub const VEHICLE_TYPES: [&str; 3] = ["tank", "apc", "truck"];

/// One sensor detection: a hypothesized vehicle with probabilistic
/// qualifiers on its type and activity.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleReport {
    pub report_id: u64,
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    /// `tank`, `apc`, `truck` or `unknown`.
    pub vehicle_type: String,
    pub type_conf: f64,
    /// `moving` or `stationary`.
    pub activity: String,
    pub activity_conf: f64,
}

impl ObservedReport for VehicleReport {
    fn id(&self) -> u64 {
        self.report_id
    }

    fn position(&self) -> (f64, f64) {
        (self.x_m, self.y_m)
    }
}

pub const REPORT_CSV_HEADER: &str =
    "report_id,time_s,x_m,y_m,vehicle_type,type_conf,activity,activity_conf";

/// Serializes reports to CSV (fixed schema, no quoting needed).
pub fn reports_to_csv(reports: &[VehicleReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.report_id, r.time_s, r.x_m, r.y_m, r.vehicle_type, r.type_conf, r.activity,
            r.activity_conf
        ));
    }
    out
}

/// Parses report CSV; returns a line-numbered message on malformed input.
pub fn reports_from_csv(text: &str) -> Result<Vec<VehicleReport>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_CSV_HEADER => {}
        Some((_, h)) => return Err(format!("line 1: expected header `{REPORT_CSV_HEADER}`, found `{h}`")),
        None => return Err("empty report file".to_string()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(format!("line {}: expected 8 fields, found {}", i + 1, f.len()));
        }
        let num = |j: usize| -> Result<f64, String> {
            f[j].trim()
                .parse::<f64>()
                .map_err(|_| format!("line {}: malformed number `{}`", i + 1, f[j]))
        };
        let r = VehicleReport {
            report_id: f[0]
                .trim()
                .parse()
                .map_err(|_| format!("line {}: malformed report id `{}`", i + 1, f[0]))?,
            time_s: num(1)?,
            x_m: num(2)?,
            y_m: num(3)?,
            vehicle_type: f[4].trim().to_string(),
            type_conf: num(5)?,
            activity: f[6].trim().to_string(),
            activity_conf: num(7)?,
        };
        if !r.x_m.is_finite() || !r.y_m.is_finite() {
            return Err(format!("line {}: non-finite coordinates", i + 1));
        }
        if !(0.0..=1.0).contains(&r.type_conf) || !(0.0..=1.0).contains(&r.activity_conf) {
            return Err(format!("line {}: confidence outside [0,1]", i + 1));
        }
        out.push(r);
    }
    Ok(out)
}

/// Scenario tunables. Defaults follow a five-company engagement of roughly
/// 80 vehicles yielding roughly 90 reports, clutter slightly outnumbering
/// misses.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub n_companies: usize,
    /// Vehicle-type confusion rate for real reports.
    pub noise: f64,
    /// Expected false reports per 80 true vehicles.
    pub clutter_rate: f64,
    /// Per-vehicle non-detection probability.
    pub miss_rate: f64,
    pub seed: u64,
    /// Side length of the square operating area, meters.
    pub field_extent_m: f64,
    /// Maximum distance of a platoon center from its company position.
    pub platoon_spread_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_companies: 5,
            noise: 0.1,
            clutter_rate: 14.0,
            miss_rate: 0.05,
            seed: 7,
            field_extent_m: 30_000.0,
            platoon_spread_m: 1_500.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.noise) {
            return Err(format!("noise {} outside [0,1)", self.noise));
        }
        if !(0.0..1.0).contains(&self.miss_rate) {
            return Err(format!("miss_rate {} outside [0,1)", self.miss_rate));
        }
        if self.clutter_rate < 0.0 || !self.clutter_rate.is_finite() {
            return Err(format!("clutter_rate {} invalid", self.clutter_rate));
        }
        if self.field_extent_m <= 0.0 || self.platoon_spread_m <= 0.0 {
            return Err("field extent and platoon spread must be positive".to_string());
        }
        Ok(())
    }
}
