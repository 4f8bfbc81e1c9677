//! Ground-truth generation: company/platoon composition rules plus a
//! single-sweep sensor model with type confusion, misses and clutter.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use super::{ScenarioConfig, VehicleReport, VEHICLE_TYPES};

#[derive(Debug, Clone, PartialEq)]
pub struct TrueVehicle {
    /// `tank`, `apc` or `truck`.
    pub vehicle_type: String,
    pub position: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruePlatoon {
    pub id: String,
    /// `armor`, `mech`, `armorHQ` or `mechHQ`.
    pub subtype: String,
    pub position: (f64, f64),
    pub vehicles: Vec<TrueVehicle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueCompany {
    pub id: String,
    /// `armorCo`, `mechCo` or `teamCo`; a deterministic function of the
    /// maneuver platoon subtypes.
    pub subtype: String,
    /// `combatOps` or `refit`.
    pub activity: String,
    pub position: (f64, f64),
    pub platoons: Vec<TruePlatoon>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub companies: Vec<TrueCompany>,
}

impl GroundTruth {
    pub fn vehicle_count(&self) -> usize {
        self.companies
            .iter()
            .flat_map(|c| &c.platoons)
            .map(|p| p.vehicles.len())
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: GroundTruth,
    pub reports: Vec<VehicleReport>,
    /// report id -> (company, platoon, vehicle) indices; `None` = clutter.
    /// Kept for scoring and tests, never fed to the engine.
    pub provenance: BTreeMap<u64, Option<(usize, usize, usize)>>,
}

/// Company subtype from its maneuver platoons: all armor -> armorCo, all
/// mech -> mechCo, otherwise teamCo.
fn company_subtype(maneuvers: &[&str]) -> &'static str {
    if maneuvers.iter().all(|s| *s == "armor") {
        "armorCo"
    } else if maneuvers.iter().all(|s| *s == "mech") {
        "mechCo"
    } else {
        "teamCo"
    }
}

fn hq_roster(subtype: &str) -> Vec<&'static str> {
    match subtype {
        // armor HQ: 2 tanks, an APC and two trucks
        "armorHQ" => vec!["tank", "tank", "apc", "truck", "truck"],
        // mech HQ: 3 APCs and 3 trucks
        _ => vec!["apc", "apc", "apc", "truck", "truck", "truck"],
    }
}

fn jitter(rng: &mut ChaCha8Rng, center: (f64, f64), max_r: f64) -> (f64, f64) {
    let theta = rng.gen_range(0.0..TAU);
    let r = max_r * rng.gen_range(0.0f64..1.0).sqrt();
    (center.0 + r * theta.cos(), center.1 + r * theta.sin())
}

/// Rejection-samples a point in the field at least `min_sep` from all
/// `taken`; the separation is relaxed geometrically if the field is too
/// crowded, so generation never fails.
fn place(
    rng: &mut ChaCha8Rng,
    lo: f64,
    hi: f64,
    taken: &[(f64, f64)],
    mut min_sep: f64,
) -> (f64, f64) {
    loop {
        for _ in 0..200 {
            let p = (rng.gen_range(lo..hi), rng.gen_range(lo..hi));
            if taken.iter().all(|q| crate::hypman::euclid(p, *q) >= min_sep) {
                return p;
            }
        }
        min_sep *= 0.5;
    }
}

/// Deterministic under `config.seed`. Reports are emitted per vehicle in
/// (company, platoon, vehicle) order followed by clutter, with sequential
/// ids; the whole sweep shares one time slice.
pub fn generate_scenario(config: &ScenarioConfig) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let margin = (config.platoon_spread_m + 500.0).min(config.field_extent_m / 4.0);
    let (lo, hi) = (margin, (config.field_extent_m - margin).max(margin + 1.0));

    let mut truth = GroundTruth::default();
    let mut company_positions: Vec<(f64, f64)> = Vec::new();
    for ci in 0..config.n_companies {
        let cpos = place(&mut rng, lo, hi, &company_positions, 8_000.0);
        company_positions.push(cpos);

        // 2 or 3 maneuver platoons plus an HQ platoon
        let n_maneuver = if rng.gen_bool(0.75) { 3 } else { 2 };
        let archetype = *["armorCo", "mechCo", "teamCo"].choose(&mut rng).unwrap();
        let mut maneuvers: Vec<&str> = (0..n_maneuver)
            .map(|_| match archetype {
                "armorCo" => "armor",
                "mechCo" => "mech",
                _ => *["armor", "mech"].choose(&mut rng).unwrap(),
            })
            .collect();
        if archetype == "teamCo" {
            // a team company must actually mix its platoon types
            maneuvers[0] = "armor";
            maneuvers[n_maneuver - 1] = "mech";
        }
        let subtype = company_subtype(&maneuvers).to_string();
        let hq = match subtype.as_str() {
            "armorCo" => "armorHQ",
            "mechCo" => "mechHQ",
            _ => *["armorHQ", "mechHQ"].choose(&mut rng).unwrap(),
        };
        let activity = if rng.gen_bool(0.7) { "combatOps" } else { "refit" };

        let mut platoons = Vec::new();
        let mut platoon_positions: Vec<(f64, f64)> = Vec::new();
        for (pi, subtype) in maneuvers.iter().chain(std::iter::once(&hq)).enumerate() {
            let center = loop {
                let cand = jitter(&mut rng, cpos, config.platoon_spread_m);
                if platoon_positions
                    .iter()
                    .all(|q| crate::hypman::euclid(cand, *q) >= 1_000.0)
                {
                    break cand;
                }
            };
            platoon_positions.push(center);
            let roster: Vec<&str> = if subtype.ends_with("HQ") {
                hq_roster(subtype)
            } else {
                // maneuver platoons usually have 4 vehicles, may have fewer
                let n = if rng.gen_bool(0.85) { 4 } else { 3 };
                let vt = if *subtype == "armor" { "tank" } else { "apc" };
                vec![vt; n]
            };
            let vehicles = roster
                .iter()
                .map(|vt| TrueVehicle {
                    vehicle_type: vt.to_string(),
                    position: jitter(&mut rng, center, 120.0),
                })
                .collect();
            platoons.push(TruePlatoon {
                id: format!("c{}p{}", ci + 1, pi + 1),
                subtype: subtype.to_string(),
                position: center,
                vehicles,
            });
        }
        truth.companies.push(TrueCompany {
            id: format!("c{}", ci + 1),
            subtype,
            activity: activity.to_string(),
            position: cpos,
            platoons,
        });
    }

    // sensor sweep
    let mut reports = Vec::new();
    let mut provenance = BTreeMap::new();
    let mut next_id = 0u64;
    for (ci, company) in truth.companies.iter().enumerate() {
        let true_activity = if company.activity == "combatOps" { "moving" } else { "stationary" };
        for (pi, platoon) in company.platoons.iter().enumerate() {
            for (vi, vehicle) in platoon.vehicles.iter().enumerate() {
                if rng.gen_bool(config.miss_rate) {
                    continue;
                }
                let confused = config.noise > 0.0 && rng.gen_bool(config.noise);
                let vehicle_type = if confused {
                    let mut others: Vec<&str> = VEHICLE_TYPES
                        .iter()
                        .copied()
                        .filter(|t| *t != vehicle.vehicle_type)
                        .collect();
                    others.push("unknown");
                    (*others.choose(&mut rng).unwrap()).to_string()
                } else {
                    vehicle.vehicle_type.clone()
                };
                let act_confused = config.noise > 0.0 && rng.gen_bool(config.noise);
                let activity = if act_confused == (true_activity == "moving") {
                    "stationary"
                } else {
                    "moving"
                };
                let (x, y) = jitter(&mut rng, vehicle.position, 120.0);
                reports.push(VehicleReport {
                    report_id: next_id,
                    time_s: 0.0,
                    x_m: x,
                    y_m: y,
                    vehicle_type,
                    type_conf: 1.0 - config.noise,
                    activity: activity.to_string(),
                    activity_conf: 1.0 - config.noise,
                });
                provenance.insert(next_id, Some((ci, pi, vi)));
                next_id += 1;
            }
        }
    }

    let mean = config.clutter_rate * truth.vehicle_count() as f64 / 80.0;
    let n_clutter = if mean > 0.0 {
        rng.sample(Poisson::new(mean).expect("validated clutter rate")) as u64
    } else {
        0
    };
    for _ in 0..n_clutter {
        let x = rng.gen_range(0.0..config.field_extent_m);
        let y = rng.gen_range(0.0..config.field_extent_m);
        let mut types: Vec<&str> = VEHICLE_TYPES.to_vec();
        types.push("unknown");
        reports.push(VehicleReport {
            report_id: next_id,
            time_s: 0.0,
            x_m: x,
            y_m: y,
            vehicle_type: (*types.choose(&mut rng).unwrap()).to_string(),
            type_conf: 0.5,
            activity: (*["moving", "stationary"].choose(&mut rng).unwrap()).to_string(),
            activity_conf: 0.5,
        });
        provenance.insert(next_id, None);
        next_id += 1;
    }

    Scenario { truth, reports, provenance }
}
