//! Situation estimates, their line-oriented file format, extraction from a
//! live situation model, and scoring against ground truth.

use std::collections::{BTreeMap, BTreeSet};

use super::scenario::GroundTruth;
use crate::hypman::{euclid, SituationModel};
use crate::kb::InstanceId;
use crate::ssn::node_id;

#[derive(Debug, Clone, PartialEq)]
pub struct CompanyEstimate {
    pub id: String,
    pub subtype: String,
    pub activity: String,
    pub position: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonEstimate {
    pub id: String,
    pub company: String,
    pub subtype: String,
    pub n_vehicles: usize,
}

/// A flat situation readout; both estimates and converted ground truth use
/// this shape, so scoring compares like with like.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SituationEstimate {
    pub companies: Vec<CompanyEstimate>,
    pub platoons: Vec<PlatoonEstimate>,
}

impl SituationEstimate {
    /// Line-oriented format: `company <id> <subtype> <activity> <x> <y>` and
    /// `platoon <id> <company> <subtype> <n_vehicles>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.companies {
            out.push_str(&format!(
                "company {} {} {} {} {}\n",
                c.id, c.subtype, c.activity, c.position.0, c.position.1
            ));
        }
        for p in &self.platoons {
            out.push_str(&format!(
                "platoon {} {} {} {}\n",
                p.id, p.company, p.subtype, p.n_vehicles
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut est = SituationEstimate::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| format!("line {}: {what}: `{line}`", i + 1);
            match f[0] {
                "company" if f.len() == 6 => {
                    let x = f[4].parse::<f64>().map_err(|_| bad("malformed x"))?;
                    let y = f[5].parse::<f64>().map_err(|_| bad("malformed y"))?;
                    est.companies.push(CompanyEstimate {
                        id: f[1].to_string(),
                        subtype: f[2].to_string(),
                        activity: f[3].to_string(),
                        position: (x, y),
                    });
                }
                "platoon" if f.len() == 5 => {
                    let n = f[4].parse::<usize>().map_err(|_| bad("malformed vehicle count"))?;
                    est.platoons.push(PlatoonEstimate {
                        id: f[1].to_string(),
                        company: f[2].to_string(),
                        subtype: f[3].to_string(),
                        n_vehicles: n,
                    });
                }
                _ => return Err(bad("expected `company` (6 fields) or `platoon` (5 fields)")),
            }
        }
        Ok(est)
    }
}

impl From<&GroundTruth> for SituationEstimate {
    fn from(truth: &GroundTruth) -> Self {
        let mut est = SituationEstimate::default();
        for c in &truth.companies {
            est.companies.push(CompanyEstimate {
                id: c.id.clone(),
                subtype: c.subtype.clone(),
                activity: c.activity.clone(),
                position: c.position,
            });
            for p in &c.platoons {
                est.platoons.push(PlatoonEstimate {
                    id: p.id.clone(),
                    company: c.id.clone(),
                    subtype: p.subtype.clone(),
                    n_vehicles: p.vehicles.len(),
                });
            }
        }
        est
    }
}

fn argmax(dist: &[(String, f64)]) -> String {
    dist.iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, _)| s.clone())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Reads the estimated situation out of a situation model: live companies
/// with their argmax subtype/activity from `posteriors` (keyed by node id,
/// as produced by `situation_posteriors`), and their associated units with
/// raw-report counts as vehicle counts.
pub fn extract_estimate(
    situation: &SituationModel,
    posteriors: &BTreeMap<String, Vec<(String, f64)>>,
) -> SituationEstimate {
    let look = |hyp: &str, id: &InstanceId| {
        posteriors
            .get(&node_id(hyp, std::slice::from_ref(id)))
            .map(|d| argmax(d))
            .unwrap_or_else(|| "unknown".to_string())
    };
    let mut est = SituationEstimate::default();
    for (id, info) in &situation.instances {
        if info.entity_type != "Company" {
            continue;
        }
        est.companies.push(CompanyEstimate {
            id: id.0.clone(),
            subtype: look("CoSubType", id),
            activity: look("CoActivity", id),
            position: info.position.unwrap_or((0.0, 0.0)),
        });
    }
    for (id, info) in &situation.instances {
        if info.entity_type != "Unit" {
            continue;
        }
        let company = match situation.association(id, "Company") {
            Some((c, _)) => c.0.clone(),
            None => continue,
        };
        // vehicles seen = distinct raw reports behind this unit's summary
        // report instances
        let summaries: BTreeSet<&InstanceId> = situation
            .committed
            .iter()
            .chain(&situation.hypothetical)
            .filter(|((owner, _), filler)| {
                *filler == id && situation.entity_type_of(owner) == Some("Report")
            })
            .map(|((owner, _), _)| owner)
            .collect();
        let raw: BTreeSet<u64> = situation
            .evidence
            .iter()
            .filter(|e| e.node.bindings.iter().any(|b| summaries.contains(b)))
            .flat_map(|e| e.report_ids.iter().copied())
            .collect();
        est.platoons.push(PlatoonEstimate {
            id: id.0.clone(),
            company,
            subtype: look("PltSubType", id),
            n_vehicles: raw.len(),
        });
    }
    est
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreMetrics {
    pub n_true: usize,
    pub n_estimated: usize,
    pub detected: usize,
    pub detection_rate: f64,
    pub false_alarms: usize,
    /// Over matched company pairs.
    pub subtype_accuracy: f64,
    pub activity_accuracy: f64,
    /// Mean |estimated − true| platoon count over matched pairs.
    pub platoon_count_error: f64,
}

impl ScoreMetrics {
    pub fn table(&self) -> String {
        format!(
            "companies_true\t{}\ncompanies_estimated\t{}\ncompanies_detected\t{}\n\
             detection_rate\t{:.4}\nfalse_alarms\t{}\nsubtype_accuracy\t{:.4}\n\
             activity_accuracy\t{:.4}\nplatoon_count_error\t{:.4}\n",
            self.n_true,
            self.n_estimated,
            self.detected,
            self.detection_rate,
            self.false_alarms,
            self.subtype_accuracy,
            self.activity_accuracy,
            self.platoon_count_error
        )
    }
}

/// Greedy nearest-first matching of estimated to true companies within
/// `match_radius`; each side is used at most once.
pub fn score_situation(
    estimate: &SituationEstimate,
    truth: &SituationEstimate,
    match_radius: f64,
) -> ScoreMetrics {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ei, e) in estimate.companies.iter().enumerate() {
        for (ti, t) in truth.companies.iter().enumerate() {
            let d = euclid(e.position, t.position);
            if d <= match_radius {
                pairs.push((d, ei, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = BTreeSet::new();
    let mut used_t = BTreeSet::new();
    let mut matched: Vec<(usize, usize)> = Vec::new();
    for (_, ei, ti) in pairs {
        if used_e.contains(&ei) || used_t.contains(&ti) {
            continue;
        }
        used_e.insert(ei);
        used_t.insert(ti);
        matched.push((ei, ti));
    }

    let platoon_count = |est: &SituationEstimate, company: &str| {
        est.platoons.iter().filter(|p| p.company == company).count()
    };
    let mut subtype_ok = 0usize;
    let mut activity_ok = 0usize;
    let mut count_err = 0.0f64;
    for (ei, ti) in &matched {
        let e = &estimate.companies[*ei];
        let t = &truth.companies[*ti];
        if e.subtype == t.subtype {
            subtype_ok += 1;
        }
        if e.activity == t.activity {
            activity_ok += 1;
        }
        count_err += (platoon_count(estimate, &e.id) as f64
            - platoon_count(truth, &t.id) as f64)
            .abs();
    }
    let n_true = truth.companies.len();
    let n_est = estimate.companies.len();
    let n_matched = matched.len();
    let frac = |num: usize| if n_matched == 0 { 0.0 } else { num as f64 / n_matched as f64 };
    ScoreMetrics {
        n_true,
        n_estimated: n_est,
        detected: n_matched,
        detection_rate: if n_true == 0 { 0.0 } else { n_matched as f64 / n_true as f64 },
        false_alarms: n_est - n_matched,
        subtype_accuracy: frac(subtype_ok),
        activity_accuracy: frac(activity_ok),
        platoon_count_error: if n_matched == 0 { 0.0 } else { count_err / n_matched as f64 },
    }
}
