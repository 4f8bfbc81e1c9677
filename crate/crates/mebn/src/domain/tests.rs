use super::*;
use crate::hypman::{refine_cycle, situation_posteriors, CyclePolicies, SituationModel, Suggestor};
use crate::kb::{graph_union, toposort, validate_mebn};

#[test]
fn bundled_kb_is_valid() {
    let kb = build_domain_kb();
    let report = validate_mebn(&kb);
    assert!(report.is_valid(), "violations: {:?}", report.violations);
}

#[test]
fn report_fragment_derives_unit_association() {
    let kb = build_domain_kb();
    let frag = kb.fragment("ReportFrag").unwrap();
    let names: Vec<&str> = frag.associations.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(names, vec!["U"]);
    assert_eq!(frag.associations[0].entity_type, "Unit");
    let plat = kb.fragment("PlatoonFrag").unwrap();
    let names: Vec<&str> = plat.associations.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(names, vec!["P"]);
}

#[test]
fn graph_union_is_acyclic_with_report_chain() {
    let kb = build_domain_kb();
    let g = graph_union(&kb);
    assert!(g.len() >= 7, "only {} hypothesis types in the union", g.len());
    toposort(&g).expect("graph union must be acyclic");
    assert!(g["CoSubType"].contains("PltSubType"));
    assert!(g["PltSubType"].contains("RepPltSubType"));
}

#[test]
fn zero_noise_scenario_matches_composition_rules() {
    let config = ScenarioConfig {
        noise: 0.0,
        clutter_rate: 0.0,
        miss_rate: 0.0,
        ..ScenarioConfig::default()
    };
    let sc = generate_scenario(&config);
    let vehicles = sc.truth.vehicle_count();
    assert!((70..=90).contains(&vehicles), "vehicle count {vehicles}");
    assert_eq!(sc.reports.len(), vehicles, "zero noise: one report per vehicle");
    for company in &sc.truth.companies {
        let n = company.platoons.len();
        assert!((3..=4).contains(&n), "2-3 maneuver platoons + HQ");
        let hq = company.platoons.last().unwrap();
        let roster: Vec<&str> =
            hq.vehicles.iter().map(|v| v.vehicle_type.as_str()).collect();
        match hq.subtype.as_str() {
            "armorHQ" => assert_eq!(roster, ["tank", "tank", "apc", "truck", "truck"]),
            "mechHQ" => assert_eq!(roster, ["apc", "apc", "apc", "truck", "truck", "truck"]),
            other => panic!("HQ platoon has subtype {other}"),
        }
        let maneuvers: Vec<&str> = company.platoons[..n - 1]
            .iter()
            .map(|p| p.subtype.as_str())
            .collect();
        assert!(maneuvers.iter().all(|s| *s == "armor" || *s == "mech"));
        assert!(maneuvers.iter().all(|p| company.platoons[0].vehicles.len() <= 4 && !p.is_empty()));
        let expect = if maneuvers.iter().all(|s| *s == "armor") {
            "armorCo"
        } else if maneuvers.iter().all(|s| *s == "mech") {
            "mechCo"
        } else {
            "teamCo"
        };
        assert_eq!(company.subtype, expect);
    }
    // every report traces to exactly one vehicle
    for r in &sc.reports {
        assert!(matches!(sc.provenance.get(&r.report_id), Some(Some(_))));
    }
}

#[test]
fn scenario_is_deterministic_under_seed() {
    let config = ScenarioConfig::default();
    let a = generate_scenario(&config);
    let b = generate_scenario(&config);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.reports, b.reports);
    let c = generate_scenario(&ScenarioConfig { seed: 8, ..config });
    assert_ne!(a.reports, c.reports);
}

#[test]
fn default_profile_yields_about_ninety_reports() {
    let sc = generate_scenario(&ScenarioConfig::default());
    let n = sc.reports.len();
    assert!((80..=100).contains(&n), "report count {n}");
    let clutter = sc.provenance.values().filter(|v| v.is_none()).count();
    let misses = sc.truth.vehicle_count() - (sc.reports.len() - clutter);
    assert!(clutter > misses, "false alarms should slightly outnumber misses");
}

#[test]
fn report_csv_round_trips() {
    let sc = generate_scenario(&ScenarioConfig::default());
    let text = reports_to_csv(&sc.reports);
    let back = reports_from_csv(&text).unwrap();
    assert_eq!(back, sc.reports);
    assert_eq!(reports_to_csv(&back), text);
}

#[test]
fn report_csv_rejects_malformed_input() {
    assert!(reports_from_csv("").unwrap_err().contains("empty"));
    assert!(reports_from_csv("nope\n").unwrap_err().contains("header"));
    let bad = format!("{REPORT_CSV_HEADER}\n1,0,5,5,tank,0.9,moving\n");
    assert!(reports_from_csv(&bad).unwrap_err().contains("8 fields"));
    let bad = format!("{REPORT_CSV_HEADER}\n1,0,x,5,tank,0.9,moving,0.9\n");
    assert!(reports_from_csv(&bad).unwrap_err().contains("malformed number"));
    let bad = format!("{REPORT_CSV_HEADER}\n1,0,5,5,tank,1.5,moving,0.9\n");
    assert!(reports_from_csv(&bad).unwrap_err().contains("confidence"));
}

#[test]
fn estimate_text_round_trips() {
    let sc = generate_scenario(&ScenarioConfig::default());
    let truth = SituationEstimate::from(&sc.truth);
    let text = truth.to_text();
    let back = SituationEstimate::from_text(&text).unwrap();
    assert_eq!(back, truth);
    assert!(SituationEstimate::from_text("company a b\n").is_err());
}

#[test]
fn identity_estimate_scores_perfectly() {
    let sc = generate_scenario(&ScenarioConfig::default());
    let truth = SituationEstimate::from(&sc.truth);
    let m = score_situation(&truth, &truth, 3_000.0);
    assert_eq!(m.detection_rate, 1.0);
    assert_eq!(m.false_alarms, 0);
    assert_eq!(m.subtype_accuracy, 1.0);
    assert_eq!(m.activity_accuracy, 1.0);
    assert_eq!(m.platoon_count_error, 0.0);

    let empty = SituationEstimate::default();
    let m = score_situation(&empty, &truth, 3_000.0);
    assert_eq!(m.detection_rate, 0.0);
    assert_eq!(m.detected, 0);
}

#[test]
fn scoring_ignores_report_order() {
    let mut config = ScenarioConfig::default();
    config.seed = 3;
    let sc = generate_scenario(&config);
    let truth = SituationEstimate::from(&sc.truth);
    let mut shuffled = truth.clone();
    shuffled.companies.reverse();
    shuffled.platoons.reverse();
    assert_eq!(
        score_situation(&shuffled, &truth, 3_000.0),
        score_situation(&truth, &truth, 3_000.0)
    );
}

#[test]
fn suggestor_summarization_rules() {
    let mk = |types: &[&str]| -> Vec<VehicleReport> {
        types
            .iter()
            .enumerate()
            .map(|(i, t)| VehicleReport {
                report_id: i as u64,
                time_s: 0.0,
                x_m: 0.0,
                y_m: 0.0,
                vehicle_type: t.to_string(),
                type_conf: 0.9,
                activity: "moving".to_string(),
                activity_conf: 0.9,
            })
            .collect()
    };
    let summarize = |types: &[&str]| {
        let reports = mk(types);
        let refs: Vec<&VehicleReport> = reports.iter().collect();
        PlatoonSuggestor::summarize(&refs).0
    };
    assert_eq!(summarize(&["tank", "tank", "apc", "truck", "truck"]), "armorHQ");
    assert_eq!(summarize(&["apc", "apc", "apc", "truck", "truck", "truck"]), "mechHQ");
    assert_eq!(summarize(&["tank", "tank", "tank", "tank"]), "armor");
    assert_eq!(summarize(&["apc", "apc", "apc", "apc"]), "mech");
    assert_eq!(summarize(&["tank", "apc"]), "mech"); // tie goes to mech
    assert_eq!(summarize(&["unknown", "unknown"]), "mech");
}

#[test]
fn zero_noise_two_company_pipeline_recovers_truth() {
    let kb = build_domain_kb();
    let config = ScenarioConfig {
        n_companies: 2,
        noise: 0.0,
        clutter_rate: 0.0,
        miss_rate: 0.0,
        seed: 11,
        ..ScenarioConfig::default()
    };
    let sc = generate_scenario(&config);
    let suggestors: Vec<Box<dyn Suggestor<VehicleReport>>> = vec![Box::new(PlatoonSuggestor)];
    let policies = CyclePolicies::new(&suggestors);
    let mut situation = SituationModel::new();
    let report = refine_cycle(&kb, &mut situation, &sc.reports, &policies).unwrap();
    assert!(!report.guard_exceeded, "cycle did not quiesce");

    let posteriors = situation_posteriors(
        &kb,
        &mut situation,
        &policies.construction,
        &policies.gate,
        &policies.assoc,
    )
    .unwrap();
    let estimate = extract_estimate(&situation, &posteriors);
    let truth = SituationEstimate::from(&sc.truth);
    let metrics = score_situation(&estimate, &truth, 3_000.0);
    assert_eq!(metrics.detection_rate, 1.0, "estimate: {estimate:?}");
    assert_eq!(metrics.subtype_accuracy, 1.0, "estimate: {estimate:?}\ntruth: {truth:?}");
    assert_eq!(metrics.false_alarms, 0);
}
