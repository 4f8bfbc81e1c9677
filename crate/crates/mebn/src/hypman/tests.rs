use super::*;

struct Pt {
    id: u64,
    pos: (f64, f64),
}

impl ObservedReport for Pt {
    fn id(&self) -> u64 {
        self.id
    }
    fn position(&self) -> (f64, f64) {
        self.pos
    }
}

fn pts(coords: &[(f64, f64)]) -> Vec<Pt> {
    coords
        .iter()
        .enumerate()
        .map(|(i, &pos)| Pt { id: i as u64 + 1, pos })
        .collect()
}

fn kb_with_entities() -> MebnKb {
    let mut kb = MebnKb::new();
    kb.declare_entity_type("Unit").unwrap();
    kb.declare_entity_type("Report").unwrap();
    kb
}

#[test]
fn binomial_reference_values() {
    assert_eq!(binomial(90, 4).unwrap(), 2_555_190);
    assert_eq!(binomial(86, 4).unwrap(), 2_123_555);
    assert_eq!(binomial(82, 4).unwrap(), 1_749_060);
    assert_eq!(binomial(10, 4).unwrap(), 210);
}

#[test]
fn binomial_edges_and_errors() {
    assert_eq!(binomial(0, 0).unwrap(), 1);
    assert_eq!(binomial(7, 0).unwrap(), 1);
    assert_eq!(binomial(7, 7).unwrap(), 1);
    assert_eq!(binomial(120, 60).unwrap(), binomial(120, 60).unwrap());
    assert_eq!(binomial(3, 5).unwrap_err(), HypError::KExceedsN { n: 3, k: 5 });
}

#[test]
fn binomial_matches_pascal() {
    // independent cross-check against Pascal's rule
    for n in 1..=40u64 {
        for k in 1..n {
            assert_eq!(
                binomial(n, k).unwrap(),
                binomial(n - 1, k - 1).unwrap() + binomial(n - 1, k).unwrap(),
                "C({n},{k})"
            );
        }
    }
}

#[test]
fn gate_separates_distant_reports() {
    let reports = pts(&[(0.0, 0.0), (10_000.0, 0.0)]);
    let clusters = distance_gate(&reports, &GatePolicy { radius_m: 500.0, max_candidates: 8 });
    assert_eq!(clusters, vec![vec![0], vec![1]]);
}

#[test]
fn gate_chains_single_linkage() {
    // chain spacing just under the radius: one cluster despite 1.2 km span
    let reports = pts(&[(0.0, 0.0), (450.0, 0.0), (900.0, 0.0), (1350.0, 0.0)]);
    let clusters = distance_gate(&reports, &GatePolicy { radius_m: 500.0, max_candidates: 8 });
    assert_eq!(clusters, vec![vec![0, 1, 2, 3]]);
}

#[test]
fn gate_ten_cluster_subsets() {
    let coords: Vec<(f64, f64)> = (0..10).map(|i| (f64::from(i) * 40.0, 0.0)).collect();
    let reports = pts(&coords);
    let clusters = distance_gate(&reports, &GatePolicy::default());
    assert_eq!(clusters.len(), 1);
    assert_eq!(clusters[0].len(), 10);
    assert_eq!(count_ungated_candidates(clusters[0].len() as u64, 4).unwrap(), 210);
}

#[test]
fn gate_partition_is_sound() {
    let coords: Vec<(f64, f64)> = (0..20)
        .map(|i| ((i * 379 % 7) as f64 * 300.0, (i * 523 % 5) as f64 * 300.0))
        .collect();
    let reports = pts(&coords);
    let policy = GatePolicy { radius_m: 350.0, max_candidates: 8 };
    let clusters = distance_gate(&reports, &policy);
    let mut seen = BTreeSet::new();
    for c in &clusters {
        for &i in c {
            assert!(seen.insert(i), "report in two clusters");
        }
        // within-cluster connectivity at the radius (chain property)
        for &i in c {
            let connected = c.iter().any(|&j| {
                i != j && euclid(reports[i].position(), reports[j].position()) <= policy.radius_m
            });
            assert!(c.len() == 1 || connected);
        }
    }
    assert_eq!(seen.len(), reports.len());
}

#[test]
fn enumerate_single_mode_returns_nominee() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    let u1 = situation.new_instance(&kb, "Unit", Some((0.0, 0.0))).unwrap();
    let got = enumerate_association_candidates(
        &kb,
        &mut situation,
        "Unit",
        Some((10.0, 0.0)),
        Some(&u1),
        &GatePolicy::default(),
        &AssociationPolicy::default(),
    )
    .unwrap();
    assert_eq!(got, vec![u1]);
}

#[test]
fn enumerate_multi_mode_adds_new_instance() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    let u1 = situation.new_instance(&kb, "Unit", Some((0.0, 0.0))).unwrap();
    let u2 = situation.new_instance(&kb, "Unit", Some((100.0, 0.0))).unwrap();
    let _far = situation.new_instance(&kb, "Unit", Some((9_000.0, 0.0))).unwrap();
    let got = enumerate_association_candidates(
        &kb,
        &mut situation,
        "Unit",
        Some((10.0, 0.0)),
        None,
        &GatePolicy::default(),
        &AssociationPolicy { mode: AssocMode::MultiHypothesis, new_instance_allowed: true },
    )
    .unwrap();
    assert_eq!(got.len(), 3);
    assert_eq!(got[0], u1); // nearest first
    assert_eq!(got[1], u2);
    assert_eq!(got[2].0, "u4"); // freshly created
}

#[test]
fn enumerate_multi_mode_gate_excludes_all() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    situation.new_instance(&kb, "Unit", Some((9_000.0, 0.0))).unwrap();
    let got = enumerate_association_candidates(
        &kb,
        &mut situation,
        "Unit",
        Some((0.0, 0.0)),
        None,
        &GatePolicy::default(),
        &AssociationPolicy { mode: AssocMode::MultiHypothesis, new_instance_allowed: false },
    )
    .unwrap();
    assert!(got.is_empty());
}

#[test]
fn enumerate_multi_mode_caps_candidates() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    for i in 0..12 {
        situation.new_instance(&kb, "Unit", Some((f64::from(i), 0.0))).unwrap();
    }
    let got = enumerate_association_candidates(
        &kb,
        &mut situation,
        "Unit",
        Some((0.0, 0.0)),
        None,
        &GatePolicy { radius_m: 500.0, max_candidates: 8 },
        &AssociationPolicy { mode: AssocMode::MultiHypothesis, new_instance_allowed: true },
    )
    .unwrap();
    assert_eq!(got.len(), 9); // cap + one new instance
}

#[test]
fn prune_removes_high_star_instances() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    let u1 = situation.new_instance(&kb, "Unit", None).unwrap();
    let u2 = situation.new_instance(&kb, "Unit", None).unwrap();
    situation.star_beliefs.insert(u1.clone(), 0.99);
    situation.star_beliefs.insert(u2.clone(), 0.5);
    let log = prune_by_star(&mut situation, 0.9);
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].instance, u1);
    assert!((log[0].star_posterior - 0.99).abs() < 1e-12);
    assert!(!situation.is_live(&u1));
    assert!(situation.is_live(&u2));
    situation.check_references().unwrap();
}

#[test]
fn prune_cascades_to_evidence_and_pool() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    let u1 = situation.new_instance(&kb, "Unit", None).unwrap();
    let r1 = situation.new_instance(&kb, "Report", None).unwrap();
    situation.commit_association(&r1, &u1).unwrap();
    situation.add_evidence(
        HypothesisInstance { hyp_type: "RepX".to_string(), bindings: vec![r1.clone()] },
        "x",
        vec![41, 42],
    );
    situation.star_beliefs.insert(u1.clone(), 0.95);
    let log = prune_by_star(&mut situation, 0.9);
    // the unit dies; its report (evidence owner) dies transitively
    assert_eq!(log.len(), 2);
    assert!(!situation.is_live(&u1));
    assert!(!situation.is_live(&r1));
    assert!(situation.evidence.is_empty());
    assert_eq!(situation.pool, vec![41, 42]);
    situation.check_references().unwrap();
}

#[test]
fn prune_keeps_committed_reference_targets() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    kb.entity("Unit").unwrap();
    let mut kb2 = kb_with_entities();
    kb2.declare_entity_type("Company").unwrap();
    let mut situation2 = SituationModel::new();
    let _ = &mut situation;
    // u1 is condemned by its posterior but a surviving unit's committed
    // association points at its company c1 -> c1 must survive
    let c1 = situation2.new_instance(&kb2, "Company", None).unwrap();
    let u1 = situation2.new_instance(&kb2, "Unit", None).unwrap();
    let u2 = situation2.new_instance(&kb2, "Unit", None).unwrap();
    situation2.commit_association(&u1, &c1).unwrap();
    situation2.commit_association(&u2, &c1).unwrap();
    situation2.star_beliefs.insert(u1.clone(), 0.95);
    situation2.star_beliefs.insert(c1.clone(), 0.95);
    let log = prune_by_star(&mut situation2, 0.9);
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].instance, u1);
    assert!(situation2.is_live(&c1), "committed reference from u2 keeps c1");
    situation2.check_references().unwrap();
}

#[test]
fn prune_below_threshold_keeps_instance() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    let u1 = situation.new_instance(&kb, "Unit", None).unwrap();
    situation.star_beliefs.insert(u1.clone(), 0.5);
    assert!(prune_by_star(&mut situation, 0.9).is_empty());
    assert!(situation.is_live(&u1));
}

#[test]
fn association_lifecycle() {
    let kb = kb_with_entities();
    let mut situation = SituationModel::new();
    let u1 = situation.new_instance(&kb, "Unit", None).unwrap();
    let r1 = situation.new_instance(&kb, "Report", None).unwrap();
    situation.nominate_association(&r1, &u1).unwrap();
    assert_eq!(situation.association(&r1, "Unit"), Some((&u1, false)));
    situation.accept_association(&r1, "Unit").unwrap();
    assert_eq!(situation.association(&r1, "Unit"), Some((&u1, true)));
    assert_eq!(
        situation.accept_association(&r1, "Unit").unwrap_err(),
        HypError::NoSuchAssociation { owner: r1.0.clone(), entity: "Unit".to_string() }
    );
}

#[test]
fn fire_suggestors_empty_batch_is_empty() {
    struct Never;
    impl Suggestor<Pt> for Never {
        fn name(&self) -> &str {
            "never"
        }
        fn suggest(
            &self,
            _s: &SituationModel,
            _c: &Cluster<'_, Pt>,
            _seed: u64,
        ) -> Vec<Nomination> {
            panic!("must not fire on empty batch");
        }
    }
    let suggestors: Vec<Box<dyn Suggestor<Pt>>> = vec![Box::new(Never)];
    let situation = SituationModel::new();
    let out = fire_suggestors(&situation, &[], &suggestors, &GatePolicy::default(), 7);
    assert!(out.is_empty());
}

#[test]
fn fire_suggestors_sees_centroids() {
    struct Echo;
    impl Suggestor<Pt> for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn suggest(
            &self,
            _s: &SituationModel,
            c: &Cluster<'_, Pt>,
            _seed: u64,
        ) -> Vec<Nomination> {
            vec![Nomination {
                suggestor: self.name().to_string(),
                report_ids: c.members.iter().map(|m| m.id()).collect(),
                centroid: c.centroid,
                report_entity: "Report".to_string(),
                evidence: vec![],
                subject: SubjectRef::New { entity_type: "Unit".to_string() },
                parent: None,
            }]
        }
    }
    let suggestors: Vec<Box<dyn Suggestor<Pt>>> = vec![Box::new(Echo)];
    let situation = SituationModel::new();
    let batch = pts(&[(0.0, 0.0), (100.0, 0.0), (10_000.0, 0.0)]);
    let refs: Vec<&Pt> = batch.iter().collect();
    let out = fire_suggestors(&situation, &refs, &suggestors, &GatePolicy::default(), 7);
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].centroid, (50.0, 0.0));
    assert_eq!(out[0].report_ids, vec![1, 2]);
    assert_eq!(out[1].centroid, (10_000.0, 0.0));
}
