//! Shared helpers for the integration and property suites: seeded random
//! networks, a random association-uncertain construction case with its
//! enumeration (mixture) oracle, and an independent star-rule checker.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use mebn::bn::{build_network, DiscreteNode, Network};
use mebn::hypman::SituationModel;
use mebn::kb::{
    FragmentNodeRef, FragmentSpec, HypothesisInstance, InstanceId, MebnKb,
};
use mebn::ssn::{
    construct_ssn, CandidateSet, ConstructedNetwork, ConstructionPolicy, FixedEnumerator, Query,
};
use mebn::STAR;

pub fn dist(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05f64..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / z).collect()
}

/// A random DAG over at most `max_nodes` nodes with 2–3 states each and at
/// most 3 parents per node (always among earlier nodes, so acyclic by
/// construction).
pub fn random_network(seed: u64, max_nodes: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3)).collect();
    let mut nodes = Vec::new();
    for i in 0..n {
        let id = format!("n{i}");
        let states: Vec<String> = (0..cards[i]).map(|s| format!("s{s}")).collect();
        let states_ref: Vec<&str> = states.iter().map(|s| s.as_str()).collect();
        let max_parents = i.min(3);
        let n_parents = if max_parents == 0 { 0 } else { rng.gen_range(0..=max_parents) };
        let mut pool: Vec<usize> = (0..i).collect();
        pool.shuffle(&mut rng);
        let mut parents: Vec<usize> = pool.into_iter().take(n_parents).collect();
        parents.sort_unstable();
        let rows: usize = parents.iter().map(|&p| cards[p]).product();
        let cpt: Vec<Vec<f64>> = (0..rows).map(|_| dist(&mut rng, cards[i])).collect();
        let parent_ids: Vec<String> = parents.iter().map(|p| format!("n{p}")).collect();
        let parent_refs: Vec<&str> = parent_ids.iter().map(|s| s.as_str()).collect();
        nodes.push(if parents.is_empty() {
            DiscreteNode::root(id, &states_ref, cpt.into_iter().next().unwrap())
        } else {
            DiscreteNode::with_parents(id, &states_ref, &parent_refs, cpt)
        });
    }
    build_network(nodes).expect("random network is valid by construction")
}

/// A random evidence assignment over up to `max` nodes of the network.
pub fn random_evidence(net: &Network, seed: u64, max: usize) -> BTreeMap<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut ids: Vec<&str> = net.node_ids().collect();
    ids.shuffle(&mut rng);
    let k = rng.gen_range(0..=max.min(ids.len().saturating_sub(1)));
    ids.into_iter()
        .take(k)
        .map(|id| {
            let n = net.node(id).unwrap();
            let s = n.states.choose(&mut rng).unwrap().clone();
            (id.to_string(), s)
        })
        .collect()
}

/// One randomized association-uncertain construction case over a three-level
/// KB (company-like root, unit-like middle layer, report leaves): each
/// report either commits to a unit or carries a candidate set.
pub struct MixtureCase {
    pub kb: MebnKb,
    pub situation: SituationModel,
    pub query: Query,
    pub enumerator: FixedEnumerator,
    /// Per unresolved report: (slot node id, candidates).
    pub open_slots: Vec<(String, Vec<InstanceId>)>,
    /// Report id -> committed unit (resolved reports).
    pub committed: Vec<(InstanceId, InstanceId)>,
    pub policy: ConstructionPolicy,
}

pub fn mixture_case(seed: u64) -> MixtureCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ka = rng.gen_range(2..=3); // states of the root type
    let kb_states = rng.gen_range(2..=3); // states of the unit type
    let kc = rng.gen_range(2..=3); // states of the report type

    let mut kb = MebnKb::new();
    kb.declare_entity_type_with_prefix("A", "a").unwrap();
    kb.declare_entity_type_with_prefix("B", "b").unwrap();
    kb.declare_entity_type_with_prefix("C", "c").unwrap();
    let states = |prefix: &str, k: usize| -> Vec<String> {
        (0..k).map(|i| format!("{prefix}{i}")).collect()
    };
    let sa = states("x", ka);
    let sb = states("y", kb_states);
    let sc = states("z", kc);
    let as_ref = |v: &Vec<String>| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    {
        let r: Vec<&str> = sa.iter().map(|s| s.as_str()).collect();
        kb.declare_hypothesis_type("HA", &[("a", "A")], &r).unwrap();
        let r: Vec<&str> = sb.iter().map(|s| s.as_str()).collect();
        kb.declare_hypothesis_type("HB", &[("b", "B")], &r).unwrap();
        let r: Vec<&str> = sc.iter().map(|s| s.as_str()).collect();
        kb.declare_hypothesis_type("HC", &[("c", "C")], &r).unwrap();
    }
    let node = |hyp: &str, attrs: &[&str]| FragmentNodeRef {
        hyp_type: hyp.to_string(),
        attrs: attrs.iter().map(|s| s.to_string()).collect(),
    };
    kb.declare_fragment_type(FragmentSpec {
        id: "FragA".to_string(),
        attrs: vec![("a".to_string(), "A".to_string())],
        inputs: vec![],
        residents: vec![node("HA", &["a"])],
        edges: vec![],
        cpt_rows: vec![("HA".to_string(), BTreeMap::new(), dist(&mut rng, ka))],
        star_priors: BTreeMap::new(),
    })
    .unwrap();
    kb.declare_fragment_type(FragmentSpec {
        id: "FragB".to_string(),
        attrs: vec![
            ("b".to_string(), "B".to_string()),
            ("a".to_string(), "A".to_string()),
        ],
        inputs: vec![node("HA", &["a"])],
        residents: vec![node("HB", &["b"])],
        edges: vec![("HA".to_string(), "HB".to_string())],
        cpt_rows: as_ref(&sa)
            .iter()
            .map(|s| {
                (
                    "HB".to_string(),
                    [("HA".to_string(), s.clone())].into_iter().collect(),
                    dist(&mut rng, kb_states),
                )
            })
            .collect(),
        star_priors: BTreeMap::new(),
    })
    .unwrap();
    kb.declare_fragment_type(FragmentSpec {
        id: "FragC".to_string(),
        attrs: vec![
            ("c".to_string(), "C".to_string()),
            ("b".to_string(), "B".to_string()),
        ],
        inputs: vec![node("HB", &["b"])],
        residents: vec![node("HC", &["c"])],
        edges: vec![("HB".to_string(), "HC".to_string())],
        cpt_rows: as_ref(&sb)
            .iter()
            .map(|s| {
                (
                    "HC".to_string(),
                    [("HB".to_string(), s.clone())].into_iter().collect(),
                    dist(&mut rng, kc),
                )
            })
            .collect(),
        star_priors: BTreeMap::new(),
    })
    .unwrap();

    let mut situation = SituationModel::new();
    let a1 = situation.new_instance(&kb, "A", None).unwrap();
    let n_units = rng.gen_range(2..=4);
    let units: Vec<InstanceId> = (0..n_units)
        .map(|_| {
            let u = situation.new_instance(&kb, "B", None).unwrap();
            situation.commit_association(&u, &a1).unwrap();
            u
        })
        .collect();
    let n_reports = rng.gen_range(1..=3);
    let mut enumerator = FixedEnumerator::default();
    let mut open_slots = Vec::new();
    let mut committed = Vec::new();
    let mut evidence = Vec::new();
    for _ in 0..n_reports {
        let r = situation.new_instance(&kb, "C", None).unwrap();
        evidence.push((
            HypothesisInstance { hyp_type: "HC".to_string(), bindings: vec![r.clone()] },
            sc.choose(&mut rng).unwrap().clone(),
        ));
        if rng.gen_bool(0.3) {
            let u = units.choose(&mut rng).unwrap().clone();
            situation.commit_association(&r, &u).unwrap();
            committed.push((r, u));
        } else {
            let k = rng.gen_range(1..=n_units.min(4));
            let mut pool = units.clone();
            pool.shuffle(&mut rng);
            let mut cands: Vec<InstanceId> = pool.into_iter().take(k).collect();
            cands.sort();
            let slot = format!("B({})", r.0);
            enumerator
                .slots
                .insert(slot.clone(), CandidateSet { candidates: cands.clone(), definite: false });
            open_slots.push((slot, cands));
        }
    }

    let query = Query {
        targets: vec![
            HypothesisInstance { hyp_type: "HB".to_string(), bindings: vec![units[0].clone()] },
            HypothesisInstance { hyp_type: "HA".to_string(), bindings: vec![a1] },
        ],
        evidence,
    };
    let policy = ConstructionPolicy {
        default_star_prior: rng.gen_range(0.1..0.9),
        assoc_star_prior: rng.gen_range(0.05..0.5),
        ..ConstructionPolicy::default()
    };
    MixtureCase { kb, situation, query, enumerator, open_slots, committed, policy }
}

impl MixtureCase {
    /// The association prior of one candidate in a slot of `k` candidates.
    pub fn candidate_prior(&self, k: usize) -> f64 {
        (1.0 - self.policy.assoc_star_prior) / k as f64
    }

    /// Builds the committed (star-free) network for one full association
    /// assignment, via a fresh construction with every slot committed.
    pub fn committed_network(&self, assignment: &[(InstanceId, InstanceId)]) -> Network {
        let mut situation = self.situation.clone();
        for (r, u) in assignment {
            situation.commit_association(r, u).unwrap();
        }
        let mut en = FixedEnumerator::default();
        let cn = construct_ssn(&self.kb, &mut situation, &self.query, &self.policy, &mut en)
            .expect("committed construction succeeds");
        assert!(cn.assoc_nodes.is_empty());
        cn.net
    }
}

/// The slot node id for an unresolved report in a mixture case.
pub fn assignments(open: &[(String, Vec<InstanceId>)]) -> Vec<Vec<InstanceId>> {
    let mut out: Vec<Vec<InstanceId>> = vec![Vec::new()];
    for (_, cands) in open {
        out = out
            .iter()
            .flat_map(|prefix| {
                cands.iter().map(move |c| {
                    let mut v = prefix.clone();
                    v.push(c.clone());
                    v
                })
            })
            .collect();
    }
    out
}

fn parse_binding(id: &str) -> Vec<String> {
    id.split_once('(')
        .and_then(|(_, rest)| rest.strip_suffix(')'))
        .map(|b| b.split(',').map(|s| s.to_string()).collect())
        .unwrap_or_default()
}

/// Independent check of the star rules on a constructed network:
/// 1. every row indexed by `*` on an effective parent (association selector,
///    selected copy, normal parent, or any parent of a non-multiplexer node)
///    is a point mass on `*`;
/// 2. the set of star-carrying state spaces is exactly the downward closure
///    of {multiplexer children} ∪ {co-parents} ∪ {root ancestors of
///    co-parents}, with association nodes carrying `*` unconditionally;
/// 3. every root in the star set carries the recorded star prior exactly.
pub fn verify_star_rules(cn: &ConstructedNetwork) {
    let net = &cn.net;
    // recompute the star seed set from the network structure alone
    let mut seeds: Vec<String> = Vec::new();
    for (aid, info) in &cn.assoc_nodes {
        for child in &info.children {
            seeds.push(child.clone());
            for p in &net.node(child).unwrap().parents {
                if p != aid {
                    seeds.push(p.clone());
                }
            }
        }
    }
    // root ancestors (or self) of co-parents
    let mut stack = seeds.clone();
    let mut expect: std::collections::BTreeSet<String> = seeds.iter().cloned().collect();
    while let Some(id) = stack.pop() {
        for p in &net.node(&id).unwrap().parents {
            if !cn.assoc_nodes.contains_key(p) && expect.insert(p.clone()) {
                stack.push(p.clone());
            }
        }
    }
    // downward closure
    let mut children: std::collections::BTreeMap<&str, Vec<&str>> = Default::default();
    for n in net.nodes() {
        for p in &n.parents {
            children.entry(p.as_str()).or_default().push(n.id.as_str());
        }
    }
    let mut stack: Vec<String> = expect.iter().cloned().collect();
    while let Some(id) = stack.pop() {
        for &c in children.get(id.as_str()).map(|v| v.as_slice()).unwrap_or(&[]) {
            if !cn.assoc_nodes.contains_key(c) && expect.insert(c.to_string()) {
                stack.push(c.to_string());
            }
        }
    }
    for n in net.nodes() {
        let is_assoc = cn.assoc_nodes.contains_key(&n.id);
        let has_star = n.states.last().map(|s| s == STAR).unwrap_or(false);
        assert_eq!(
            has_star,
            is_assoc || expect.contains(&n.id),
            "star state space mismatch at {}",
            n.id
        );
        if has_star && n.parents.is_empty() && !is_assoc {
            let p = cn.root_star_priors.get(&n.id).copied().unwrap_or(0.0);
            let got = n.cpt[0].last().copied().unwrap();
            assert!((got - p).abs() <= 1e-12, "root star prior at {}: {got} vs {p}", n.id);
        }
    }

    // row absorption with the multiplexer exception
    for n in net.nodes() {
        let mux = n
            .parents
            .first()
            .and_then(|p| cn.assoc_nodes.get(p))
            .filter(|info| info.children.contains(&n.id));
        let spaces: Vec<&DiscreteNode> = n.parents.iter().map(|p| net.node(p).unwrap()).collect();
        let cards: Vec<usize> = spaces.iter().map(|s| s.states.len()).collect();
        let mut idx = vec![0usize; cards.len()];
        for row in &n.cpt {
            let absorbing = match mux {
                None => idx.iter().zip(&spaces).any(|(&k, s)| s.states[k] == STAR),
                Some(info) => {
                    let y_state = &spaces[0].states[idx[0]];
                    idx.iter().zip(&spaces).enumerate().any(|(pos, (&k, s))| {
                        if s.states[k] != STAR {
                            return false;
                        }
                        if pos == 0 {
                            return true;
                        }
                        let binding = parse_binding(&n.parents[pos]);
                        let is_copy = info
                            .candidates
                            .iter()
                            .any(|c| binding.iter().any(|b| b == c.as_str()));
                        !is_copy || binding.iter().any(|b| b == y_state)
                    })
                }
            };
            if absorbing {
                let si = n.states.iter().position(|s| s == STAR).unwrap();
                for (k, v) in row.iter().enumerate() {
                    let want = if k == si { 1.0 } else { 0.0 };
                    assert!(
                        (v - want).abs() < 1e-12,
                        "unabsorbed star row at {}: {row:?}",
                        n.id
                    );
                }
            }
            for d in (0..cards.len()).rev() {
                idx[d] += 1;
                if idx[d] < cards[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// Checks one randomized mixture case: the posterior of each query target in
/// the constructed multiplexer network equals the hypothesis-weighted
/// mixture over per-assignment committed networks (enumeration oracle),
/// within 1e-9. Every report carries evidence, so `*` branches contribute
/// zero posterior mass.
pub fn check_mixture(seed: u64) -> Result<(), String> {
    use mebn::bn::{brute_force_joint, exact_query};

    let case = mixture_case(seed);
    let cn = construct_ssn(
        &case.kb,
        &mut case.situation.clone(),
        &case.query,
        &case.policy,
        &mut case.enumerator.clone(),
    )
    .map_err(|e| format!("construction failed: {e}"))?;
    if cn.assoc_nodes.len() != case.open_slots.len() {
        return Err(format!(
            "expected {} association nodes, found {}",
            case.open_slots.len(),
            cn.assoc_nodes.len()
        ));
    }
    let ev = case.query.evidence_ids();
    for target in case.query.target_ids() {
        let full = exact_query(&cn.net, &[&target], &ev)
            .map_err(|e| format!("full-net query failed: {e}"))?;
        let full_states = &full.state_spaces[0];

        let mut weights = Vec::new();
        let mut posteriors: Vec<Vec<f64>> = Vec::new();
        let mut base_states: Option<Vec<String>> = None;
        for assignment in assignments(&case.open_slots) {
            let pairs: Vec<(InstanceId, InstanceId)> = case
                .open_slots
                .iter()
                .zip(&assignment)
                .map(|((slot, _), u)| {
                    let r = slot
                        .split_once('(')
                        .and_then(|(_, rest)| rest.strip_suffix(')'))
                        .unwrap();
                    (InstanceId(r.to_string()), u.clone())
                })
                .collect();
            let net = case.committed_network(&pairs);
            let joint = brute_force_joint(&net).map_err(|e| format!("oracle failed: {e}"))?;
            let e_nodes: Vec<&str> = ev.keys().map(|k| k.as_str()).collect();
            let e_joint = joint
                .query(&e_nodes, &BTreeMap::new())
                .map_err(|e| format!("oracle evidence query failed: {e}"))?;
            let e_states: Vec<&str> = e_nodes.iter().map(|n| ev[*n].as_str()).collect();
            let like = e_joint
                .probability(&e_states)
                .ok_or_else(|| "oracle probability lookup failed".to_string())?;
            let prior: f64 = case
                .open_slots
                .iter()
                .map(|(_, cands)| case.candidate_prior(cands.len()))
                .product();
            weights.push(prior * like);
            let post = joint
                .query(&[&target], &ev)
                .map_err(|e| format!("oracle posterior failed: {e}"))?;
            base_states.get_or_insert_with(|| post.state_spaces[0].clone());
            posteriors.push(post.table);
        }
        let z: f64 = weights.iter().sum();
        if z <= 0.0 {
            continue;
        }
        let base_states = base_states.unwrap();
        let mixture: Vec<f64> = (0..base_states.len())
            .map(|i| weights.iter().zip(&posteriors).map(|(w, p)| w / z * p[i]).sum())
            .collect();
        for (i, s) in full_states.iter().enumerate() {
            let want = if s == STAR {
                0.0
            } else {
                let j = base_states.iter().position(|b| b == s).unwrap();
                mixture[j]
            };
            if (full.table[i] - want).abs() > 1e-9 {
                return Err(format!(
                    "mixture mismatch at {target}[{s}]: {} vs {want}",
                    full.table[i]
                ));
            }
        }
    }
    Ok(())
}
