//! The refine cycle: suggest → commit → construct → evaluate → prune over
//! one report batch, iterated within the batch while refinements change
//! any target's argmax state (bounded by an iteration guard).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use crate::kb::{HypothesisInstance, InstanceId, MebnKb};
use crate::ssn::{
    construct_ssn, evaluate_query, minimalize, node_id, AssociationSlot, CandidateEnumerator,
    CandidateSet, ConstructError, ConstructionPolicy, NodeProvenance, Query,
};

use super::{
    enumerate_association_candidates, fire_suggestors, prune_by_star, AssocMode,
    AssociationPolicy, GatePolicy, HypError, Nomination, ObservedReport, PruneRecord,
    SituationModel, SubjectRef, Suggestor,
};

impl From<ConstructError> for HypError {
    fn from(e: ConstructError) -> Self {
        match e {
            ConstructError::Kb(k) => HypError::Kb(k),
            ConstructError::Bn(crate::bn::BnError::InconsistentEvidence) => {
                HypError::InconsistentEvidence
            }
            other => HypError::Construct(other.to_string()),
        }
    }
}

/// Candidate supplier backed by the situation's nominated associations:
/// committed slots never reach it; nominated slots yield the nominee (plus
/// `*` downstream) in single-hypothesis mode or the gated field in
/// multi-hypothesis mode; un-nominated slots fall back to a fresh instance
/// when allowed.
pub struct DefaultEnumerator<'a> {
    pub kb: &'a MebnKb,
    pub gate: GatePolicy,
    pub assoc: AssociationPolicy,
}

impl CandidateEnumerator for DefaultEnumerator<'_> {
    fn enumerate(
        &mut self,
        situation: &mut SituationModel,
        slot: &AssociationSlot,
    ) -> Result<CandidateSet, ConstructError> {
        let owner = (slot.owner.len() == 1).then(|| slot.owner[0].clone());
        let origin = owner
            .as_ref()
            .and_then(|o| situation.instances.get(o))
            .and_then(|i| i.position);
        let nominee = owner.as_ref().and_then(|o| {
            situation.hypothetical.get(&(o.clone(), slot.entity_type.clone())).cloned()
        });
        let candidates = match (self.assoc.mode, &nominee) {
            (AssocMode::SingleHypothesis, Some(n)) => vec![n.clone()],
            (AssocMode::SingleHypothesis, None) => {
                if !self.assoc.new_instance_allowed {
                    Vec::new()
                } else {
                    let fresh = situation
                        .new_instance(self.kb, &slot.entity_type, origin)
                        .map_err(|e| ConstructError::Situation(e.to_string()))?;
                    if let Some(o) = &owner {
                        situation
                            .nominate_association(o, &fresh)
                            .map_err(|e| ConstructError::Situation(e.to_string()))?;
                    }
                    vec![fresh]
                }
            }
            (AssocMode::MultiHypothesis, _) => enumerate_association_candidates(
                self.kb,
                situation,
                &slot.entity_type,
                origin,
                nominee.as_ref(),
                &self.gate,
                &self.assoc,
            )
            .map_err(|e| ConstructError::Situation(e.to_string()))?,
        };
        Ok(CandidateSet { candidates, definite: false })
    }
}

/// All knobs of one refine pass.
pub struct CyclePolicies<'a, R> {
    pub gate: GatePolicy,
    pub assoc: AssociationPolicy,
    pub construction: ConstructionPolicy,
    /// Instances at P(`*`) at or above this are pruned.
    pub prune_threshold: f64,
    /// Nominated associations at P(`*`) at or below this become committed.
    pub accept_star_max: f64,
    /// Per-batch probability that a real, in-area instance yields fresh
    /// evidence; silence updates P(`*`) by the corresponding Bayes factor.
    pub redetect_prob: f64,
    /// Floor on the star belief of a freshly supported instance, so later
    /// silent batches can still raise it.
    pub min_star_belief: f64,
    /// Merge radius when a nominated parent entity (e.g. a company) is
    /// matched against existing instances instead of being created.
    pub parent_merge_m: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub suggestors: &'a [Box<dyn Suggestor<R>>],
}

impl<'a, R> CyclePolicies<'a, R> {
    pub fn new(suggestors: &'a [Box<dyn Suggestor<R>>]) -> Self {
        CyclePolicies {
            gate: GatePolicy::default(),
            assoc: AssociationPolicy::default(),
            construction: ConstructionPolicy::default(),
            prune_threshold: 0.9,
            accept_star_max: 0.2,
            redetect_prob: 0.5,
            min_star_belief: 0.02,
            parent_merge_m: 3500.0,
            max_iterations: 5,
            seed: 0,
            suggestors,
        }
    }
}

/// What one refine pass did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleReport {
    pub batch: u64,
    pub iterations: usize,
    pub suggestors_fired: usize,
    pub nets_built: usize,
    pub max_nodes: usize,
    pub pruned: Vec<PruneRecord>,
    pub guard_exceeded: bool,
    pub wall_ms: u128,
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CYCLE {} | suggestors_fired={} | nets={} | max_nodes={} | pruned={} | wall_ms={}",
            self.batch,
            self.suggestors_fired,
            self.nets_built,
            self.max_nodes,
            self.pruned.len(),
            self.wall_ms
        )
    }
}

/// Connected components of the instance set under associations (committed
/// and hypothetical), ordered by smallest member.
fn components(situation: &SituationModel) -> Vec<BTreeSet<InstanceId>> {
    let mut remaining: BTreeSet<InstanceId> = situation.instances.keys().cloned().collect();
    let mut out = Vec::new();
    while let Some(seed) = remaining.iter().next().cloned() {
        let comp = situation.association_component(std::slice::from_ref(&seed));
        let comp: BTreeSet<InstanceId> =
            comp.into_iter().filter(|i| remaining.contains(i)).collect();
        for i in &comp {
            remaining.remove(i);
        }
        out.push(comp);
    }
    out
}

/// Evaluates every association component of the situation and returns the
/// posterior marginal of each non-evidence single-attribute hypothesis
/// node, keyed by node id. Used for final readout and ad-hoc queries.
pub fn situation_posteriors(
    kb: &MebnKb,
    situation: &mut SituationModel,
    construction: &ConstructionPolicy,
    gate: &GatePolicy,
    assoc: &AssociationPolicy,
) -> Result<BTreeMap<String, Vec<(String, f64)>>, HypError> {
    let mut out = BTreeMap::new();
    for comp in components(situation) {
        let evidence: Vec<(HypothesisInstance, String)> = situation
            .evidence
            .iter()
            .filter(|e| e.node.bindings.iter().all(|b| comp.contains(b)))
            .map(|e| (e.node.clone(), e.state.clone()))
            .collect();
        let ev_ids: BTreeSet<String> =
            evidence.iter().map(|(n, _)| node_id(&n.hyp_type, &n.bindings)).collect();
        let mut targets = Vec::new();
        for i in &comp {
            let ety = situation.entity_type_of(i).unwrap_or_default().to_string();
            for h in &kb.hypothesis_types {
                if h.attrs.len() == 1 && h.attrs[0].1 == ety {
                    let ni =
                        HypothesisInstance { hyp_type: h.label.clone(), bindings: vec![i.clone()] };
                    if !ev_ids.contains(&node_id(&ni.hyp_type, &ni.bindings)) {
                        targets.push(ni);
                    }
                }
            }
        }
        if targets.is_empty() {
            continue;
        }
        let query = Query { targets, evidence };
        let mut enumerator = DefaultEnumerator { kb, gate: gate.clone(), assoc: assoc.clone() };
        let cn = construct_ssn(kb, situation, &query, construction, &mut enumerator)?;
        let minimal = minimalize(&cn, &query)?;
        let eval = evaluate_query(&minimal, &query, false)?;
        out.extend(eval.marginals);
    }
    Ok(out)
}

fn resolve_subject(
    situation: &mut SituationModel,
    kb: &MebnKb,
    subject: &SubjectRef,
    centroid: (f64, f64),
    merge_m: f64,
) -> Result<InstanceId, HypError> {
    match subject {
        SubjectRef::Existing(id) => {
            if !situation.is_live(id) {
                return Err(HypError::UnknownInstance(id.0.clone()));
            }
            Ok(id.clone())
        }
        SubjectRef::New { entity_type } => {
            let nearest = situation
                .instances
                .iter()
                .filter(|(_, i)| &i.entity_type == entity_type)
                .filter_map(|(id, i)| {
                    i.position.map(|p| (super::euclid(p, centroid), id.clone()))
                })
                .filter(|(d, _)| *d <= merge_m)
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            match nearest {
                Some((_, id)) => Ok(id),
                None => situation.new_instance(kb, entity_type, Some(centroid)),
            }
        }
    }
}

fn commit_nomination<R>(
    situation: &mut SituationModel,
    kb: &MebnKb,
    policies: &CyclePolicies<'_, R>,
    nom: &Nomination,
) -> Result<(), HypError> {
    let batch = situation.batch_no;
    let subject =
        resolve_subject(situation, kb, &nom.subject, nom.centroid, policies.gate.radius_m)?;
    if let Some(info) = situation.instances.get_mut(&subject) {
        info.last_support_batch = batch;
    }
    if let Some(parent_ref) = &nom.parent {
        let parent =
            resolve_subject(situation, kb, parent_ref, nom.centroid, policies.parent_merge_m)?;
        let pety = situation.entity_type_of(&parent).unwrap_or_default().to_string();
        if situation.association(&subject, &pety).is_none() {
            situation.nominate_association(&subject, &parent)?;
        }
        if let Some(info) = situation.instances.get_mut(&parent) {
            info.last_support_batch = batch;
        }
    }
    let rid = situation.new_instance(kb, &nom.report_entity, Some(nom.centroid))?;
    situation.nominate_association(&rid, &subject)?;
    for (hyp, state) in &nom.evidence {
        situation.add_evidence(
            HypothesisInstance { hyp_type: hyp.clone(), bindings: vec![rid.clone()] },
            state,
            nom.report_ids.clone(),
        );
    }
    situation.pool.retain(|r| !nom.report_ids.contains(r));
    Ok(())
}

/// Re-derives instance positions from their evidence sources: each filler
/// moves to the centroid of the positioned instances associated to it
/// (reports place units, units place companies).
fn refresh_positions(situation: &mut SituationModel) {
    for _ in 0..2 {
        let mut acc: BTreeMap<InstanceId, (f64, f64, usize)> = BTreeMap::new();
        for ((o, _), f) in situation.committed.iter().chain(situation.hypothetical.iter()) {
            if let Some((x, y)) = situation.instances.get(o).and_then(|i| i.position) {
                let e = acc.entry(f.clone()).or_insert((0.0, 0.0, 0));
                e.0 += x;
                e.1 += y;
                e.2 += 1;
            }
        }
        for (f, (x, y, n)) in acc {
            if let Some(info) = situation.instances.get_mut(&f) {
                info.position = Some((x / n as f64, y / n as f64));
            }
        }
    }
}

/// One full refine pass over a report batch. Deterministic given the
/// situation, batch, policies and seed. Iterates suggest → commit →
/// construct/evaluate → accept → prune until quiescent or the iteration
/// guard trips (reported via `guard_exceeded`; the situation is left at the
/// last completed iteration).
/// Id-free structural fingerprint of the hypothesis set, used to detect a
/// suggest/prune fixed cycle: fresh nominations get new instance ids every
/// iteration, so the comparison keys on entity types, positions, star
/// beliefs, evidence content, and the unconsumed report pool instead.
fn situation_signature(s: &SituationModel) -> String {
    let key = |id: &InstanceId| -> String {
        let info = &s.instances[id];
        format!("{}@{:?}~{:?}", info.entity_type, info.position, s.star_beliefs.get(id))
    };
    let mut inst: Vec<String> = s.instances.keys().map(&key).collect();
    inst.sort();
    let mut ev: Vec<String> = s
        .evidence
        .iter()
        .map(|e| {
            let owners: Vec<String> = e.node.bindings.iter().map(&key).collect();
            format!("{}={}:{:?}@{}", e.node.hyp_type, e.state, e.report_ids, owners.join("+"))
        })
        .collect();
    ev.sort();
    let mut links: Vec<String> = s
        .committed
        .iter()
        .map(|((o, ety), f)| format!("c:{}>{ety}>{}", key(o), key(f)))
        .chain(s.hypothetical.iter().map(|((o, ety), f)| {
            format!("h:{}>{ety}>{}", key(o), key(f))
        }))
        .collect();
    links.sort();
    let mut pool = s.pool.clone();
    pool.sort_unstable();
    format!("{inst:?}|{ev:?}|{links:?}|{pool:?}")
}

pub fn refine_cycle<R: ObservedReport>(
    kb: &MebnKb,
    situation: &mut SituationModel,
    batch: &[R],
    policies: &CyclePolicies<'_, R>,
) -> Result<CycleReport, HypError> {
    let t0 = Instant::now();
    situation.batch_no += 1;
    let mut report = CycleReport { batch: situation.batch_no, ..CycleReport::default() };
    let mut prev_argmax: BTreeMap<String, String> = BTreeMap::new();
    let mut seen_states: BTreeSet<String> = BTreeSet::new();
    seen_states.insert(situation_signature(situation));

    for _ in 0..policies.max_iterations {
        report.iterations += 1;

        // fire suggestors on reports not yet summarized into evidence
        let ingested: BTreeSet<u64> = situation
            .evidence
            .iter()
            .flat_map(|e| e.report_ids.iter().copied())
            .collect();
        let active: Vec<&R> = batch.iter().filter(|r| !ingested.contains(&r.id())).collect();
        let nominations =
            fire_suggestors(situation, &active, policies.suggestors, &policies.gate, policies.seed);
        report.suggestors_fired += nominations.len();
        for nom in &nominations {
            commit_nomination(situation, kb, policies, nom)?;
        }
        refresh_positions(situation);

        // evaluate each association component
        let mut changed = false;
        // best star posterior per instance: association nodes take
        // precedence over hypothesis nodes; first (smallest) node id wins
        let mut assoc_star: BTreeMap<(InstanceId, String), f64> = BTreeMap::new();
        let mut inst_star: BTreeMap<InstanceId, f64> = BTreeMap::new();
        let mut inst_star_is_assoc: BTreeSet<InstanceId> = BTreeSet::new();
        for comp in components(situation) {
            let evidence: Vec<(HypothesisInstance, String)> = situation
                .evidence
                .iter()
                .filter(|e| e.node.bindings.iter().all(|b| comp.contains(b)))
                .map(|e| (e.node.clone(), e.state.clone()))
                .collect();
            let ev_ids: BTreeSet<String> = evidence
                .iter()
                .map(|(n, _)| node_id(&n.hyp_type, &n.bindings))
                .collect();
            let mut targets = Vec::new();
            for i in &comp {
                let ety = situation.entity_type_of(i).unwrap_or_default().to_string();
                for h in &kb.hypothesis_types {
                    if h.attrs.len() == 1 && h.attrs[0].1 == ety {
                        let ni = HypothesisInstance {
                            hyp_type: h.label.clone(),
                            bindings: vec![i.clone()],
                        };
                        if !ev_ids.contains(&node_id(&ni.hyp_type, &ni.bindings)) {
                            targets.push(ni);
                        }
                    }
                }
            }
            if targets.is_empty() {
                continue;
            }
            let query = Query { targets, evidence };
            let mut enumerator = DefaultEnumerator {
                kb,
                gate: policies.gate.clone(),
                assoc: policies.assoc.clone(),
            };
            let cn = construct_ssn(kb, situation, &query, &policies.construction, &mut enumerator)?;
            let minimal = minimalize(&cn, &query)?;
            report.nets_built += 1;
            report.max_nodes = report.max_nodes.max(cn.net.len());
            let eval = evaluate_query(&minimal, &query, false)?;
            for (node, dist) in &eval.marginals {
                let argmax = dist
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(s, _)| s.clone())
                    .unwrap_or_default();
                if prev_argmax.get(node) != Some(&argmax) {
                    changed = true;
                }
                prev_argmax.insert(node.clone(), argmax);
            }
            for (node, p) in &eval.star_posteriors {
                match minimal.provenance.get(node) {
                    Some(NodeProvenance::Association { entity_type, owner, .. })
                        if owner.len() == 1 =>
                    {
                        assoc_star
                            .entry((owner[0].clone(), entity_type.clone()))
                            .or_insert(*p);
                        if inst_star_is_assoc.insert(owner[0].clone()) {
                            inst_star.insert(owner[0].clone(), *p);
                        }
                    }
                    Some(NodeProvenance::Fragment { binding, .. }) if binding.len() == 1 => {
                        if !inst_star_is_assoc.contains(&binding[0]) {
                            inst_star.entry(binding[0].clone()).or_insert(*p);
                        }
                    }
                    _ => {}
                }
            }
        }

        // star beliefs: evaluated value for freshly supported instances,
        // a silence Bayes update for the rest
        let batch_no = situation.batch_no;
        let ids: Vec<InstanceId> = situation.instances.keys().cloned().collect();
        for id in ids {
            let fresh = situation.instances[&id].last_support_batch == batch_no;
            let b = if fresh {
                inst_star.get(&id).copied().unwrap_or(0.0).max(policies.min_star_belief)
            } else {
                let prev = situation
                    .star_beliefs
                    .get(&id)
                    .copied()
                    .unwrap_or(policies.min_star_belief)
                    .max(policies.min_star_belief);
                // P(silence | real) = 1 - redetect_prob, P(silence | *) = 1
                let odds = prev / (1.0 - prev) / (1.0 - policies.redetect_prob);
                odds / (1.0 + odds)
            };
            situation.star_beliefs.insert(id, b);
        }

        // accept nominated associations the evidence has confirmed
        let pending: Vec<(InstanceId, String)> =
            situation.hypothetical.keys().cloned().collect();
        for (owner, ety) in pending {
            if let Some(&p) = assoc_star.get(&(owner.clone(), ety.clone())) {
                if p <= policies.accept_star_max {
                    situation.accept_association(&owner, &ety)?;
                }
            }
        }

        let pruned = prune_by_star(situation, policies.prune_threshold);
        let quiesced = nominations.is_empty() && pruned.is_empty() && !changed;
        report.pruned.extend(pruned);
        // a repeated situation state means the suggest/prune loop has hit a
        // fixed cycle (e.g. a degenerate prune threshold discarding every
        // fresh nomination); further iterations cannot make progress
        let fixed_point = !seen_states.insert(situation_signature(situation));
        if quiesced || fixed_point {
            report.wall_ms = t0.elapsed().as_millis();
            return Ok(report);
        }
    }
    report.guard_exceeded = true;
    report.wall_ms = t0.elapsed().as_millis();
    Ok(report)
}
