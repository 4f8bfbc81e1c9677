//! Hypothesis management: the situation model (live instances, committed
//! and hypothetical associations, evidence), suggestor firing over gated
//! report clusters, candidate enumeration under the association policy,
//! star-posterior pruning, and the refine cycle.

mod cycle;

pub use cycle::{
    refine_cycle, situation_posteriors, CycleReport, CyclePolicies, DefaultEnumerator,
};

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::kb::{HypothesisInstance, IdGenerator, InstanceId, KbError, MebnKb};

#[derive(Debug, Error, PartialEq)]
pub enum HypError {
    #[error("binomial: k = {k} exceeds n = {n}")]
    KExceedsN { n: u64, k: u64 },
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("instance `{id}` has entity type `{got}`, expected `{expected}`")]
    InstanceType { id: String, got: String, expected: String },
    #[error("no association from `{owner}` to a `{entity}` to accept")]
    NoSuchAssociation { owner: String, entity: String },
    #[error("refine cycle exceeded {0} iterations without stabilizing")]
    IterationGuard(usize),
    #[error("evidence has zero probability under every hypothesis")]
    InconsistentEvidence,
    #[error("construction failed: {0}")]
    Construct(String),
    #[error(transparent)]
    Kb(#[from] KbError),
}

/// One live hypothesis instance of the situation.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceInfo {
    pub entity_type: String,
    /// Last known 2-D position in meters, if the domain provides one.
    pub position: Option<(f64, f64)>,
    pub created_batch: u64,
    /// Batch in which this instance last received fresh evidence (directly
    /// or through an associated instance).
    pub last_support_batch: u64,
}

/// One ingested finding: an observed state of a fully bound node instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceEntry {
    pub node: HypothesisInstance,
    pub state: String,
    /// Raw report ids summarized into this finding.
    pub report_ids: Vec<u64>,
    pub batch: u64,
}

/// The current hypothesis set: live instances, associations (committed =
/// definite, hypothetical = nominee-vs-`*`), the evidence log, and the
/// last-known P(`*`) per instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SituationModel {
    pub idgen: IdGenerator,
    pub instances: BTreeMap<InstanceId, InstanceInfo>,
    /// `(owner, filler entity type) -> filler`; definite bindings.
    pub committed: BTreeMap<(InstanceId, String), InstanceId>,
    /// Nominated but not yet accepted bindings (evaluated against `*`).
    pub hypothetical: BTreeMap<(InstanceId, String), InstanceId>,
    pub evidence: Vec<EvidenceEntry>,
    pub star_beliefs: BTreeMap<InstanceId, f64>,
    /// Raw report ids detached by pruning, awaiting re-clustering.
    pub pool: Vec<u64>,
    pub batch_no: u64,
}

impl SituationModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_instance(
        &mut self,
        kb: &MebnKb,
        entity_type: &str,
        position: Option<(f64, f64)>,
    ) -> Result<InstanceId, HypError> {
        let id = kb.create_instance(&mut self.idgen, entity_type)?;
        self.instances.insert(
            id.clone(),
            InstanceInfo {
                entity_type: entity_type.to_string(),
                position,
                created_batch: self.batch_no,
                last_support_batch: self.batch_no,
            },
        );
        Ok(id)
    }

    pub fn is_live(&self, id: &InstanceId) -> bool {
        self.instances.contains_key(id)
    }

    pub fn entity_type_of(&self, id: &InstanceId) -> Option<&str> {
        self.instances.get(id).map(|i| i.entity_type.as_str())
    }

    pub fn instances_of_type(&self, entity_type: &str) -> Vec<&InstanceId> {
        self.instances
            .iter()
            .filter(|(_, i)| i.entity_type == entity_type)
            .map(|(id, _)| id)
            .collect()
    }

    fn check_live(&self, id: &InstanceId) -> Result<(), HypError> {
        if self.is_live(id) {
            Ok(())
        } else {
            Err(HypError::UnknownInstance(id.0.clone()))
        }
    }

    /// Records a definite association `owner -> filler`.
    pub fn commit_association(
        &mut self,
        owner: &InstanceId,
        filler: &InstanceId,
    ) -> Result<(), HypError> {
        self.check_live(owner)?;
        self.check_live(filler)?;
        let ety = self.entity_type_of(filler).unwrap().to_string();
        self.hypothetical.remove(&(owner.clone(), ety.clone()));
        self.committed.insert((owner.clone(), ety), filler.clone());
        Ok(())
    }

    /// Records a nominated association, to be weighed against `*`.
    pub fn nominate_association(
        &mut self,
        owner: &InstanceId,
        filler: &InstanceId,
    ) -> Result<(), HypError> {
        self.check_live(owner)?;
        self.check_live(filler)?;
        let ety = self.entity_type_of(filler).unwrap().to_string();
        if !self.committed.contains_key(&(owner.clone(), ety.clone())) {
            self.hypothetical.insert((owner.clone(), ety), filler.clone());
        }
        Ok(())
    }

    /// Promotes a hypothetical association to committed.
    pub fn accept_association(
        &mut self,
        owner: &InstanceId,
        entity_type: &str,
    ) -> Result<(), HypError> {
        let key = (owner.clone(), entity_type.to_string());
        match self.hypothetical.remove(&key) {
            Some(filler) => {
                self.committed.insert(key, filler);
                Ok(())
            }
            None => Err(HypError::NoSuchAssociation {
                owner: owner.0.clone(),
                entity: entity_type.to_string(),
            }),
        }
    }

    /// The current filler of `owner`'s slot for `entity_type`, with whether
    /// it is committed.
    pub fn association(&self, owner: &InstanceId, entity_type: &str) -> Option<(&InstanceId, bool)> {
        let key = (owner.clone(), entity_type.to_string());
        if let Some(f) = self.committed.get(&key) {
            return Some((f, true));
        }
        self.hypothetical.get(&key).map(|f| (f, false))
    }

    pub fn add_evidence(
        &mut self,
        node: HypothesisInstance,
        state: &str,
        report_ids: Vec<u64>,
    ) {
        let batch = self.batch_no;
        for b in &node.bindings {
            if let Some(info) = self.instances.get_mut(b) {
                info.last_support_batch = batch;
            }
        }
        self.evidence.push(EvidenceEntry {
            node,
            state: state.to_string(),
            report_ids,
            batch,
        });
    }

    /// Instances transitively reachable from `roots` through associations
    /// (in either direction), including the roots.
    pub fn association_component(&self, roots: &[InstanceId]) -> BTreeSet<InstanceId> {
        let mut seen: BTreeSet<InstanceId> = roots.iter().cloned().collect();
        let links = self.committed.iter().chain(self.hypothetical.iter());
        let edges: Vec<(&InstanceId, &InstanceId)> =
            links.map(|((o, _), f)| (o, f)).collect();
        loop {
            let mut grew = false;
            for (o, f) in &edges {
                if seen.contains(*o) != seen.contains(*f) {
                    seen.insert((*o).clone());
                    seen.insert((*f).clone());
                    grew = true;
                }
            }
            if !grew {
                return seen;
            }
        }
    }

    /// No committed or hypothetical association, and no evidence, may
    /// reference a dead instance.
    pub fn check_references(&self) -> Result<(), HypError> {
        for ((o, _), f) in self.committed.iter().chain(self.hypothetical.iter()) {
            self.check_live(o)?;
            self.check_live(f)?;
        }
        for e in &self.evidence {
            for b in &e.node.bindings {
                self.check_live(b)?;
            }
        }
        Ok(())
    }
}

/// Spatial gate for clustering and candidate screening.
#[derive(Debug, Clone)]
pub struct GatePolicy {
    pub radius_m: f64,
    pub max_candidates: usize,
}

impl Default for GatePolicy {
    fn default() -> Self {
        GatePolicy { radius_m: 500.0, max_candidates: 8 }
    }
}

/// How many association alternatives are carried per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocMode {
    /// Only the suggestor's nominee versus `*` (default).
    SingleHypothesis,
    /// All gated live instances plus optionally one new instance.
    MultiHypothesis,
}

#[derive(Debug, Clone)]
pub struct AssociationPolicy {
    pub mode: AssocMode,
    pub new_instance_allowed: bool,
}

impl Default for AssociationPolicy {
    fn default() -> Self {
        AssociationPolicy { mode: AssocMode::SingleHypothesis, new_instance_allowed: true }
    }
}

/// Anything hypman can gate and cluster: an identified 2-D observation.
pub trait ObservedReport {
    fn id(&self) -> u64;
    fn position(&self) -> (f64, f64);
}

impl<R: ObservedReport> ObservedReport for &R {
    fn id(&self) -> u64 {
        (**self).id()
    }
    fn position(&self) -> (f64, f64) {
        (**self).position()
    }
}

pub fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Single-linkage clustering at the gate radius. Returns clusters as sorted
/// index lists, ordered by their smallest index; ties within a cluster
/// follow report id order of the input.
pub fn distance_gate<R: ObservedReport>(reports: &[R], policy: &GatePolicy) -> Vec<Vec<usize>> {
    let n = reports.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if euclid(reports[i].position(), reports[j].position()) <= policy.radius_m {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    // root at the smaller index for deterministic output
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Exact binomial coefficient C(n, k) by the multiplicative formula;
/// exact (no rounding) for all n ≤ 120.
pub fn binomial(n: u64, k: u64) -> Result<u128, HypError> {
    if k > n {
        return Err(HypError::KExceedsN { n, k });
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // (acc * (n-k+i)) is always divisible by i at this point
        acc = acc * u128::from(n - k + i) / u128::from(i);
    }
    Ok(acc)
}

/// How many k-vehicle platoon hypotheses n ungated reports admit: C(n, k).
pub fn count_ungated_candidates(n_reports: u64, platoon_size: u64) -> Result<u128, HypError> {
    binomial(n_reports, platoon_size)
}

/// Ordered association candidates for a slot of `entity_type` near
/// `origin`. Single-hypothesis mode yields exactly the nominee (the `*`
/// alternative is added downstream); multi-hypothesis mode yields gated
/// live instances nearest-first (id tie-break), capped, plus one new
/// instance if allowed.
pub fn enumerate_association_candidates(
    kb: &MebnKb,
    situation: &mut SituationModel,
    entity_type: &str,
    origin: Option<(f64, f64)>,
    nominee: Option<&InstanceId>,
    gate: &GatePolicy,
    assoc: &AssociationPolicy,
) -> Result<Vec<InstanceId>, HypError> {
    match assoc.mode {
        AssocMode::SingleHypothesis => match nominee {
            Some(n) => {
                situation.check_live(n)?;
                Ok(vec![n.clone()])
            }
            None if assoc.new_instance_allowed => {
                Ok(vec![situation.new_instance(kb, entity_type, origin)?])
            }
            None => Ok(Vec::new()),
        },
        AssocMode::MultiHypothesis => {
            let mut scored: Vec<(f64, InstanceId)> = situation
                .instances
                .iter()
                .filter(|(_, i)| i.entity_type == entity_type)
                .filter_map(|(id, i)| match (origin, i.position) {
                    (Some(o), Some(p)) => {
                        let d = euclid(o, p);
                        (d <= gate.radius_m).then_some((d, id.clone()))
                    }
                    // no geometry on either side: no basis for exclusion
                    _ => Some((0.0, id.clone())),
                })
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            scored.truncate(gate.max_candidates);
            let mut out: Vec<InstanceId> = scored.into_iter().map(|(_, id)| id).collect();
            if assoc.new_instance_allowed {
                out.push(situation.new_instance(kb, entity_type, origin)?);
            }
            Ok(out)
        }
    }
}

/// A gated cluster of one batch's reports, as handed to suggestors.
#[derive(Debug)]
pub struct Cluster<'a, R> {
    pub indices: Vec<usize>,
    pub members: Vec<&'a R>,
    pub centroid: (f64, f64),
}

/// Reference to an association filler: a live instance or a new one to be
/// created on commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectRef {
    Existing(InstanceId),
    New { entity_type: String },
}

/// One suggestor output: a report-level summary finding plus the entity it
/// is nominated to associate with (and optionally that entity's parent).
#[derive(Debug, Clone, PartialEq)]
pub struct Nomination {
    pub suggestor: String,
    pub report_ids: Vec<u64>,
    pub centroid: (f64, f64),
    /// Entity type of the created summary-report instance.
    pub report_entity: String,
    /// Findings attached to the summary report: `(hypothesis type, state)`.
    pub evidence: Vec<(String, String)>,
    /// The entity nominated as the report's source.
    pub subject: SubjectRef,
    /// Nominated parent association for a new subject (e.g. its company).
    pub parent: Option<SubjectRef>,
}

/// A trigger rule mapping report clusters and situation features to
/// nominations. Must be deterministic given its inputs and seed.
pub trait Suggestor<R> {
    fn name(&self) -> &str;
    fn suggest(&self, situation: &SituationModel, cluster: &Cluster<'_, R>, seed: u64)
        -> Vec<Nomination>;
}

/// Gates the batch and fires every suggestor on every cluster, in order;
/// output order is (cluster, suggestor) and thus deterministic.
pub fn fire_suggestors<R: ObservedReport>(
    situation: &SituationModel,
    batch: &[&R],
    suggestors: &[Box<dyn Suggestor<R>>],
    gate: &GatePolicy,
    seed: u64,
) -> Vec<Nomination> {
    let mut out = Vec::new();
    for indices in distance_gate(batch, gate) {
        let members: Vec<&R> = indices.iter().map(|&i| batch[i]).collect();
        let n = members.len() as f64;
        let centroid = members
            .iter()
            .fold((0.0, 0.0), |acc, r| (acc.0 + r.position().0, acc.1 + r.position().1));
        let cluster =
            Cluster { indices, members, centroid: (centroid.0 / n, centroid.1 / n) };
        for s in suggestors {
            out.extend(s.suggest(situation, &cluster, seed));
        }
    }
    out
}

/// One pruned instance and the posterior that condemned it.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneRecord {
    pub instance: InstanceId,
    pub entity_type: String,
    pub star_posterior: f64,
}

/// Removes every instance whose P(`*`) meets the threshold, together with
/// its associations and evidence (raw reports return to the pool). An
/// instance referenced by a committed association of a surviving instance
/// is kept regardless of its posterior.
pub fn prune_by_star(situation: &mut SituationModel, threshold: f64) -> Vec<PruneRecord> {
    let mut base: BTreeSet<InstanceId> = situation
        .star_beliefs
        .iter()
        .filter(|(id, &p)| p >= threshold && situation.is_live(id))
        .map(|(id, _)| id.clone())
        .collect();
    let is_evidence_owner = |situation: &SituationModel, id: &InstanceId| {
        situation.evidence.iter().any(|e| e.node.bindings.contains(id))
    };
    // Fixpoint over two opposing rules: evidence-bearing owners whose
    // association target dies die with it (cascade), while a committed
    // reference from any survivor keeps its target alive (rescue, which
    // shrinks the base set and so terminates).
    let mut doomed = BTreeSet::new();
    for _ in 0..=situation.instances.len() {
        let mut next = base.clone();
        loop {
            let orphans: Vec<InstanceId> = situation
                .hypothetical
                .iter()
                .chain(situation.committed.iter())
                .filter(|((o, _), f)| next.contains(f) && !next.contains(o))
                .map(|((o, _), _)| o.clone())
                .filter(|o| is_evidence_owner(situation, o))
                .collect();
            if orphans.is_empty() {
                break;
            }
            next.extend(orphans);
        }
        let rescued: Vec<InstanceId> = next
            .iter()
            .filter(|d| base.contains(*d))
            .filter(|d| {
                situation.committed.iter().any(|((o, _), f)| &f == d && !next.contains(o))
            })
            .cloned()
            .collect();
        if rescued.is_empty() {
            doomed = next;
            break;
        }
        for r in rescued {
            base.remove(&r);
        }
    }
    let mut log = Vec::new();
    for d in &doomed {
        let info = situation.instances.remove(d).expect("doomed instance is live");
        log.push(PruneRecord {
            instance: d.clone(),
            entity_type: info.entity_type,
            star_posterior: situation.star_beliefs.get(d).copied().unwrap_or(1.0),
        });
        situation.star_beliefs.remove(d);
    }
    situation.committed.retain(|(o, _), f| !doomed.contains(o) && !doomed.contains(f));
    situation.hypothetical.retain(|(o, _), f| !doomed.contains(o) && !doomed.contains(f));
    let mut freed: Vec<u64> = Vec::new();
    situation.evidence.retain(|e| {
        if e.node.bindings.iter().any(|b| doomed.contains(b)) {
            freed.extend(&e.report_ids);
            false
        } else {
            true
        }
    });
    situation.pool.extend(freed);
    situation.pool.sort_unstable();
    situation.pool.dedup();
    log
}

#[cfg(test)]
mod tests;
