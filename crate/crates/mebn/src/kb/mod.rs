//! The MEBN knowledge base: entity types, hypothesis types, BN fragment
//! types with derived association hypotheses, whole-KB validation, and the
//! KB text format.

mod parse;
mod write;

pub use parse::{parse_kb, ParseError};
pub use write::save_kb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::STAR;

#[derive(Debug, Error, PartialEq)]
pub enum KbError {
    #[error("duplicate entity type `{0}`")]
    DuplicateEntity(String),
    #[error("duplicate hypothesis type `{0}`")]
    DuplicateHypType(String),
    #[error("duplicate fragment `{0}`")]
    DuplicateFragment(String),
    #[error("unknown entity type `{0}`")]
    UnknownEntity(String),
    #[error("unknown hypothesis type `{0}`")]
    UnknownHypType(String),
    #[error("hypothesis type `{0}`: identifying attributes must be non-empty")]
    EmptyAttrs(String),
    #[error("hypothesis type `{0}`: value set must be non-empty")]
    EmptyValues(String),
    #[error("hypothesis type `{label}`: duplicate attribute `{attr}`")]
    DuplicateAttr { label: String, attr: String },
    #[error("hypothesis type `{label}`: duplicate value `{value}`")]
    DuplicateValue { label: String, value: String },
    #[error("`*` is reserved and may not be declared")]
    StarReserved,
    #[error("fragment `{frag}`: duplicate fragment attribute `{attr}`")]
    DuplicateFragAttr { frag: String, attr: String },
    #[error("fragment `{frag}`: node `{node}` appears more than once")]
    DuplicateNode { frag: String, node: String },
    #[error("fragment `{frag}`: `{hyp}` has {got} attribute bindings, expected {expected}")]
    AttrArity { frag: String, hyp: String, got: usize, expected: usize },
    #[error("fragment `{frag}`: `{hyp}` attribute `{attr}` is not a fragment attribute")]
    UnknownFragAttr { frag: String, hyp: String, attr: String },
    #[error("fragment `{frag}`: `{hyp}` attribute `{attr}` has entity type `{got}`, fragment slot is `{expected}`")]
    AttrTypeMismatch { frag: String, hyp: String, attr: String, got: String, expected: String },
    #[error("fragment `{frag}`: input `{hyp}` must be a root in the fragment graph")]
    InputNotRoot { frag: String, hyp: String },
    #[error("fragment `{frag}`: edge references `{hyp}` which is not a fragment node")]
    EdgeUnknownNode { frag: String, hyp: String },
    #[error("fragment `{frag}`: edge endpoint `{hyp}` bound to different attributes than its node declaration")]
    EdgeBindingMismatch { frag: String, hyp: String },
    #[error("fragment `{frag}`: fragment graph has a directed cycle involving `{hyp}`")]
    FragmentCycle { frag: String, hyp: String },
    #[error("fragment `{frag}`: resident `{hyp}` has no cpt")]
    MissingCpt { frag: String, hyp: String },
    #[error("fragment `{frag}`: cpt given for `{hyp}` which is not resident")]
    CptForNonResident { frag: String, hyp: String },
    #[error("fragment `{frag}`: cpt for `{hyp}` missing row for parent combination {combo}")]
    MissingCptRow { frag: String, hyp: String, combo: String },
    #[error("fragment `{frag}`: cpt for `{hyp}` has duplicate row for parent combination {combo}")]
    DuplicateCptRow { frag: String, hyp: String, combo: String },
    #[error("fragment `{frag}`: cpt row for `{hyp}` conditions on `{parent}` which is not a parent")]
    NotAParent { frag: String, hyp: String, parent: String },
    #[error("fragment `{frag}`: cpt row for `{hyp}` has {got} entries, expected {expected}")]
    CptWidth { frag: String, hyp: String, got: usize, expected: usize },
    #[error("fragment `{frag}`: cpt row for `{hyp}` not normalized (sum {sum})")]
    CptRowSum { frag: String, hyp: String, sum: f64 },
    #[error("fragment `{frag}`: unknown state `{state}` for parent `{parent}`")]
    UnknownParentState { frag: String, parent: String, state: String },
    #[error("fragment `{frag}`: star prior for `{entity}` must lie in (0,1), got {value}")]
    StarPriorRange { frag: String, entity: String, value: f64 },
    #[error("fragment `{frag}`: association name `{name}` collides with a hypothesis type label")]
    AssocNameClash { frag: String, name: String },
}

/// A domain of entities; instance ids are drawn per entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityType {
    pub label: String,
    /// Prefix for generated instance ids (`u1`, `r3`, ...). Defaults to the
    /// lowercased first letter of the label.
    pub prefix: String,
}

/// A typed random-variable template (Def 1): type label, identifying
/// attributes, atomic value set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisType {
    pub label: String,
    /// `(attribute_name, entity_type_label)`, non-empty. The implicit
    /// identifier attribute is realized by the generated node-instance id.
    pub attrs: Vec<(String, String)>,
    pub values: Vec<String>,
}

/// Unique identifier of one hypothesis/entity instance, e.g. `u1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstanceId(pub String);

impl InstanceId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
    /// `(prefix, counter)` split for numeric ordering of generated ids.
    fn sort_key(&self) -> (String, u64) {
        let split = self.0.find(|c: char| c.is_ascii_digit()).unwrap_or(self.0.len());
        let (p, n) = self.0.split_at(split);
        (p.to_string(), n.parse().unwrap_or(0))
    }
}

impl Ord for InstanceId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for InstanceId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A bound hypothesis instance (Def 2): a hypothesis type plus one instance
/// id per identifying attribute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct HypothesisInstance {
    pub hyp_type: String,
    pub bindings: Vec<InstanceId>,
}

/// Reference to a node within a fragment: a hypothesis type and, per
/// identifying attribute, the fragment attribute it corresponds to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentNodeRef {
    pub hyp_type: String,
    pub attrs: Vec<String>,
}

/// A resident node's local distribution: rows keyed by one state per parent
/// (in `parent_order`), each a distribution over the resident's value set.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentCpt {
    pub parent_order: Vec<String>,
    /// Row-major over parent value sets (first parent most significant).
    pub rows: Vec<Vec<f64>>,
}

/// An association hypothesis type derived per Def 4: for fragment attribute
/// `z`, when a resident node omits `z` but one of its parents refers to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationHypothesisType {
    pub fragment_id: String,
    /// The fragment attribute whose filler is uncertain.
    pub target_attr: String,
    /// Entity type of `target_attr`; the value domain is that type's
    /// instance ids plus `*`.
    pub entity_type: String,
    /// Uppercased `target_attr`; `U(r)` style node ids come from this.
    pub name: String,
    /// Identifying attributes: those of the conditioned children (never
    /// including `target_attr`), as `(fragment_attr, entity_type)`.
    pub id_attrs: Vec<(String, String)>,
    /// Resident nodes whose distribution is conditioned on this hypothesis.
    pub conditioned_children: Vec<String>,
}

/// A reusable conditional-probability template (Def 3) together with its
/// derived association hypotheses (Def 4).
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentType {
    pub id: String,
    pub attrs: Vec<(String, String)>,
    pub inputs: Vec<FragmentNodeRef>,
    pub residents: Vec<FragmentNodeRef>,
    /// Directed edges between fragment nodes, by hypothesis type label.
    pub edges: Vec<(String, String)>,
    pub cpts: BTreeMap<String, FragmentCpt>,
    /// Optional per-entity-type prior mass on `*` for root instances
    /// hypothesized under this fragment.
    pub star_priors: BTreeMap<String, f64>,
    pub associations: Vec<AssociationHypothesisType>,
}

impl FragmentType {
    pub fn node_ref(&self, hyp: &str) -> Option<&FragmentNodeRef> {
        self.residents
            .iter()
            .chain(&self.inputs)
            .find(|r| r.hyp_type == hyp)
    }

    pub fn is_resident(&self, hyp: &str) -> bool {
        self.residents.iter().any(|r| r.hyp_type == hyp)
    }

    /// Parents of a node in edge-declaration order.
    pub fn parents_of(&self, hyp: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(_, c)| c == hyp)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn entity_of_attr(&self, attr: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(a, _)| a == attr)
            .map(|(_, e)| e.as_str())
    }
}

/// An instance of a fragment type: a type-consistent assignment of instance
/// ids to the fragment attributes. All instances encode the CPTs of their
/// type (exchangeability).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentInstance {
    pub fragment_id: String,
    pub binding: BTreeMap<String, InstanceId>,
}

/// Monotone per-entity-type id source; issued ids are never reused.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdGenerator {
    counters: BTreeMap<String, u64>,
}

impl IdGenerator {
    pub fn next_id(&mut self, prefix: &str) -> InstanceId {
        let c = self.counters.entry(prefix.to_string()).or_insert(0);
        *c += 1;
        InstanceId(format!("{prefix}{c}"))
    }

    pub fn counters(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counters.iter().map(|(p, &c)| (p.as_str(), c))
    }

    /// Raises the counter for `prefix` to at least `value`; used when
    /// restoring a saved situation.
    pub fn advance_to(&mut self, prefix: &str, value: u64) {
        let c = self.counters.entry(prefix.to_string()).or_insert(0);
        *c = (*c).max(value);
    }
}

/// A validated-on-mutation MEBN knowledge base (Def 5 checked separately by
/// [`validate_mebn`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MebnKb {
    pub entity_types: Vec<EntityType>,
    pub hypothesis_types: Vec<HypothesisType>,
    pub fragment_types: Vec<FragmentType>,
}

/// Declarative fragment description, validated by [`MebnKb::declare_fragment_type`].
#[derive(Debug, Clone)]
pub struct FragmentSpec {
    pub id: String,
    pub attrs: Vec<(String, String)>,
    pub inputs: Vec<FragmentNodeRef>,
    pub residents: Vec<FragmentNodeRef>,
    pub edges: Vec<(String, String)>,
    /// `(resident, parent states keyed by parent label, distribution)`.
    pub cpt_rows: Vec<(String, BTreeMap<String, String>, Vec<f64>)>,
    pub star_priors: BTreeMap<String, f64>,
}

impl MebnKb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&self, label: &str) -> Option<&EntityType> {
        self.entity_types.iter().find(|e| e.label == label)
    }

    pub fn hyp_type(&self, label: &str) -> Option<&HypothesisType> {
        self.hypothesis_types.iter().find(|h| h.label == label)
    }

    pub fn fragment(&self, id: &str) -> Option<&FragmentType> {
        self.fragment_types.iter().find(|f| f.id == id)
    }

    /// The unique fragment in which `hyp` is resident, if any.
    pub fn resident_fragment(&self, hyp: &str) -> Option<&FragmentType> {
        self.fragment_types.iter().find(|f| f.is_resident(hyp))
    }

    pub fn declare_entity_type(&mut self, label: &str) -> Result<(), KbError> {
        let prefix = label
            .chars()
            .next()
            .map(|c| c.to_ascii_lowercase().to_string())
            .unwrap_or_default();
        self.declare_entity_type_with_prefix(label, &prefix)
    }

    pub fn declare_entity_type_with_prefix(
        &mut self,
        label: &str,
        prefix: &str,
    ) -> Result<(), KbError> {
        if label == STAR {
            return Err(KbError::StarReserved);
        }
        if self.entity(label).is_some() {
            return Err(KbError::DuplicateEntity(label.to_string()));
        }
        self.entity_types.push(EntityType { label: label.to_string(), prefix: prefix.to_string() });
        Ok(())
    }

    pub fn declare_hypothesis_type(
        &mut self,
        label: &str,
        attrs: &[(&str, &str)],
        values: &[&str],
    ) -> Result<(), KbError> {
        if label == STAR {
            return Err(KbError::StarReserved);
        }
        if self.hyp_type(label).is_some() {
            return Err(KbError::DuplicateHypType(label.to_string()));
        }
        if attrs.is_empty() {
            return Err(KbError::EmptyAttrs(label.to_string()));
        }
        if values.is_empty() {
            return Err(KbError::EmptyValues(label.to_string()));
        }
        let mut seen = BTreeSet::new();
        for (a, e) in attrs {
            if self.entity(e).is_none() {
                return Err(KbError::UnknownEntity(e.to_string()));
            }
            if !seen.insert(*a) {
                return Err(KbError::DuplicateAttr { label: label.to_string(), attr: a.to_string() });
            }
        }
        let mut vseen = BTreeSet::new();
        for v in values {
            if *v == STAR {
                return Err(KbError::StarReserved);
            }
            if !vseen.insert(*v) {
                return Err(KbError::DuplicateValue {
                    label: label.to_string(),
                    value: v.to_string(),
                });
            }
        }
        self.hypothesis_types.push(HypothesisType {
            label: label.to_string(),
            attrs: attrs.iter().map(|(a, e)| (a.to_string(), e.to_string())).collect(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        Ok(())
    }

    /// Issues a fresh instance id for an entity type.
    pub fn create_instance(
        &self,
        idgen: &mut IdGenerator,
        entity_type: &str,
    ) -> Result<InstanceId, KbError> {
        let e = self
            .entity(entity_type)
            .ok_or_else(|| KbError::UnknownEntity(entity_type.to_string()))?;
        Ok(idgen.next_id(&e.prefix))
    }

    /// Validates a fragment spec (Def 3), derives its association hypotheses
    /// (Def 4) and registers it.
    pub fn declare_fragment_type(&mut self, spec: FragmentSpec) -> Result<(), KbError> {
        if self.fragment(&spec.id).is_some() {
            return Err(KbError::DuplicateFragment(spec.id.clone()));
        }
        let frag = self.build_fragment(spec)?;
        self.fragment_types.push(frag);
        Ok(())
    }

    fn build_fragment(&self, spec: FragmentSpec) -> Result<FragmentType, KbError> {
        let fid = &spec.id;
        let mut attr_seen = BTreeSet::new();
        for (a, e) in &spec.attrs {
            if self.entity(e).is_none() {
                return Err(KbError::UnknownEntity(e.clone()));
            }
            if !attr_seen.insert(a.clone()) {
                return Err(KbError::DuplicateFragAttr { frag: fid.clone(), attr: a.clone() });
            }
        }
        let mut node_seen = BTreeSet::new();
        for r in spec.inputs.iter().chain(&spec.residents) {
            let ht = self
                .hyp_type(&r.hyp_type)
                .ok_or_else(|| KbError::UnknownHypType(r.hyp_type.clone()))?;
            if !node_seen.insert(r.hyp_type.clone()) {
                return Err(KbError::DuplicateNode { frag: fid.clone(), node: r.hyp_type.clone() });
            }
            if r.attrs.len() != ht.attrs.len() {
                return Err(KbError::AttrArity {
                    frag: fid.clone(),
                    hyp: r.hyp_type.clone(),
                    got: r.attrs.len(),
                    expected: ht.attrs.len(),
                });
            }
            // correspondence must be total and type-correct
            for (fa, (_, ety)) in r.attrs.iter().zip(&ht.attrs) {
                let slot = spec
                    .attrs
                    .iter()
                    .find(|(a, _)| a == fa)
                    .ok_or_else(|| KbError::UnknownFragAttr {
                        frag: fid.clone(),
                        hyp: r.hyp_type.clone(),
                        attr: fa.clone(),
                    })?;
                if &slot.1 != ety {
                    return Err(KbError::AttrTypeMismatch {
                        frag: fid.clone(),
                        hyp: r.hyp_type.clone(),
                        attr: fa.clone(),
                        got: ety.clone(),
                        expected: slot.1.clone(),
                    });
                }
            }
        }
        for (p, c) in &spec.edges {
            for end in [p, c] {
                if !node_seen.contains(end) {
                    return Err(KbError::EdgeUnknownNode { frag: fid.clone(), hyp: end.clone() });
                }
            }
            if spec.inputs.iter().any(|i| &i.hyp_type == c) {
                return Err(KbError::InputNotRoot { frag: fid.clone(), hyp: c.clone() });
            }
        }
        // fragment graph acyclicity
        let labels: Vec<&String> =
            spec.inputs.iter().chain(&spec.residents).map(|r| &r.hyp_type).collect();
        let mut indeg: BTreeMap<&String, usize> = labels.iter().map(|&l| (l, 0)).collect();
        for (_, c) in &spec.edges {
            *indeg.get_mut(c).unwrap() += 1;
        }
        let mut queue: Vec<&String> =
            indeg.iter().filter(|(_, &d)| d == 0).map(|(&l, _)| l).collect();
        let mut removed = 0;
        while let Some(l) = queue.pop() {
            removed += 1;
            for (p, c) in &spec.edges {
                if p == l {
                    let d = indeg.get_mut(c).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        queue.push(c);
                    }
                }
            }
        }
        if removed != labels.len() {
            let culprit = indeg
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(&l, _)| l.clone())
                .unwrap_or_default();
            return Err(KbError::FragmentCycle { frag: fid.clone(), hyp: culprit });
        }
        for (e, v) in &spec.star_priors {
            if self.entity(e).is_none() {
                return Err(KbError::UnknownEntity(e.clone()));
            }
            if !(*v > 0.0 && *v < 1.0) {
                return Err(KbError::StarPriorRange {
                    frag: fid.clone(),
                    entity: e.clone(),
                    value: *v,
                });
            }
        }

        let mut frag = FragmentType {
            id: spec.id.clone(),
            attrs: spec.attrs.clone(),
            inputs: spec.inputs.clone(),
            residents: spec.residents.clone(),
            edges: spec.edges.clone(),
            cpts: BTreeMap::new(),
            star_priors: spec.star_priors.clone(),
            associations: Vec::new(),
        };
        frag.cpts = self.assemble_cpts(&frag, &spec.cpt_rows)?;
        frag.associations = derive_association_hypotheses(self, &frag)?;
        Ok(frag)
    }

    /// Groups named cpt rows into row-major tables, requiring exactly one row
    /// per parent state combination.
    fn assemble_cpts(
        &self,
        frag: &FragmentType,
        rows: &[(String, BTreeMap<String, String>, Vec<f64>)],
    ) -> Result<BTreeMap<String, FragmentCpt>, KbError> {
        let fid = &frag.id;
        let mut out: BTreeMap<String, FragmentCpt> = BTreeMap::new();
        let mut filled: BTreeMap<String, Vec<bool>> = BTreeMap::new();
        for (hyp, conds, dist) in rows {
            if !frag.is_resident(hyp) {
                if frag.node_ref(hyp).is_some() {
                    return Err(KbError::CptForNonResident { frag: fid.clone(), hyp: hyp.clone() });
                }
                return Err(KbError::UnknownHypType(hyp.clone()));
            }
            let ht = self.hyp_type(hyp).unwrap();
            let parents = frag.parents_of(hyp);
            let parent_cards: Vec<usize> = parents
                .iter()
                .map(|p| self.hyp_type(p).unwrap().values.len())
                .collect();
            let n_rows: usize = parent_cards.iter().product();
            let entry = out.entry(hyp.clone()).or_insert_with(|| FragmentCpt {
                parent_order: parents.iter().map(|p| p.to_string()).collect(),
                rows: vec![Vec::new(); n_rows],
            });
            let seen = filled.entry(hyp.clone()).or_insert_with(|| vec![false; n_rows]);
            for p in conds.keys() {
                if !parents.contains(&p.as_str()) {
                    return Err(KbError::NotAParent {
                        frag: fid.clone(),
                        hyp: hyp.clone(),
                        parent: p.clone(),
                    });
                }
            }
            let mut idx = 0usize;
            for (p, &card) in parents.iter().zip(&parent_cards) {
                let state = conds.get(*p).ok_or_else(|| KbError::MissingCptRow {
                    frag: fid.clone(),
                    hyp: hyp.clone(),
                    combo: format!("{p}=?"),
                })?;
                let k = self
                    .hyp_type(p)
                    .unwrap()
                    .values
                    .iter()
                    .position(|v| v == state)
                    .ok_or_else(|| KbError::UnknownParentState {
                        frag: fid.clone(),
                        parent: p.to_string(),
                        state: state.clone(),
                    })?;
                idx = idx * card + k;
            }
            if dist.len() != ht.values.len() {
                return Err(KbError::CptWidth {
                    frag: fid.clone(),
                    hyp: hyp.clone(),
                    got: dist.len(),
                    expected: ht.values.len(),
                });
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > crate::bn::NORM_TOL || dist.iter().any(|&v| v < 0.0) {
                return Err(KbError::CptRowSum { frag: fid.clone(), hyp: hyp.clone(), sum });
            }
            if seen[idx] {
                return Err(KbError::DuplicateCptRow {
                    frag: fid.clone(),
                    hyp: hyp.clone(),
                    combo: format_combo(self, &parents, &parent_cards, idx),
                });
            }
            seen[idx] = true;
            entry.rows[idx] = dist.clone();
        }
        for r in &frag.residents {
            let hyp = &r.hyp_type;
            let parents = frag.parents_of(hyp);
            let parent_cards: Vec<usize> = parents
                .iter()
                .map(|p| self.hyp_type(p).unwrap().values.len())
                .collect();
            let n_rows: usize = parent_cards.iter().product();
            match filled.get(hyp) {
                None => {
                    return Err(KbError::MissingCpt { frag: fid.clone(), hyp: hyp.clone() });
                }
                Some(seen) => {
                    if let Some(missing) = seen.iter().position(|&f| !f) {
                        return Err(KbError::MissingCptRow {
                            frag: fid.clone(),
                            hyp: hyp.clone(),
                            combo: format_combo(self, &parents, &parent_cards, missing),
                        });
                    }
                    let _ = n_rows;
                }
            }
        }
        Ok(out)
    }
}

fn format_combo(kb: &MebnKb, parents: &[&str], cards: &[usize], mut idx: usize) -> String {
    let mut parts = vec![String::new(); parents.len()];
    for i in (0..parents.len()).rev() {
        let k = idx % cards[i];
        idx /= cards[i];
        parts[i] = format!("{}={}", parents[i], kb.hyp_type(parents[i]).unwrap().values[k]);
    }
    if parts.is_empty() {
        "(no parents)".to_string()
    } else {
        parts.join(", ")
    }
}

/// Derives the association hypothesis types of a fragment (Def 4): one per
/// fragment attribute `z` for which some resident node B does not refer to
/// `z` but has a parent that does.
pub fn derive_association_hypotheses(
    kb: &MebnKb,
    frag: &FragmentType,
) -> Result<Vec<AssociationHypothesisType>, KbError> {
    let mut out = Vec::new();
    for (z, z_entity) in &frag.attrs {
        let mut children = Vec::new();
        for r in &frag.residents {
            if r.attrs.contains(z) {
                continue;
            }
            let conditioned = frag.parents_of(&r.hyp_type).iter().any(|p| {
                frag.node_ref(p)
                    .map(|pr| pr.attrs.contains(z))
                    .unwrap_or(false)
            });
            if conditioned {
                children.push(r.hyp_type.clone());
            }
        }
        if children.is_empty() {
            continue;
        }
        let name = z.to_uppercase();
        if kb.hyp_type(&name).is_some() {
            return Err(KbError::AssocNameClash { frag: frag.id.clone(), name });
        }
        // identifying attributes: union of the conditioned children's
        // attributes, in fragment-attribute order, never including z
        let mut id_attrs = Vec::new();
        for (a, e) in &frag.attrs {
            if a == z {
                continue;
            }
            let used = children.iter().any(|c| {
                frag.node_ref(c).map(|r| r.attrs.contains(a)).unwrap_or(false)
            });
            if used {
                id_attrs.push((a.clone(), e.clone()));
            }
        }
        out.push(AssociationHypothesisType {
            fragment_id: frag.id.clone(),
            target_attr: z.clone(),
            entity_type: z_entity.clone(),
            name,
            id_attrs,
            conditioned_children: children,
        });
    }
    Ok(out)
}

/// One Def 5 well-formedness violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Condition (1): a hypothesis type resident in more than one fragment.
    MultiplyResident { hyp: String, fragments: Vec<String> },
    /// Condition (2): a type appearing in a fragment but resident nowhere.
    NotResident { hyp: String, fragment: String },
    /// Condition (3): the graph union of all fragments has a directed cycle.
    UnionCycle { hyp: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MultiplyResident { hyp, fragments } => write!(
                f,
                "condition 1: hypothesis type `{hyp}` is resident in multiple fragments: {}",
                fragments.join(", ")
            ),
            Violation::NotResident { hyp, fragment } => write!(
                f,
                "condition 2: hypothesis type `{hyp}` (appearing in fragment `{fragment}`) is resident in no fragment"
            ),
            Violation::UnionCycle { hyp } => write!(
                f,
                "condition 3: fragment graph union contains a directed cycle involving `{hyp}`"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the three Def 5 conditions, returning every violation found.
pub fn validate_mebn(kb: &MebnKb) -> ValidationReport {
    let mut violations = Vec::new();
    let mut resident_in: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for f in &kb.fragment_types {
        for r in &f.residents {
            resident_in.entry(&r.hyp_type).or_default().push(f.id.clone());
        }
    }
    for (hyp, frags) in &resident_in {
        if frags.len() > 1 {
            violations.push(Violation::MultiplyResident {
                hyp: hyp.to_string(),
                fragments: frags.clone(),
            });
        }
    }
    for f in &kb.fragment_types {
        for r in f.inputs.iter().chain(&f.residents) {
            if !resident_in.contains_key(r.hyp_type.as_str()) {
                violations.push(Violation::NotResident {
                    hyp: r.hyp_type.clone(),
                    fragment: f.id.clone(),
                });
            }
        }
    }
    let union = graph_union(kb);
    if let Err(hyp) = toposort(&union) {
        violations.push(Violation::UnionCycle { hyp });
    }
    ValidationReport { violations }
}

/// The union of all fragment graphs over hypothesis-type labels; nodes are
/// merged by label.
pub fn graph_union(kb: &MebnKb) -> BTreeMap<String, BTreeSet<String>> {
    let mut g: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for f in &kb.fragment_types {
        for r in f.inputs.iter().chain(&f.residents) {
            g.entry(r.hyp_type.clone()).or_default();
        }
        for (p, c) in &f.edges {
            g.entry(p.clone()).or_default().insert(c.clone());
            g.entry(c.clone()).or_default();
        }
    }
    g
}

/// Topological order of a label graph, or the label of a node on a cycle.
pub fn toposort(g: &BTreeMap<String, BTreeSet<String>>) -> Result<Vec<String>, String> {
    let mut indeg: BTreeMap<&String, usize> = g.keys().map(|k| (k, 0)).collect();
    for cs in g.values() {
        for c in cs {
            *indeg.get_mut(c).unwrap() += 1;
        }
    }
    let mut queue: Vec<&String> =
        indeg.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
    queue.sort();
    let mut order = Vec::new();
    while let Some(v) = queue.pop() {
        order.push(v.clone());
        for c in &g[v] {
            let d = indeg.get_mut(c).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push(c);
            }
        }
    }
    if order.len() != g.len() {
        let culprit = indeg
            .iter()
            .find(|(_, &d)| d > 0)
            .map(|(k, _)| (*k).clone())
            .unwrap_or_default();
        return Err(culprit);
    }
    Ok(order)
}
