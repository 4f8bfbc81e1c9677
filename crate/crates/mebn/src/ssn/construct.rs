//! Bottom-up SSN construction: fragment instantiation from query seeds,
//! association resolution, `*` augmentation, CPT materialization, and
//! minimalization.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::bn::{build_network, exact_query, prune_for_query, DiscreteNode, Network};
use crate::hypman::SituationModel;
use crate::kb::{FragmentType, InstanceId, MebnKb};
use crate::STAR;

use super::{
    node_id, AssocNodeInfo, AssociationSlot, CandidateEnumerator, ConstructError,
    ConstructedNetwork, ConstructionPolicy, NodeProvenance, Query,
};

/// One parent position of a multiplexer child, in fragment parent order.
/// `Replicated` positions contribute one copy per association candidate;
/// the slice is the copies' shared state space (with `*` last if present).
#[derive(Debug)]
pub enum ParentGroup<'a> {
    Replicated(&'a [String]),
    Normal(&'a [String]),
}

/// Inputs to multiplexer CPT assembly. `fragment_rows` is the fragment CPT,
/// row-major over the base (non-`*`) parent state spaces in fragment order;
/// `child_base` counts the child's states excluding `*`.
#[derive(Debug)]
pub struct MultiplexerSpec<'a> {
    pub n_candidates: usize,
    pub groups: Vec<ParentGroup<'a>>,
    pub fragment_rows: &'a [Vec<f64>],
    pub child_base: usize,
}

/// Rows of a multiplexer CPT over parents `[Y, copies/normals...]` (first
/// parent most significant). Per row: `Y = *` or any *selected* parent at
/// `*` gives a point mass on `*`; otherwise the fragment row of the copy
/// selected by `Y` (non-selected copies are ignored — hypothesis-specific
/// independence).
pub fn multiplexer_rows(spec: &MultiplexerSpec<'_>) -> Vec<Vec<f64>> {
    let n = spec.n_candidates;
    // cardinalities of the flattened parent list
    let mut cards: Vec<usize> = vec![n + 1];
    // (group index, copy index within group) per flattened position
    let mut origin: Vec<(usize, usize)> = vec![(usize::MAX, 0)];
    for (g, group) in spec.groups.iter().enumerate() {
        match group {
            ParentGroup::Replicated(space) => {
                for k in 0..n {
                    cards.push(space.len());
                    origin.push((g, k));
                }
            }
            ParentGroup::Normal(space) => {
                cards.push(space.len());
                origin.push((g, 0));
            }
        }
    }
    let star_row = |child_base: usize| {
        let mut r = vec![0.0; child_base + 1];
        r[child_base] = 1.0;
        r
    };
    let n_rows: usize = cards.iter().product();
    let mut rows = Vec::with_capacity(n_rows);
    let mut idx = vec![0usize; cards.len()];
    for _ in 0..n_rows {
        let y = idx[0];
        let row = if y == n {
            star_row(spec.child_base)
        } else {
            // per group, the state index selected by Y = candidate y
            let mut frag_idx = 0usize;
            let mut selected_star = false;
            for (g, group) in spec.groups.iter().enumerate() {
                let space = match group {
                    ParentGroup::Replicated(s) | ParentGroup::Normal(s) => *s,
                };
                let has_star = space.last().map(|s| s == STAR).unwrap_or(false);
                let base = space.len() - usize::from(has_star);
                let pos = origin
                    .iter()
                    .position(|&(og, ok)| {
                        og == g && ok == if matches!(group, ParentGroup::Replicated(_)) { y } else { 0 }
                    })
                    .expect("selected copy present");
                let s = idx[pos];
                if has_star && s == base {
                    selected_star = true;
                    break;
                }
                frag_idx = frag_idx * base + s;
            }
            if selected_star {
                star_row(spec.child_base)
            } else {
                let mut r = spec.fragment_rows[frag_idx].clone();
                r.resize(spec.child_base + 1, 0.0);
                r
            }
        };
        rows.push(row);
        for d in (0..cards.len()).rev() {
            idx[d] += 1;
            if idx[d] < cards[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    rows
}

#[derive(Debug, Clone)]
enum MuxGroup {
    Replicated { copies: Vec<String> },
    Normal { node: String },
}

#[derive(Debug, Clone)]
enum NodeKind {
    /// On the frontier, not yet expanded.
    Pending,
    Assoc {
        fragment_id: String,
        entity_type: String,
        owner: Vec<InstanceId>,
        candidates: Vec<InstanceId>,
        children: Vec<String>,
    },
    Root { fragment_id: String, hyp_type: String },
    Plain { fragment_id: String, hyp_type: String },
    Mux { fragment_id: String, hyp_type: String, assoc: String, groups: Vec<MuxGroup> },
    /// Lazy-expansion stub: default marginal prior.
    Default { fragment_id: String, hyp_type: String },
}

#[derive(Debug, Clone)]
struct BuildNode {
    binding: Vec<InstanceId>,
    /// Declared value set; for association nodes the candidate ids plus `*`.
    base_states: Vec<String>,
    parents: Vec<String>,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum SlotResolution {
    Direct(InstanceId),
    Node { assoc_id: String },
}

struct Builder<'a> {
    kb: &'a MebnKb,
    policy: &'a ConstructionPolicy,
    nodes: BTreeMap<String, BuildNode>,
    frontier: VecDeque<String>,
    slot_cache: BTreeMap<String, SlotResolution>,
    hyp_of_node: BTreeMap<String, String>,
}

/// Outcome of [`augment_star`]: the star-bearing node set and the per-root
/// star prior chosen.
struct StarPlan {
    star_nodes: BTreeSet<String>,
    root_star_priors: BTreeMap<String, f64>,
}

impl<'a> Builder<'a> {
    fn new(kb: &'a MebnKb, policy: &'a ConstructionPolicy) -> Self {
        Builder {
            kb,
            policy,
            nodes: BTreeMap::new(),
            frontier: VecDeque::new(),
            slot_cache: BTreeMap::new(),
            hyp_of_node: BTreeMap::new(),
        }
    }

    /// Creates (or finds) the node for a bound hypothesis instance and puts
    /// it on the frontier if new. Returns its id.
    fn ensure_node(&mut self, hyp: &str, binding: &[InstanceId]) -> Result<String, ConstructError> {
        let ht = self
            .kb
            .hyp_type(hyp)
            .ok_or_else(|| ConstructError::UnknownHypType(hyp.to_string()))?;
        let id = node_id(hyp, binding);
        if ht.attrs.len() != binding.len() {
            return Err(ConstructError::BindingArity {
                node: id,
                expected: ht.attrs.len(),
                got: binding.len(),
            });
        }
        if !self.nodes.contains_key(&id) {
            self.nodes.insert(
                id.clone(),
                BuildNode {
                    binding: binding.to_vec(),
                    base_states: ht.values.clone(),
                    parents: Vec::new(),
                    kind: NodeKind::Pending,
                },
            );
            self.hyp_of_node.insert(id.clone(), hyp.to_string());
            self.frontier.push_back(id.clone());
        }
        Ok(id)
    }

    /// Resolves an association slot to a direct filler or an association
    /// node, consulting committed associations first, then the enumerator.
    /// Cached so the enumerator runs at most once per slot.
    fn resolve_slot(
        &mut self,
        situation: &mut SituationModel,
        enumerator: &mut dyn CandidateEnumerator,
        slot: &AssociationSlot,
    ) -> Result<SlotResolution, ConstructError> {
        let key = slot.node_id();
        if let Some(r) = self.slot_cache.get(&key) {
            return Ok(r.clone());
        }
        let resolution = if let Some(filler) = (slot.owner.len() == 1)
            .then(|| {
                situation
                    .committed
                    .get(&(slot.owner[0].clone(), slot.entity_type.clone()))
            })
            .flatten()
        {
            SlotResolution::Direct(filler.clone())
        } else {
            let cands = enumerator.enumerate(situation, slot)?;
            if cands.candidates.is_empty() {
                return Err(ConstructError::NoCandidates { slot: key });
            }
            if cands.definite && cands.candidates.len() == 1 {
                SlotResolution::Direct(cands.candidates[0].clone())
            } else {
                let mut states: Vec<String> =
                    cands.candidates.iter().map(|c| c.0.clone()).collect();
                states.push(STAR.to_string());
                self.nodes.insert(
                    key.clone(),
                    BuildNode {
                        binding: slot.owner.clone(),
                        base_states: states,
                        parents: Vec::new(),
                        kind: NodeKind::Assoc {
                            fragment_id: slot.fragment_id.clone(),
                            entity_type: slot.entity_type.clone(),
                            owner: slot.owner.clone(),
                            candidates: cands.candidates.clone(),
                            children: Vec::new(),
                        },
                    },
                );
                SlotResolution::Node { assoc_id: key.clone() }
            }
        };
        self.slot_cache.insert(key, resolution.clone());
        Ok(resolution)
    }

    /// Expands one frontier node: finds its resident fragment, instantiates
    /// sibling residents, and attaches parents (resolving associations).
    fn expand(
        &mut self,
        id: &str,
        situation: &mut SituationModel,
        enumerator: &mut dyn CandidateEnumerator,
    ) -> Result<(), ConstructError> {
        let hyp = self.hyp_of_node[id].clone();
        let binding = self.nodes[id].binding.clone();
        let frag = self
            .kb
            .resident_fragment(&hyp)
            .ok_or_else(|| ConstructError::NoResidentFragment { hyp: hyp.clone() })?
            .clone();
        let my_ref = frag.node_ref(&hyp).expect("resident has a node ref").clone();
        let bound: BTreeMap<String, InstanceId> = my_ref
            .attrs
            .iter()
            .cloned()
            .zip(binding.iter().cloned())
            .collect();

        // instantiate sibling residents whose attributes are all bound
        for r in &frag.residents {
            if r.hyp_type == hyp {
                continue;
            }
            if r.attrs.iter().all(|a| bound.contains_key(a)) {
                let b: Vec<InstanceId> = r.attrs.iter().map(|a| bound[a].clone()).collect();
                self.ensure_node(&r.hyp_type, &b)?;
            }
        }

        let mut parents: Vec<String> = Vec::new();
        let mut groups: Vec<MuxGroup> = Vec::new();
        let mut assoc_id: Option<String> = None;
        for p in frag.parents_of(&hyp) {
            let p_ref = frag.node_ref(p).expect("edge endpoints are fragment nodes").clone();
            let unbound: Vec<&String> =
                p_ref.attrs.iter().filter(|a| !bound.contains_key(*a)).collect();
            match unbound.as_slice() {
                [] => {
                    let b: Vec<InstanceId> =
                        p_ref.attrs.iter().map(|a| bound[a].clone()).collect();
                    let pid = self.ensure_node(p, &b)?;
                    groups.push(MuxGroup::Normal { node: pid });
                }
                [z] => {
                    let slot = self.slot_for(&frag, z, &bound, id)?;
                    match self.resolve_slot(situation, enumerator, &slot)? {
                        SlotResolution::Direct(filler) => {
                            let b: Vec<InstanceId> = p_ref
                                .attrs
                                .iter()
                                .map(|a| {
                                    if a == *z { filler.clone() } else { bound[a].clone() }
                                })
                                .collect();
                            let pid = self.ensure_node(p, &b)?;
                            groups.push(MuxGroup::Normal { node: pid });
                        }
                        SlotResolution::Node { assoc_id: aid } => {
                            if let Some(prev) = &assoc_id {
                                if prev != &aid {
                                    return Err(ConstructError::MultipleUnboundAttrs {
                                        node: id.to_string(),
                                        attrs: format!("{prev}, {aid}"),
                                    });
                                }
                            }
                            assoc_id = Some(aid.clone());
                            let candidates = match &self.nodes[&aid].kind {
                                NodeKind::Assoc { candidates, .. } => candidates.clone(),
                                _ => unreachable!("slot resolved to a non-association node"),
                            };
                            let mut copies = Vec::with_capacity(candidates.len());
                            for c in &candidates {
                                let b: Vec<InstanceId> = p_ref
                                    .attrs
                                    .iter()
                                    .map(|a| if a == *z { c.clone() } else { bound[a].clone() })
                                    .collect();
                                copies.push(self.ensure_node(p, &b)?);
                            }
                            groups.push(MuxGroup::Replicated { copies });
                        }
                    }
                }
                more => {
                    return Err(ConstructError::MultipleUnboundAttrs {
                        node: id.to_string(),
                        attrs: more.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(", "),
                    });
                }
            }
        }

        let kind = if let Some(aid) = assoc_id {
            if let NodeKind::Assoc { children, .. } =
                &mut self.nodes.get_mut(&aid).expect("association node exists").kind
            {
                children.push(id.to_string());
            }
            parents.push(aid.clone());
            for g in &groups {
                match g {
                    MuxGroup::Replicated { copies } => parents.extend(copies.iter().cloned()),
                    MuxGroup::Normal { node } => parents.push(node.clone()),
                }
            }
            NodeKind::Mux { fragment_id: frag.id.clone(), hyp_type: hyp.clone(), assoc: aid, groups }
        } else {
            for g in &groups {
                if let MuxGroup::Normal { node } = g {
                    parents.push(node.clone());
                }
            }
            if parents.is_empty() {
                NodeKind::Root { fragment_id: frag.id.clone(), hyp_type: hyp.clone() }
            } else {
                NodeKind::Plain { fragment_id: frag.id.clone(), hyp_type: hyp.clone() }
            }
        };
        let node = self.nodes.get_mut(id).expect("expanding a known node");
        node.parents = parents;
        node.kind = kind;
        Ok(())
    }

    fn slot_for(
        &self,
        frag: &FragmentType,
        z: &str,
        bound: &BTreeMap<String, InstanceId>,
        child_id: &str,
    ) -> Result<AssociationSlot, ConstructError> {
        let assoc = frag
            .associations
            .iter()
            .find(|a| a.target_attr == z)
            .ok_or_else(|| ConstructError::NoAssociationForAttr {
                node: child_id.to_string(),
                attr: z.to_string(),
                frag: frag.id.clone(),
            })?;
        let mut owner = Vec::with_capacity(assoc.id_attrs.len());
        for (a, _) in &assoc.id_attrs {
            match bound.get(a) {
                Some(v) => owner.push(v.clone()),
                None => {
                    return Err(ConstructError::MultipleUnboundAttrs {
                        node: child_id.to_string(),
                        attrs: format!("{z}, {a}"),
                    })
                }
            }
        }
        Ok(AssociationSlot {
            fragment_id: frag.id.clone(),
            name: assoc.name.clone(),
            target_attr: assoc.target_attr.clone(),
            entity_type: assoc.entity_type.clone(),
            owner,
        })
    }

    /// Applies the four `*` rules: (a) descendants of association nodes,
    /// (b) co-parents of association nodes, (c) root ancestors of
    /// co-parents (the candidate roots), each closed downward so `*` can be
    /// absorbed; returns star membership and per-root star priors.
    fn augment_star(&self) -> Result<StarPlan, ConstructError> {
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut parents: BTreeMap<&str, &[String]> = BTreeMap::new();
        for (id, n) in &self.nodes {
            parents.insert(id, &n.parents);
            children.entry(id).or_default();
            for p in &n.parents {
                children.entry(p).or_default().push(id);
            }
        }
        let mut seeds: BTreeSet<String> = BTreeSet::new();
        let mut co_parents: BTreeSet<String> = BTreeSet::new();
        for (id, n) in &self.nodes {
            if let NodeKind::Mux { assoc, .. } = &n.kind {
                seeds.insert(id.clone()); // rule (a): association descendant
                for p in &n.parents {
                    if p != assoc {
                        co_parents.insert(p.clone()); // rule (b)
                    }
                }
            }
        }
        // rule (c): every root ancestor-or-self of a co-parent carries "*"
        for cp in &co_parents {
            let mut stack = vec![cp.clone()];
            let mut seen = BTreeSet::new();
            let mut found_root = false;
            while let Some(v) = stack.pop() {
                if !seen.insert(v.clone()) {
                    continue;
                }
                let ps = parents[v.as_str()];
                if ps.is_empty() {
                    if !matches!(self.nodes[&v].kind, NodeKind::Assoc { .. }) {
                        seeds.insert(v.clone());
                        found_root = true;
                    }
                } else {
                    stack.extend(ps.iter().cloned());
                }
            }
            if !found_root {
                return Err(ConstructError::StarRuleUnsatisfiable { node: cp.clone() });
            }
        }
        seeds.extend(co_parents);
        // downward closure: a child of a "*"-bearing parent must itself
        // carry "*" to absorb it
        let mut star = BTreeSet::new();
        let mut stack: Vec<String> = seeds.into_iter().collect();
        while let Some(v) = stack.pop() {
            if matches!(self.nodes[&v].kind, NodeKind::Assoc { .. }) {
                continue; // association nodes carry "*" natively
            }
            if star.insert(v.clone()) {
                stack.extend(children[v.as_str()].iter().map(|c| c.to_string()));
            }
        }
        let mut root_star_priors = BTreeMap::new();
        for (id, n) in &self.nodes {
            if !star.contains(id) {
                continue;
            }
            let (frag_id, hyp) = match &n.kind {
                NodeKind::Root { fragment_id, hyp_type }
                | NodeKind::Default { fragment_id, hyp_type } => (fragment_id, hyp_type),
                _ => continue,
            };
            root_star_priors.insert(id.clone(), self.star_prior_for(frag_id, hyp));
        }
        Ok(StarPlan { star_nodes: star, root_star_priors })
    }

    fn star_prior_for(&self, fragment_id: &str, hyp: &str) -> f64 {
        let ety = self
            .kb
            .hyp_type(hyp)
            .map(|h| h.attrs[0].1.clone())
            .unwrap_or_default();
        if let Some(v) = self.policy.star_priors.get(&ety) {
            return *v;
        }
        if let Some(f) = self.kb.fragment(fragment_id) {
            if let Some(v) = f.star_priors.get(&ety) {
                return *v;
            }
        }
        self.policy.default_star_prior
    }

    /// Materializes the builder into a validated network. Pending nodes (only
    /// present mid-construction under lazy expansion) are treated as
    /// default-prior roots.
    fn finalize(&self) -> Result<(Network, StarPlan), ConstructError> {
        // treat Pending as Default for star/CPT purposes
        let shadow = self.clone_for_finalize()?;
        let plan = shadow.augment_star()?;
        let mut out = Vec::with_capacity(shadow.nodes.len());
        for (id, n) in &shadow.nodes {
            let has_star = plan.star_nodes.contains(id);
            let mut states = n.base_states.clone();
            if has_star {
                states.push(STAR.to_string());
            }
            let cpt = match &n.kind {
                NodeKind::Pending => unreachable!("pending nodes replaced before finalize"),
                NodeKind::Assoc { candidates, .. } => {
                    let p = shadow.policy.assoc_star_prior;
                    let k = candidates.len() as f64;
                    let mut row = vec![(1.0 - p) / k; candidates.len()];
                    row.push(p);
                    vec![row]
                }
                NodeKind::Root { fragment_id, hyp_type } => {
                    let prior = shadow.fragment_rows(fragment_id, hyp_type)?[0].clone();
                    vec![shadow.apply_root_star(prior, has_star, id, &plan)]
                }
                NodeKind::Default { fragment_id, hyp_type } => {
                    let rows = shadow.fragment_rows(fragment_id, hyp_type)?;
                    let k = rows.len() as f64;
                    let mut avg = vec![0.0; rows[0].len()];
                    for r in &rows {
                        for (a, v) in avg.iter_mut().zip(r) {
                            *a += v / k;
                        }
                    }
                    vec![shadow.apply_root_star(avg, has_star, id, &plan)]
                }
                NodeKind::Plain { fragment_id, hyp_type, .. } => {
                    shadow.plain_rows(fragment_id, hyp_type, n, has_star, &plan)?
                }
                NodeKind::Mux { fragment_id, hyp_type, groups, .. } => {
                    let frag_rows = shadow.fragment_rows(fragment_id, hyp_type)?;
                    let n_cand = match groups.iter().find_map(|g| match g {
                        MuxGroup::Replicated { copies } => Some(copies.len()),
                        MuxGroup::Normal { .. } => None,
                    }) {
                        Some(k) => k,
                        None => unreachable!("multiplexer without replicated parents"),
                    };
                    let spaces: Vec<Vec<String>> = groups
                        .iter()
                        .map(|g| {
                            let rep = match g {
                                MuxGroup::Replicated { copies } => &copies[0],
                                MuxGroup::Normal { node } => node,
                            };
                            shadow.final_states(rep, &plan)
                        })
                        .collect();
                    let spec_groups: Vec<ParentGroup<'_>> = groups
                        .iter()
                        .zip(&spaces)
                        .map(|(g, s)| match g {
                            MuxGroup::Replicated { .. } => ParentGroup::Replicated(s),
                            MuxGroup::Normal { .. } => ParentGroup::Normal(s),
                        })
                        .collect();
                    multiplexer_rows(&MultiplexerSpec {
                        n_candidates: n_cand,
                        groups: spec_groups,
                        fragment_rows: &frag_rows,
                        child_base: n.base_states.len(),
                    })
                }
            };
            let state_refs: Vec<&str> = states.iter().map(|s| s.as_str()).collect();
            let parent_refs: Vec<&str> = n.parents.iter().map(|p| p.as_str()).collect();
            out.push(DiscreteNode::with_parents(id.clone(), &state_refs, &parent_refs, cpt));
        }
        Ok((build_network(out)?, plan))
    }

    fn clone_for_finalize(&self) -> Result<Builder<'a>, ConstructError> {
        let mut shadow = Builder {
            kb: self.kb,
            policy: self.policy,
            nodes: self.nodes.clone(),
            frontier: VecDeque::new(),
            slot_cache: self.slot_cache.clone(),
            hyp_of_node: self.hyp_of_node.clone(),
        };
        let pending: Vec<String> = shadow
            .nodes
            .iter()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Pending))
            .map(|(id, _)| id.clone())
            .collect();
        for id in pending {
            let hyp = shadow.hyp_of_node[&id].clone();
            let frag = shadow
                .kb
                .resident_fragment(&hyp)
                .ok_or_else(|| ConstructError::NoResidentFragment { hyp: hyp.clone() })?;
            let fragment_id = frag.id.clone();
            shadow.nodes.get_mut(&id).unwrap().kind =
                NodeKind::Default { fragment_id, hyp_type: hyp };
        }
        Ok(shadow)
    }

    fn fragment_rows(&self, fragment_id: &str, hyp: &str) -> Result<Vec<Vec<f64>>, ConstructError> {
        let frag = self
            .kb
            .fragment(fragment_id)
            .ok_or_else(|| ConstructError::NoResidentFragment { hyp: hyp.to_string() })?;
        let cpt = frag
            .cpts
            .get(hyp)
            .ok_or_else(|| ConstructError::NoResidentFragment { hyp: hyp.to_string() })?;
        Ok(cpt.rows.clone())
    }

    fn apply_root_star(
        &self,
        mut prior: Vec<f64>,
        has_star: bool,
        id: &str,
        plan: &StarPlan,
    ) -> Vec<f64> {
        if has_star {
            let p = plan.root_star_priors.get(id).copied().unwrap_or(self.policy.default_star_prior);
            for v in prior.iter_mut() {
                *v *= 1.0 - p;
            }
            prior.push(p);
        }
        prior
    }

    fn final_states(&self, id: &str, plan: &StarPlan) -> Vec<String> {
        let mut s = self.nodes[id].base_states.clone();
        if plan.star_nodes.contains(id) {
            s.push(STAR.to_string());
        }
        s
    }

    /// Rows for a non-multiplexer child over its parents' final state
    /// spaces: any `*` parent state forces a point mass on `*`; other rows
    /// extend the fragment row with 0 on `*`.
    fn plain_rows(
        &self,
        fragment_id: &str,
        hyp: &str,
        n: &BuildNode,
        has_star: bool,
        plan: &StarPlan,
    ) -> Result<Vec<Vec<f64>>, ConstructError> {
        let frag_rows = self.fragment_rows(fragment_id, hyp)?;
        let spaces: Vec<Vec<String>> =
            n.parents.iter().map(|p| self.final_states(p, plan)).collect();
        let cards: Vec<usize> = spaces.iter().map(|s| s.len()).collect();
        let n_rows: usize = cards.iter().product();
        let width = n.base_states.len() + usize::from(has_star);
        let mut rows = Vec::with_capacity(n_rows);
        let mut idx = vec![0usize; cards.len()];
        for _ in 0..n_rows {
            let mut star_hit = false;
            let mut frag_idx = 0usize;
            for (d, space) in spaces.iter().enumerate() {
                let parent_star = space.last().map(|s| s == STAR).unwrap_or(false);
                let base = space.len() - usize::from(parent_star);
                if parent_star && idx[d] == base {
                    star_hit = true;
                    break;
                }
                frag_idx = frag_idx * base + idx[d];
            }
            let row = if star_hit {
                debug_assert!(has_star, "star parent implies star child by closure");
                let mut r = vec![0.0; width];
                r[width - 1] = 1.0;
                r
            } else {
                let mut r = frag_rows[frag_idx].clone();
                r.resize(width, 0.0);
                r
            };
            rows.push(row);
            for d in (0..cards.len()).rev() {
                idx[d] += 1;
                if idx[d] < cards[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(rows)
    }
}

/// Bottom-up construction of a situation-specific network for one query.
pub fn construct_ssn(
    kb: &MebnKb,
    situation: &mut SituationModel,
    query: &Query,
    policy: &ConstructionPolicy,
    enumerator: &mut dyn CandidateEnumerator,
) -> Result<ConstructedNetwork, ConstructError> {
    policy.validate()?;
    if query.targets.is_empty() {
        return Err(ConstructError::NoTargets);
    }
    for (e, state) in &query.evidence {
        let ht = kb
            .hyp_type(&e.hyp_type)
            .ok_or_else(|| ConstructError::UnknownHypType(e.hyp_type.clone()))?;
        if !ht.values.iter().any(|v| v == state) {
            return Err(ConstructError::BadEvidenceState {
                hyp: e.hyp_type.clone(),
                state: state.clone(),
            });
        }
    }
    let evidence_ids = query.evidence_ids();
    for t in query.target_ids() {
        if evidence_ids.contains_key(&t) {
            return Err(ConstructError::TargetIsEvidence(t));
        }
    }

    let mut b = Builder::new(kb, policy);
    let mut seeds: BTreeSet<String> = BTreeSet::new();
    for t in &query.targets {
        seeds.insert(b.ensure_node(&t.hyp_type, &t.bindings)?);
    }
    for (e, _) in &query.evidence {
        seeds.insert(b.ensure_node(&e.hyp_type, &e.bindings)?);
    }

    while let Some(id) = b.frontier.pop_front() {
        if !matches!(b.nodes[&id].kind, NodeKind::Pending) {
            continue;
        }
        if let Some(threshold) = policy.lazy_expansion {
            if !seeds.contains(&id) && !evidence_ids.contains_key(&id) {
                let (net, _) = b.finalize()?;
                let present: BTreeMap<String, String> = evidence_ids
                    .iter()
                    .filter(|(k, _)| net.contains(k) && k.as_str() != id)
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                let marginal = exact_query(&net, &[&id], &present)?;
                let states = &marginal.state_spaces[0];
                let non_star: f64 = states
                    .iter()
                    .zip(&marginal.table)
                    .filter(|(s, _)| s.as_str() != STAR)
                    .map(|(_, v)| v)
                    .sum();
                if non_star < threshold {
                    let hyp = b.hyp_of_node[&id].clone();
                    let frag = kb
                        .resident_fragment(&hyp)
                        .ok_or_else(|| ConstructError::NoResidentFragment { hyp: hyp.clone() })?;
                    let fragment_id = frag.id.clone();
                    b.nodes.get_mut(&id).unwrap().kind =
                        NodeKind::Default { fragment_id, hyp_type: hyp };
                    continue;
                }
            }
        }
        b.expand(&id, situation, enumerator)?;
    }

    let (net, plan) = b.finalize()?;
    let mut provenance = BTreeMap::new();
    let mut assoc_nodes = BTreeMap::new();
    for (id, n) in &b.nodes {
        let prov = match &n.kind {
            NodeKind::Assoc { fragment_id, entity_type, owner, candidates, children } => {
                assoc_nodes.insert(
                    id.clone(),
                    AssocNodeInfo {
                        entity_type: entity_type.clone(),
                        owner: owner.clone(),
                        candidates: candidates.clone(),
                        children: children.clone(),
                    },
                );
                NodeProvenance::Association {
                    fragment_id: fragment_id.clone(),
                    entity_type: entity_type.clone(),
                    owner: owner.clone(),
                }
            }
            NodeKind::Default { fragment_id, hyp_type } => NodeProvenance::DefaultPrior {
                fragment_id: fragment_id.clone(),
                hyp_type: hyp_type.clone(),
                binding: n.binding.clone(),
            },
            NodeKind::Root { fragment_id, hyp_type }
            | NodeKind::Plain { fragment_id, hyp_type, .. }
            | NodeKind::Mux { fragment_id, hyp_type, .. } => NodeProvenance::Fragment {
                fragment_id: fragment_id.clone(),
                hyp_type: hyp_type.clone(),
                binding: n.binding.clone(),
            },
            NodeKind::Pending => unreachable!("frontier drained"),
        };
        provenance.insert(id.clone(), prov);
    }
    Ok(ConstructedNetwork {
        net,
        provenance,
        assoc_nodes,
        star_nodes: plan.star_nodes,
        root_star_priors: plan.root_star_priors,
    })
}

/// Prunes the network to a minimal query-complete form (posterior
/// preserved; idempotent), carrying provenance along.
pub fn minimalize(cn: &ConstructedNetwork, query: &Query) -> Result<ConstructedNetwork, ConstructError> {
    let targets = query.target_ids();
    let target_refs: Vec<&str> = targets.iter().map(|s| s.as_str()).collect();
    let evidence_ids = query.evidence_ids();
    let evidence_refs: Vec<&str> = evidence_ids
        .keys()
        .filter(|k| cn.net.contains(k))
        .map(|s| s.as_str())
        .collect();
    let net = prune_for_query(&cn.net, &target_refs, &evidence_refs)?;
    let kept = |id: &String| net.contains(id);
    Ok(ConstructedNetwork {
        provenance: cn.provenance.iter().filter(|(k, _)| kept(k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
        assoc_nodes: cn
            .assoc_nodes
            .iter()
            .filter(|(k, _)| kept(k))
            .map(|(k, v)| {
                let mut v = v.clone();
                v.children.retain(|c| net.contains(c));
                (k.clone(), v)
            })
            .collect(),
        star_nodes: cn.star_nodes.iter().filter(|k| kept(k)).cloned().collect(),
        root_star_priors: cn
            .root_star_priors
            .iter()
            .filter(|(k, _)| kept(k))
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
        net,
    })
}
