//! Situation-specific network construction and evaluation.
//!
//! A query names target and evidence node instances; construction proceeds
//! bottom-up from those seeds, retrieving each node's resident fragment and
//! adding parents until roots are reached. Fragments whose parents refer to
//! an unbound identifying attribute trigger association-candidate
//! enumeration: an association node is created, the referring parents are
//! replicated once per candidate, and the child receives a multiplexer CPT.
//! The reserved `*` state is then pushed through the network, and the
//! result is minimalized to a query-complete network.

mod construct;
mod evaluate;

pub use construct::{construct_ssn, minimalize, multiplexer_rows, MultiplexerSpec, ParentGroup};
pub use evaluate::{evaluate_query, EvaluationResult};

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::bn::{BnError, Network};
use crate::hypman::SituationModel;
use crate::kb::{HypothesisInstance, InstanceId, KbError};

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("query has no targets")]
    NoTargets,
    #[error("unknown hypothesis type `{0}`")]
    UnknownHypType(String),
    #[error("hypothesis type `{hyp}` is resident in no fragment")]
    NoResidentFragment { hyp: String },
    #[error("node `{node}`: expected {expected} bindings, got {got}")]
    BindingArity { node: String, expected: usize, got: usize },
    #[error("evidence state `{state}` is not a value of `{hyp}`")]
    BadEvidenceState { hyp: String, state: String },
    #[error("node `{0}` is both target and evidence")]
    TargetIsEvidence(String),
    #[error("policy probability `{name}` = {value} outside (0,1)")]
    PolicyRange { name: String, value: f64 },
    #[error("association slot `{slot}`: no candidates and no new-instance option")]
    NoCandidates { slot: String },
    #[error("association node `{node}` reused with conflicting candidates")]
    CandidateConflict { node: String },
    #[error("node `{node}`: parents refer to multiple unbound attributes ({attrs}); at most one association per child is supported")]
    MultipleUnboundAttrs { node: String, attrs: String },
    #[error("node `{node}`: unbound attribute `{attr}` has no derived association hypothesis in fragment `{frag}`")]
    NoAssociationForAttr { node: String, attr: String, frag: String },
    #[error("star rule (c) unsatisfiable: co-parent `{node}` has no root ancestor to carry `*`")]
    StarRuleUnsatisfiable { node: String },
    #[error("situation update failed: {0}")]
    Situation(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Bn(#[from] BnError),
}

/// A query: posterior over target node instances given evidence instances.
#[derive(Debug, Clone, Default)]
pub struct Query {
    pub targets: Vec<HypothesisInstance>,
    pub evidence: Vec<(HypothesisInstance, String)>,
}

/// Deterministic node id for a bound hypothesis instance: `Type(id,...)`.
pub fn node_id(hyp_type: &str, binding: &[InstanceId]) -> String {
    let ids: Vec<&str> = binding.iter().map(|b| b.as_str()).collect();
    format!("{}({})", hyp_type, ids.join(","))
}

impl Query {
    pub fn target_ids(&self) -> Vec<String> {
        self.targets
            .iter()
            .map(|t| node_id(&t.hyp_type, &t.bindings))
            .collect()
    }

    pub fn evidence_ids(&self) -> BTreeMap<String, String> {
        self.evidence
            .iter()
            .map(|(e, s)| (node_id(&e.hyp_type, &e.bindings), s.clone()))
            .collect()
    }
}

/// Tunables for construction.
#[derive(Debug, Clone)]
pub struct ConstructionPolicy {
    /// Per-entity-type prior mass on `*` for hypothesized roots; overrides
    /// any `star_prior` directive in the KB.
    pub star_priors: BTreeMap<String, f64>,
    /// Fallback when neither an override nor a KB directive applies.
    pub default_star_prior: f64,
    /// Prior mass on `*` for association nodes (the false-alarm share); the
    /// remainder is uniform over the candidates.
    pub assoc_star_prior: f64,
    /// When set, upward construction halts at non-seed frontier nodes whose
    /// current probability of a non-`*` value falls below the threshold,
    /// substituting the node's marginal prior.
    pub lazy_expansion: Option<f64>,
}

impl Default for ConstructionPolicy {
    fn default() -> Self {
        ConstructionPolicy {
            star_priors: BTreeMap::new(),
            default_star_prior: 0.5,
            assoc_star_prior: 0.1,
            lazy_expansion: None,
        }
    }
}

impl ConstructionPolicy {
    pub fn validate(&self) -> Result<(), ConstructError> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(ConstructError::PolicyRange { name: name.to_string(), value: v })
            }
        };
        check("default_star_prior", self.default_star_prior)?;
        check("assoc_star_prior", self.assoc_star_prior)?;
        for (e, v) in &self.star_priors {
            check(&format!("star_prior[{e}]"), *v)?;
        }
        if let Some(t) = self.lazy_expansion {
            check("lazy_expansion", t)?;
        }
        Ok(())
    }
}

/// An unresolved association slot encountered during construction: which
/// entity fills fragment attribute `target_attr` for the given owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationSlot {
    pub fragment_id: String,
    pub name: String,
    pub target_attr: String,
    pub entity_type: String,
    pub owner: Vec<InstanceId>,
}

impl AssociationSlot {
    pub fn node_id(&self) -> String {
        node_id(&self.name, &self.owner)
    }
}

/// Candidate fillers for an association slot. `definite` with a single
/// candidate collapses to a direct edge (no association node).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub candidates: Vec<InstanceId>,
    pub definite: bool,
}

/// Supplies candidate fillers for association slots discovered during
/// construction; may create new hypothesis instances in the situation.
pub trait CandidateEnumerator {
    fn enumerate(
        &mut self,
        situation: &mut SituationModel,
        slot: &AssociationSlot,
    ) -> Result<CandidateSet, ConstructError>;
}

/// Test/utility enumerator with a fixed answer per slot node id.
#[derive(Debug, Clone, Default)]
pub struct FixedEnumerator {
    pub slots: BTreeMap<String, CandidateSet>,
}

impl CandidateEnumerator for FixedEnumerator {
    fn enumerate(
        &mut self,
        _situation: &mut SituationModel,
        slot: &AssociationSlot,
    ) -> Result<CandidateSet, ConstructError> {
        self.slots
            .get(&slot.node_id())
            .cloned()
            .ok_or_else(|| ConstructError::NoCandidates { slot: slot.node_id() })
    }
}

/// Where a constructed node came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeProvenance {
    Fragment { fragment_id: String, hyp_type: String, binding: Vec<InstanceId> },
    Association { fragment_id: String, entity_type: String, owner: Vec<InstanceId> },
    /// Lazy-expansion stub carrying a default marginal prior.
    DefaultPrior { fragment_id: String, hyp_type: String, binding: Vec<InstanceId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssocNodeInfo {
    pub entity_type: String,
    pub owner: Vec<InstanceId>,
    pub candidates: Vec<InstanceId>,
    /// Multiplexer children conditioned on this association.
    pub children: Vec<String>,
}

/// A finite Bayesian network built for one query, with provenance.
#[derive(Debug, Clone)]
pub struct ConstructedNetwork {
    pub net: Network,
    pub provenance: BTreeMap<String, NodeProvenance>,
    pub assoc_nodes: BTreeMap<String, AssocNodeInfo>,
    /// Nodes whose state space carries `*`.
    pub star_nodes: BTreeSet<String>,
    /// Root nodes given a type-specific star prior, with the value used.
    pub root_star_priors: BTreeMap<String, f64>,
}
