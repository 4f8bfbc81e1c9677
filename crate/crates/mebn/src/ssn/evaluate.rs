//! Exact evaluation of a constructed network: per-target marginals, the
//! optional joint over targets, and P(`*`) for every star-bearing node.

use std::collections::BTreeMap;

use crate::bn::{exact_query, JointQueryResult};
use crate::STAR;

use super::{ConstructError, ConstructedNetwork, Query};

#[derive(Debug, Clone)]
pub struct EvaluationResult {
    /// Per-target posterior: `(state, probability)` in state order.
    pub marginals: BTreeMap<String, Vec<(String, f64)>>,
    /// Joint posterior over all targets, when requested.
    pub joint: Option<JointQueryResult>,
    /// P(`*`) for every non-evidence node carrying a `*` state (all
    /// association nodes and star-bearing hypothesis nodes).
    pub star_posteriors: BTreeMap<String, f64>,
}

/// Evaluates the query on a constructed (typically minimalized) network.
pub fn evaluate_query(
    cn: &ConstructedNetwork,
    query: &Query,
    want_joint: bool,
) -> Result<EvaluationResult, ConstructError> {
    let evidence: BTreeMap<String, String> = query
        .evidence_ids()
        .into_iter()
        .filter(|(k, _)| cn.net.contains(k))
        .collect();

    let mut marginals = BTreeMap::new();
    for t in query.target_ids() {
        let r = exact_query(&cn.net, &[&t], &evidence)?;
        let states = r.state_spaces[0].clone();
        marginals.insert(t, states.into_iter().zip(r.table.iter().copied()).collect());
    }

    let joint = if want_joint {
        let targets = query.target_ids();
        let refs: Vec<&str> = targets.iter().map(|s| s.as_str()).collect();
        Some(exact_query(&cn.net, &refs, &evidence)?)
    } else {
        None
    };

    let mut star_posteriors = BTreeMap::new();
    for node in cn.net.nodes() {
        if evidence.contains_key(&node.id) {
            continue;
        }
        let Some(star_idx) = node.state_index(STAR) else { continue };
        let r = exact_query(&cn.net, &[&node.id], &evidence)?;
        star_posteriors.insert(node.id.clone(), r.table[star_idx]);
    }

    Ok(EvaluationResult { marginals, joint, star_posteriors })
}
