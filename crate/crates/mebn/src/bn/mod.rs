//! Finite discrete Bayesian networks with exact inference.
//!
//! This is the substrate every constructed situation-specific network runs
//! on: immutable validated networks, a brute-force joint oracle, variable
//! elimination with a deterministic min-fill ordering, d-separation, and
//! query-preserving structural pruning.

mod dsep;
mod factor;
mod infer;

pub use dsep::{d_separated, prune_for_query};
pub use factor::Factor;
pub use infer::{
    brute_force_joint, brute_force_joint_capped, exact_query, max_abs_diff, JointTable,
    DEFAULT_JOINT_CAP,
};

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Tolerance for CPT row normalization and posterior comparisons.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BnError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}`: empty state space")]
    EmptyStates { node: String },
    #[error("node `{node}`: duplicate state label `{state}`")]
    DuplicateState { node: String, state: String },
    #[error("node `{child}` references unknown parent `{parent}`")]
    DanglingParent { child: String, parent: String },
    #[error("node `{node}`: duplicate parent `{parent}`")]
    DuplicateParent { node: String, parent: String },
    #[error("cycle detected involving node `{0}`")]
    Cycle(String),
    #[error("node `{node}`: cpt row count {got}, expected {expected}")]
    CptRowCount { node: String, got: usize, expected: usize },
    #[error("node `{node}`: cpt row {row} has {got} entries, expected {expected}")]
    CptRowWidth { node: String, row: usize, got: usize, expected: usize },
    #[error("node `{node}`: cpt row {row} is not a distribution (sum {sum})")]
    CptRowSum { node: String, row: usize, sum: f64 },
    #[error("node `{node}`: cpt row {row} has negative entry")]
    CptNegative { node: String, row: usize },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` has no state `{state}`")]
    UnknownState { node: String, state: String },
    #[error("target `{0}` is evidence")]
    TargetIsEvidence(String),
    #[error("node `{0}` appears in more than one of the query sets")]
    OverlappingSets(String),
    #[error("inconsistent evidence: observed configuration has probability zero")]
    InconsistentEvidence,
    #[error("joint table too large: {size} entries exceeds cap {cap}")]
    JointTooLarge { size: u128, cap: u64 },
    #[error("no targets given")]
    NoTargets,
}

/// A discrete random variable with its conditional probability table.
///
/// CPT rows are indexed by parent configurations in row-major order: the
/// first parent in `parents` is the most significant digit, the last varies
/// fastest. A parentless node has exactly one row (its prior).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNode {
    pub id: String,
    pub states: Vec<String>,
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

impl DiscreteNode {
    pub fn root(id: impl Into<String>, states: &[&str], prior: Vec<f64>) -> Self {
        DiscreteNode {
            id: id.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: Vec::new(),
            cpt: vec![prior],
        }
    }

    pub fn with_parents(
        id: impl Into<String>,
        states: &[&str],
        parents: &[&str],
        cpt: Vec<Vec<f64>>,
    ) -> Self {
        DiscreteNode {
            id: id.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpt,
        }
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// A validated, immutable Bayesian network.
///
/// Nodes are stored sorted by id, so identical node sets yield identical
/// networks regardless of insertion order.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<DiscreteNode>,
    index: BTreeMap<String, usize>,
    children: Vec<Vec<usize>>,
}

/// Posterior over an ordered set of target nodes.
///
/// `table` is row-major over the target state spaces (last target varies
/// fastest) and sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointQueryResult {
    pub targets: Vec<String>,
    pub state_spaces: Vec<Vec<String>>,
    pub table: Vec<f64>,
}

impl JointQueryResult {
    /// Marginal over a single target, in its state order.
    pub fn marginal(&self, target: &str) -> Option<Vec<f64>> {
        let t = self.targets.iter().position(|x| x == target)?;
        let card: Vec<usize> = self.state_spaces.iter().map(|s| s.len()).collect();
        let mut out = vec![0.0; card[t]];
        let mut idx = vec![0usize; card.len()];
        for v in &self.table {
            out[idx[t]] += v;
            for d in (0..card.len()).rev() {
                idx[d] += 1;
                if idx[d] < card[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Some(out)
    }

    /// Probability of a single joint state given by label per target.
    pub fn probability(&self, states: &[&str]) -> Option<f64> {
        if states.len() != self.targets.len() {
            return None;
        }
        let mut idx = 0usize;
        for (d, s) in states.iter().enumerate() {
            let k = self.state_spaces[d].iter().position(|x| x == s)?;
            idx = idx * self.state_spaces[d].len() + k;
        }
        self.table.get(idx).copied()
    }
}

/// Validates the node set and returns an immutable [`Network`].
pub fn build_network(mut nodes: Vec<DiscreteNode>) -> Result<Network, BnError> {
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut index = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id.clone(), i).is_some() {
            return Err(BnError::DuplicateNode(n.id.clone()));
        }
    }
    for n in &nodes {
        if n.states.is_empty() {
            return Err(BnError::EmptyStates { node: n.id.clone() });
        }
        let mut seen = BTreeSet::new();
        for s in &n.states {
            if !seen.insert(s) {
                return Err(BnError::DuplicateState { node: n.id.clone(), state: s.clone() });
            }
        }
        let mut pseen = BTreeSet::new();
        for p in &n.parents {
            if !index.contains_key(p) {
                return Err(BnError::DanglingParent { child: n.id.clone(), parent: p.clone() });
            }
            if !pseen.insert(p) {
                return Err(BnError::DuplicateParent { node: n.id.clone(), parent: p.clone() });
            }
        }
        let expected: usize = n
            .parents
            .iter()
            .map(|p| nodes[index[p]].states.len())
            .product();
        if n.cpt.len() != expected {
            return Err(BnError::CptRowCount { node: n.id.clone(), got: n.cpt.len(), expected });
        }
        for (r, row) in n.cpt.iter().enumerate() {
            if row.len() != n.states.len() {
                return Err(BnError::CptRowWidth {
                    node: n.id.clone(),
                    row: r,
                    got: row.len(),
                    expected: n.states.len(),
                });
            }
            let mut sum = 0.0;
            for &v in row {
                if v < 0.0 {
                    return Err(BnError::CptNegative { node: n.id.clone(), row: r });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > NORM_TOL {
                return Err(BnError::CptRowSum { node: n.id.clone(), row: r, sum });
            }
        }
    }
    // renormalize rows that are within tolerance
    for n in &mut nodes {
        for row in &mut n.cpt {
            let sum: f64 = row.iter().sum();
            if sum != 1.0 {
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
    // cycle check via Kahn's algorithm
    let n_nodes = nodes.len();
    let mut children = vec![Vec::new(); n_nodes];
    let mut indeg = vec![0usize; n_nodes];
    for (i, n) in nodes.iter().enumerate() {
        indeg[i] = n.parents.len();
        for p in &n.parents {
            children[index[p]].push(i);
        }
    }
    let mut queue: Vec<usize> = (0..n_nodes).filter(|&i| indeg[i] == 0).collect();
    let mut removed = 0usize;
    while let Some(i) = queue.pop() {
        removed += 1;
        for &c in &children[i] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push(c);
            }
        }
    }
    if removed != n_nodes {
        let culprit = indeg
            .iter()
            .position(|&d| d > 0)
            .map(|i| nodes[i].id.clone())
            .unwrap_or_default();
        return Err(BnError::Cycle(culprit));
    }
    Ok(Network { nodes, index, children })
}

impl Network {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DiscreteNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&DiscreteNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    pub(crate) fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub(crate) fn parent_indices(&self, i: usize) -> Vec<usize> {
        self.nodes[i].parents.iter().map(|p| self.index[p]).collect()
    }

    /// Resolves a node-id list, rejecting unknown ids.
    pub(crate) fn resolve(&self, ids: &[&str]) -> Result<Vec<usize>, BnError> {
        ids.iter()
            .map(|id| {
                self.index
                    .get(*id)
                    .copied()
                    .ok_or_else(|| BnError::UnknownNode(id.to_string()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab_net() -> Network {
        build_network(vec![
            DiscreteNode::root("A", &["t", "f"], vec![0.3, 0.7]),
            DiscreteNode::with_parents(
                "B",
                &["t", "f"],
                &["A"],
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn single_node_network() {
        let net = build_network(vec![DiscreteNode::root("A", &["t", "f"], vec![0.5, 0.5])])
            .unwrap();
        assert_eq!(net.len(), 1);
    }

    #[test]
    fn smallest_cycle_rejected() {
        let err = build_network(vec![
            DiscreteNode::with_parents("A", &["t", "f"], &["B"], vec![vec![0.5, 0.5]; 2]),
            DiscreteNode::with_parents("B", &["t", "f"], &["A"], vec![vec![0.5, 0.5]; 2]),
        ])
        .unwrap_err();
        assert!(matches!(err, BnError::Cycle(_)), "{err}");
    }

    #[test]
    fn row_count_mismatch_reports_node_and_counts() {
        let err = build_network(vec![
            DiscreteNode::root("A", &["t", "f"], vec![0.5, 0.5]),
            DiscreteNode::with_parents("B", &["t", "f"], &["A"], vec![vec![0.5, 0.5]]),
        ])
        .unwrap_err();
        assert_eq!(
            err.to_string(),
            "node `B`: cpt row count 1, expected 2"
        );
    }

    #[test]
    fn dangling_parent_rejected() {
        let err = build_network(vec![DiscreteNode::with_parents(
            "B",
            &["t", "f"],
            &["A"],
            vec![vec![0.5, 0.5]; 2],
        )])
        .unwrap_err();
        assert!(matches!(err, BnError::DanglingParent { .. }));
    }

    #[test]
    fn non_normalized_row_rejected() {
        let err = build_network(vec![DiscreteNode::root("A", &["t", "f"], vec![0.5, 0.6])])
            .unwrap_err();
        assert!(matches!(err, BnError::CptRowSum { .. }));
    }

    #[test]
    fn marginal_of_joint_result() {
        let net = ab_net();
        let res = exact_query(&net, &["A", "B"], &BTreeMap::new()).unwrap();
        let ma = res.marginal("A").unwrap();
        assert!((ma[0] - 0.3).abs() < NORM_TOL);
        let mb = res.marginal("B").unwrap();
        assert!((mb[0] - (0.3 * 0.9 + 0.7 * 0.2)).abs() < NORM_TOL);
    }
}
