//! Exact inference: a brute-force joint oracle and variable elimination.

use std::collections::BTreeMap;

use super::factor::Factor;
use super::{BnError, JointQueryResult, Network};

/// Default cap on the number of entries in a brute-force joint table.
pub const DEFAULT_JOINT_CAP: u64 = 10_000_000;

/// Full joint distribution over every node of a network, in the network's
/// node order (sorted by id). Row-major, last node varies fastest.
#[derive(Debug, Clone)]
pub struct JointTable {
    pub node_ids: Vec<String>,
    pub state_spaces: Vec<Vec<String>>,
    pub table: Vec<f64>,
}

impl JointTable {
    /// Probability of a full assignment given as one state label per node,
    /// in the table's node order.
    pub fn probability(&self, states: &[&str]) -> Option<f64> {
        let mut idx = 0usize;
        for (d, s) in states.iter().enumerate() {
            let k = self.state_spaces[d].iter().position(|x| x == s)?;
            idx = idx * self.state_spaces[d].len() + k;
        }
        self.table.get(idx).copied()
    }

    /// Marginal over a subset of nodes, normalized after restricting to the
    /// given evidence. Independent of the variable-elimination path; used as
    /// a test oracle.
    pub fn query(
        &self,
        targets: &[&str],
        evidence: &BTreeMap<String, String>,
    ) -> Result<JointQueryResult, BnError> {
        let t_idx: Vec<usize> = targets
            .iter()
            .map(|t| {
                self.node_ids
                    .iter()
                    .position(|x| x == t)
                    .ok_or_else(|| BnError::UnknownNode(t.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let mut ev: Vec<Option<usize>> = vec![None; self.node_ids.len()];
        for (node, state) in evidence {
            let i = self
                .node_ids
                .iter()
                .position(|x| x == node)
                .ok_or_else(|| BnError::UnknownNode(node.clone()))?;
            let k = self.state_spaces[i]
                .iter()
                .position(|x| x == state)
                .ok_or_else(|| BnError::UnknownState { node: node.clone(), state: state.clone() })?;
            ev[i] = Some(k);
        }
        let card: Vec<usize> = self.state_spaces.iter().map(|s| s.len()).collect();
        let t_card: Vec<usize> = t_idx.iter().map(|&i| card[i]).collect();
        let mut out = vec![0.0; t_card.iter().product()];
        let mut idx = vec![0usize; card.len()];
        for &v in &self.table {
            let consistent = ev
                .iter()
                .enumerate()
                .all(|(i, e)| e.map_or(true, |k| idx[i] == k));
            if consistent {
                let mut pos = 0usize;
                for (d, &i) in t_idx.iter().enumerate() {
                    pos = pos * t_card[d] + idx[i];
                }
                out[pos] += v;
            }
            for d in (0..card.len()).rev() {
                idx[d] += 1;
                if idx[d] < card[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let z: f64 = out.iter().sum();
        if z <= 0.0 {
            return Err(BnError::InconsistentEvidence);
        }
        for v in &mut out {
            *v /= z;
        }
        Ok(JointQueryResult {
            targets: targets.iter().map(|s| s.to_string()).collect(),
            state_spaces: t_idx.iter().map(|&i| self.state_spaces[i].clone()).collect(),
            table: out,
        })
    }
}

/// Multiplies out the full joint table. Only feasible for small networks;
/// serves as the independent oracle for the elimination engine.
pub fn brute_force_joint(net: &Network) -> Result<JointTable, BnError> {
    brute_force_joint_capped(net, DEFAULT_JOINT_CAP)
}

pub fn brute_force_joint_capped(net: &Network, cap: u64) -> Result<JointTable, BnError> {
    let mut size: u128 = 1;
    for n in net.nodes() {
        size = size.saturating_mul(n.states.len() as u128);
    }
    if size > cap as u128 {
        return Err(BnError::JointTooLarge { size, cap });
    }
    let card: Vec<usize> = net.nodes().iter().map(|n| n.states.len()).collect();
    let mut table = vec![0.0; size as usize];
    let mut idx = vec![0usize; card.len()];
    let parent_idx: Vec<Vec<usize>> =
        (0..net.len()).map(|i| net.parent_indices(i)).collect();
    for slot in table.iter_mut() {
        let mut p = 1.0;
        for (i, n) in net.nodes().iter().enumerate() {
            let mut row = 0usize;
            for &pi in &parent_idx[i] {
                row = row * card[pi] + idx[pi];
            }
            p *= n.cpt[row][idx[i]];
            if p == 0.0 {
                break;
            }
        }
        *slot = p;
        for d in (0..card.len()).rev() {
            idx[d] += 1;
            if idx[d] < card[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(JointTable {
        node_ids: net.node_ids().map(|s| s.to_string()).collect(),
        state_spaces: net.nodes().iter().map(|n| n.states.clone()).collect(),
        table,
    })
}

/// Exact posterior over `targets` given `evidence`, by variable elimination
/// with a deterministic min-fill ordering (lexicographic node-id tie-break).
pub fn exact_query(
    net: &Network,
    targets: &[&str],
    evidence: &BTreeMap<String, String>,
) -> Result<JointQueryResult, BnError> {
    if targets.is_empty() {
        return Err(BnError::NoTargets);
    }
    let t_idx = net.resolve(targets)?;
    let mut ev: BTreeMap<usize, usize> = BTreeMap::new();
    for (node, state) in evidence {
        let i = net
            .node_index(node)
            .ok_or_else(|| BnError::UnknownNode(node.clone()))?;
        let k = net.nodes()[i]
            .state_index(state)
            .ok_or_else(|| BnError::UnknownState { node: node.clone(), state: state.clone() })?;
        ev.insert(i, k);
    }
    for &t in &t_idx {
        if ev.contains_key(&t) {
            return Err(BnError::TargetIsEvidence(net.nodes()[t].id.clone()));
        }
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for &t in &t_idx {
            if !seen.insert(t) {
                return Err(BnError::OverlappingSets(net.nodes()[t].id.clone()));
            }
        }
    }

    // one factor per node, restricted by evidence
    let card: Vec<usize> = net.nodes().iter().map(|n| n.states.len()).collect();
    let mut factors: Vec<Factor> = Vec::with_capacity(net.len());
    for (i, n) in net.nodes().iter().enumerate() {
        let mut vars = net.parent_indices(i);
        vars.push(i);
        let cards: Vec<usize> = vars.iter().map(|&v| card[v]).collect();
        let values: Vec<f64> = n.cpt.iter().flatten().copied().collect();
        let mut f = Factor::from_table(vars, cards, values);
        for (&e, &k) in &ev {
            f = f.restrict(e, k);
        }
        factors.push(f);
    }

    // eliminate every non-target, non-evidence variable in min-fill order
    let keep: std::collections::BTreeSet<usize> = t_idx.iter().copied().collect();
    let mut to_eliminate: Vec<usize> = (0..net.len())
        .filter(|i| !keep.contains(i) && !ev.contains_key(i))
        .collect();
    while !to_eliminate.is_empty() {
        let v = pick_min_fill(net, &factors, &to_eliminate, &keep);
        to_eliminate.retain(|&x| x != v);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors
            .into_iter()
            .partition(|f| f.vars.binary_search(&v).is_ok());
        factors = rest;
        let mut prod = Factor::constant(1.0);
        for f in touching {
            prod = prod.product(&f);
        }
        factors.push(prod.sum_out(v));
    }

    let mut joint = Factor::constant(1.0);
    for f in &factors {
        joint = joint.product(f);
    }
    let z = joint.sum();
    if z <= 0.0 {
        return Err(BnError::InconsistentEvidence);
    }

    // joint.vars is sorted; reorder to the requested target order
    let t_card: Vec<usize> = t_idx.iter().map(|&i| card[i]).collect();
    let mut out = vec![0.0; t_card.iter().product()];
    let n = joint.vars.len();
    debug_assert_eq!(n, t_idx.len());
    let pos_of: Vec<usize> = t_idx
        .iter()
        .map(|t| joint.vars.binary_search(t).unwrap())
        .collect();
    let mut idx = vec![0usize; n];
    for &val in &joint.values {
        let mut pos = 0usize;
        for (d, &p) in pos_of.iter().enumerate() {
            pos = pos * t_card[d] + idx[p];
        }
        out[pos] += val / z;
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < joint.card[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(JointQueryResult {
        targets: targets.iter().map(|s| s.to_string()).collect(),
        state_spaces: t_idx
            .iter()
            .map(|&i| net.nodes()[i].states.clone())
            .collect(),
        table: out,
    })
}

/// Min-fill elimination heuristic over the current factor interaction graph.
/// Ties break on fewest-neighbors, then lexicographic node id.
fn pick_min_fill(
    net: &Network,
    factors: &[Factor],
    candidates: &[usize],
    _keep: &std::collections::BTreeSet<usize>,
) -> usize {
    use std::collections::BTreeSet;
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for f in factors {
        for &a in &f.vars {
            for &b in &f.vars {
                if a != b {
                    adj.entry(a).or_default().insert(b);
                }
            }
        }
    }
    let empty = BTreeSet::new();
    let mut best: Option<(usize, usize, &str)> = None; // (fill, degree, id) minimized
    let mut best_var = candidates[0];
    for &v in candidates {
        let nbrs = adj.get(&v).unwrap_or(&empty);
        let nlist: Vec<usize> = nbrs.iter().copied().collect();
        let mut fill = 0usize;
        for (i, &a) in nlist.iter().enumerate() {
            for &b in &nlist[i + 1..] {
                if !adj.get(&a).map_or(false, |s| s.contains(&b)) {
                    fill += 1;
                }
            }
        }
        let key = (fill, nlist.len(), net.nodes()[v].id.as_str());
        if best.map_or(true, |b| key < b) {
            best = Some(key);
            best_var = v;
        }
    }
    best_var
}

/// Asserts (in tests) that two distributions agree within `NORM_TOL`.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{build_network, DiscreteNode, NORM_TOL};

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
    fn brute_force_hand_product() {
        let joint = brute_force_joint(&ab_net()).unwrap();
        assert!((joint.probability(&["t", "t"]).unwrap() - 0.27).abs() < 1e-12);
        assert!((joint.table.iter().sum::<f64>() - 1.0).abs() < NORM_TOL);
    }

    #[test]
    fn brute_force_uniform_single_node() {
        let net =
            build_network(vec![DiscreteNode::root("A", &["t", "f"], vec![0.5, 0.5])]).unwrap();
        let joint = brute_force_joint(&net).unwrap();
        assert_eq!(joint.table, vec![0.5, 0.5]);
    }

    #[test]
    fn brute_force_deterministic_chain() {
        let net = build_network(vec![
            DiscreteNode::root("A", &["t", "f"], vec![0.3, 0.7]),
            DiscreteNode::with_parents(
                "B",
                &["t", "f"],
                &["A"],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ),
        ])
        .unwrap();
        let joint = brute_force_joint(&net).unwrap();
        assert!((joint.probability(&["t", "t"]).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(joint.probability(&["t", "f"]).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_cap() {
        let nodes: Vec<DiscreteNode> = (0..10)
            .map(|i| DiscreteNode::root(format!("n{i}"), &["a", "b", "c", "d"], vec![0.25; 4]))
            .collect();
        let net = build_network(nodes).unwrap();
        let err = brute_force_joint_capped(&net, 1000).unwrap_err();
        assert!(matches!(err, BnError::JointTooLarge { .. }));
    }

    #[test]
    fn posterior_matches_hand_computation() {
        let net = ab_net();
        let mut ev = BTreeMap::new();
        ev.insert("B".to_string(), "t".to_string());
        let res = exact_query(&net, &["A"], &ev).unwrap();
        assert!((res.table[0] - 0.27 / 0.41).abs() < NORM_TOL);
    }

    #[test]
    fn target_cannot_be_evidence() {
        let net = ab_net();
        let mut ev = BTreeMap::new();
        ev.insert("A".to_string(), "t".to_string());
        let err = exact_query(&net, &["A"], &ev).unwrap_err();
        assert_eq!(err, BnError::TargetIsEvidence("A".to_string()));
    }

    #[test]
    fn root_query_returns_prior() {
        let net = ab_net();
        let res = exact_query(&net, &["A"], &BTreeMap::new()).unwrap();
        assert!(max_abs_diff(&res.table, &[0.3, 0.7]) < NORM_TOL);
    }

    #[test]
    fn zero_probability_evidence_is_error() {
        let net = build_network(vec![
            DiscreteNode::root("A", &["t", "f"], vec![1.0, 0.0]),
            DiscreteNode::with_parents(
                "B",
                &["t", "f"],
                &["A"],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ),
        ])
        .unwrap();
        let mut ev = BTreeMap::new();
        ev.insert("B".to_string(), "f".to_string());
        let err = exact_query(&net, &["A"], &ev).unwrap_err();
        assert_eq!(err, BnError::InconsistentEvidence);
    }

    #[test]
    fn ve_agrees_with_oracle_on_three_chain() {
        let net = build_network(vec![
            DiscreteNode::root("A", &["t", "f"], vec![0.6, 0.4]),
            DiscreteNode::with_parents(
                "B",
                &["t", "f"],
                &["A"],
                vec![vec![0.7, 0.3], vec![0.1, 0.9]],
            ),
            DiscreteNode::with_parents(
                "C",
                &["t", "f"],
                &["B"],
                vec![vec![0.25, 0.75], vec![0.5, 0.5]],
            ),
        ])
        .unwrap();
        let mut ev = BTreeMap::new();
        ev.insert("C".to_string(), "t".to_string());
        let ve = exact_query(&net, &["A"], &ev).unwrap();
        let oracle = brute_force_joint(&net).unwrap().query(&["A"], &ev).unwrap();
        assert!(max_abs_diff(&ve.table, &oracle.table) < NORM_TOL);
    }
}
