//! d-separation and query-preserving structural pruning.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{build_network, BnError, DiscreteNode, Network};

/// True iff every undirected path from `x` to `y` is blocked by `z`.
///
/// Uses the moralized-ancestral-graph criterion: moralize the subgraph
/// induced by the ancestral closure of x ∪ y ∪ z, delete z, and test
/// reachability.
pub fn d_separated(
    net: &Network,
    x: &[&str],
    y: &[&str],
    z: &[&str],
) -> Result<bool, BnError> {
    let xi = net.resolve(x)?;
    let yi = net.resolve(y)?;
    let zi = net.resolve(z)?;
    for &i in xi.iter().chain(&yi) {
        if zi.contains(&i) || (xi.contains(&i) && yi.contains(&i)) {
            return Err(BnError::OverlappingSets(net.nodes()[i].id.clone()));
        }
    }
    Ok(d_separated_idx(net, &xi, &yi, &zi))
}

pub(crate) fn d_separated_idx(net: &Network, x: &[usize], y: &[usize], z: &[usize]) -> bool {
    let anc = ancestral_closure(net, x.iter().chain(y).chain(z).copied());
    let moral = moral_adjacency(net, &anc);
    let blocked: BTreeSet<usize> = z.iter().copied().collect();
    // BFS from x avoiding z
    let mut seen: BTreeSet<usize> = x.iter().copied().filter(|i| !blocked.contains(i)).collect();
    let mut queue: VecDeque<usize> = seen.iter().copied().collect();
    let targets: BTreeSet<usize> = y.iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        if targets.contains(&v) {
            return false;
        }
        if let Some(nbrs) = moral.get(&v) {
            for &w in nbrs {
                if !blocked.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
    }
    true
}

fn ancestral_closure(net: &Network, seeds: impl Iterator<Item = usize>) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<usize> = seeds.collect();
    while let Some(v) = stack.pop() {
        if out.insert(v) {
            stack.extend(net.parent_indices(v));
        }
    }
    out
}

/// Moral (undirected) adjacency of the subgraph induced by `keep`:
/// parent-child edges plus marriages between co-parents.
fn moral_adjacency(net: &Network, keep: &BTreeSet<usize>) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &v in keep {
        adj.entry(v).or_default();
        let pars: Vec<usize> = net
            .parent_indices(v)
            .into_iter()
            .filter(|p| keep.contains(p))
            .collect();
        for &p in &pars {
            adj.entry(v).or_default().insert(p);
            adj.entry(p).or_default().insert(v);
        }
        for (i, &a) in pars.iter().enumerate() {
            for &b in &pars[i + 1..] {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
        }
    }
    adj
}

/// Removes nodes irrelevant to `P(targets | evidence)`.
///
/// Two passes, iterated: barren-node removal (non-target, non-evidence nodes
/// with no retained children), then removal of nodes that contribute only a
/// constant factor to the posterior. The latter is determined on the moral
/// graph with evidence variables instantiated: connected components not
/// containing a target are irrelevant. Evidence and target nodes are always
/// retained; a retained evidence node whose own factor became irrelevant is
/// re-rooted with a uniform prior (any positive distribution leaves the
/// conditional posterior unchanged).
pub fn prune_for_query(
    net: &Network,
    targets: &[&str],
    evidence: &[&str],
) -> Result<Network, BnError> {
    if targets.is_empty() {
        return Err(BnError::NoTargets);
    }
    let t_idx = net.resolve(targets)?;
    let e_idx = net.resolve(evidence)?;
    for &t in &t_idx {
        if e_idx.contains(&t) {
            return Err(BnError::TargetIsEvidence(net.nodes()[t].id.clone()));
        }
    }
    let t_set: BTreeSet<usize> = t_idx.iter().copied().collect();
    let e_set: BTreeSet<usize> = e_idx.iter().copied().collect();

    // barren removal
    let mut retained: BTreeSet<usize> = (0..net.len()).collect();
    loop {
        let barren: Vec<usize> = retained
            .iter()
            .copied()
            .filter(|&v| {
                !t_set.contains(&v)
                    && !e_set.contains(&v)
                    && net.children_of(v).iter().all(|c| !retained.contains(c))
            })
            .collect();
        if barren.is_empty() {
            break;
        }
        for v in barren {
            retained.remove(&v);
        }
    }

    // relevant component: moral graph over retained nodes with evidence
    // removed (instantiated); keep components that touch a target
    let non_ev: BTreeSet<usize> =
        retained.iter().copied().filter(|v| !e_set.contains(v)).collect();
    let moral = moral_adjacency_instantiated(net, &retained, &e_set);
    let mut relevant: BTreeSet<usize> = BTreeSet::new();
    let mut queue: VecDeque<usize> = t_set.iter().copied().collect();
    relevant.extend(&t_set);
    while let Some(v) = queue.pop_front() {
        if let Some(nbrs) = moral.get(&v) {
            for &w in nbrs {
                if non_ev.contains(&w) && relevant.insert(w) {
                    queue.push_back(w);
                }
            }
        }
    }

    // final node set: relevant non-evidence nodes, all targets, all evidence
    let mut kept: BTreeSet<usize> = relevant.clone();
    kept.extend(&e_set);
    let mut out_nodes = Vec::new();
    for &v in &kept {
        let n = &net.nodes()[v];
        let pars = net.parent_indices(v);
        let all_parents_kept = pars.iter().all(|p| kept.contains(p));
        let factor_relevant = relevant.contains(&v)
            || pars.iter().any(|p| relevant.contains(p));
        if all_parents_kept && factor_relevant {
            out_nodes.push(n.clone());
        } else {
            // factor is a constant w.r.t. the relevant component: re-root
            let k = n.states.len();
            out_nodes.push(DiscreteNode {
                id: n.id.clone(),
                states: n.states.clone(),
                parents: Vec::new(),
                cpt: vec![vec![1.0 / k as f64; k]],
            });
        }
    }
    build_network(out_nodes)
}

/// Moral adjacency over `keep` where each node's factor scope is its family
/// minus instantiated evidence variables: evidence nodes do not transmit
/// connectivity, but their parents become married.
fn moral_adjacency_instantiated(
    net: &Network,
    keep: &BTreeSet<usize>,
    evidence: &BTreeSet<usize>,
) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &v in keep {
        let mut scope: Vec<usize> = net
            .parent_indices(v)
            .into_iter()
            .filter(|p| keep.contains(p) && !evidence.contains(p))
            .collect();
        if !evidence.contains(&v) {
            scope.push(v);
        }
        for (i, &a) in scope.iter().enumerate() {
            adj.entry(a).or_default();
            for &b in &scope[i + 1..] {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
        }
    }
    adj
}
