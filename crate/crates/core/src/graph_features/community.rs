use std::collections::{BTreeMap, VecDeque};

use crate::error::GraphError;
use crate::grid_io::GridGraph;

use super::centrality::hop_sums;

fn adjacency(graph: &GridGraph) -> Vec<Vec<usize>> {
    (0..graph.n()).map(|i| graph.neighbors(i).to_vec()).collect()
}

/// Shortest-path edge betweenness (Brandes), keyed by `(i, j)` with `i < j`.
/// Each unordered source/target pair is counted once.
fn betweenness_of(adj: &[Vec<usize>]) -> BTreeMap<(usize, usize), f64> {
    let n = adj.len();
    let mut eb = BTreeMap::new();
    for (i, nb) in adj.iter().enumerate() {
        for &j in nb.iter().filter(|&&j| i < j) {
            eb.insert((i, j), 0.0);
        }
    }
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &adj[w] {
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                    *eb.get_mut(&(v.min(w), v.max(w))).expect("edge present") += c / 2.0;
                    delta[v] += c;
                }
            }
        }
    }
    eb
}

/// Edge betweenness of the whole graph, sorted by edge.
pub fn edge_betweenness(graph: &GridGraph) -> Vec<((usize, usize), f64)> {
    betweenness_of(&adjacency(graph)).into_iter().collect()
}

fn components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![s];
        label[s] = id;
        let mut head = 0;
        while head < members.len() {
            let v = members[head];
            head += 1;
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = id;
                    members.push(w);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Girvan–Newman splitting: drop the edge of highest betweenness, recomputed
/// after every removal, until `target` components remain. Betweenness values
/// within 1e-9 relative of the maximum count as tied and the smallest edge
/// goes first. Communities are sorted by their smallest member.
pub fn detect_communities(graph: &GridGraph, target: usize) -> Result<Vec<Vec<usize>>, GraphError> {
    let n = graph.n();
    if target < 1 || target > n {
        return Err(GraphError::InvalidArgument(format!(
            "community count {target} outside 1..={n}"
        )));
    }
    if !graph.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let mut adj = adjacency(graph);
    let mut parts = components(&adj);
    while parts.len() < target {
        let eb = betweenness_of(&adj);
        let max = eb.values().copied().fold(0.0, f64::max);
        let (&(i, j), _) = eb
            .iter()
            .find(|(_, &v)| v >= max * (1.0 - 1e-9))
            .expect("graph still has edges");
        adj[i].retain(|&k| k != j);
        adj[j].retain(|&k| k != i);
        parts = components(&adj);
    }
    Ok(parts)
}

/// `true` if node `a` ranks ahead of `b`: higher closeness (smaller hop sum),
/// then higher degree, then lower index.
fn ranks_ahead(graph: &GridGraph, sums: &[usize], a: usize, b: usize) -> bool {
    (sums[a], std::cmp::Reverse(graph.degree(a)), a) < (sums[b], std::cmp::Reverse(graph.degree(b)), b)
}

fn ranked(graph: &GridGraph, sums: &[usize], nodes: &[usize]) -> Vec<usize> {
    let mut v = nodes.to_vec();
    v.sort_by_key(|&i| (sums[i], std::cmp::Reverse(graph.degree(i)), i));
    v
}

/// One aggregation node per community: the member with the highest
/// closeness in the full graph. `n_nodes == 1` picks the global maximiser.
/// Output follows community order.
pub fn select_aggregation_nodes(graph: &GridGraph, n_nodes: usize) -> Result<Vec<usize>, GraphError> {
    let sums = hop_sums(graph)?;
    let parts = if n_nodes == 1 {
        vec![(0..graph.n()).collect()]
    } else {
        detect_communities(graph, n_nodes)?
    };
    Ok(parts
        .iter()
        .map(|members| {
            members
                .iter()
                .copied()
                .reduce(|best, i| if ranks_ahead(graph, &sums, i, best) { i } else { best })
                .expect("communities are non-empty")
        })
        .collect())
}

/// The `⌈budget·N⌉` highest-closeness nodes, sorted by index.
pub fn pmu_placement(graph: &GridGraph, budget: f64) -> Result<Vec<usize>, GraphError> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(GraphError::InvalidArgument(format!("budget {budget} outside (0, 1]")));
    }
    let n = graph.n();
    let sums = hop_sums(graph)?;
    // Guard against products like 0.3·10 = 3.0000000000000004.
    let count = ((budget * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let all: Vec<usize> = (0..n).collect();
    let mut chosen: Vec<usize> = ranked(graph, &sums, &all).into_iter().take(count.min(n)).collect();
    chosen.sort_unstable();
    Ok(chosen)
}
