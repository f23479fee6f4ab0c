use std::collections::{BTreeSet, VecDeque};

use super::GridCase;

/// Unweighted bus graph. The 0/1 adjacency matrix is the graph shift operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGraph {
    n: usize,
    shift: Vec<u8>,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl GridGraph {
    /// Builds a simple graph from node pairs. Self loops are dropped and
    /// parallel pairs collapse into one edge.
    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let set: BTreeSet<(usize, usize)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| {
                assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
                (a.min(b), a.max(b))
            })
            .collect();
        let mut shift = vec![0u8; n * n];
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &set {
            shift[a * n + b] = 1;
            shift[b * n + a] = 1;
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        GridGraph {
            n,
            shift,
            edges: set.into_iter().collect(),
            neighbors,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shift(&self, i: usize, j: usize) -> u8 {
        self.shift[i * self.n + j]
    }

    /// Row-major N×N adjacency.
    pub fn shift_matrix(&self) -> &[u8] {
        &self.shift
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edge_list(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap() + 1;
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }
}

/// Adjacency graph of a case; node order follows bus order.
pub fn build_graph(case: &GridCase) -> GridGraph {
    GridGraph::from_edges(case.n_buses(), case.branch_endpoints())
}
