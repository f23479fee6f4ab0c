use crate::error::GraphError;
use crate::grid_io::GridGraph;

pub const EIGEN_TOL: f64 = 1e-10;
pub const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores {
    pub closeness: Vec<f64>,
    /// Max-normalised to 1.
    pub eigenvector: Vec<f64>,
}

/// Sum of BFS hop distances from every node to all others.
pub fn hop_sums(graph: &GridGraph) -> Result<Vec<usize>, GraphError> {
    (0..graph.n())
        .map(|s| {
            graph
                .bfs_distances(s)
                .into_iter()
                .try_fold(0usize, |acc, d| d.map(|d| acc + d))
                .ok_or(GraphError::Disconnected)
        })
        .collect()
}

/// `1 / Σ_j hops(i, j)`. A single-node graph scores 0 by convention.
pub fn closeness_centrality(graph: &GridGraph) -> Result<Vec<f64>, GraphError> {
    Ok(hop_sums(graph)?
        .into_iter()
        .map(|s| if s == 0 { 0.0 } else { 1.0 / s as f64 })
        .collect())
}

/// Dominant adjacency eigenvector by power iteration on `S + I` (the shift
/// keeps bipartite graphs from oscillating). Stops once
/// `‖S·c − ρ·c‖₂ ≤ tol·‖c‖₂` with `ρ` the Rayleigh quotient.
pub fn eigenvector_centrality(graph: &GridGraph, tol: f64, max_iter: usize) -> Result<Vec<f64>, GraphError> {
    let n = graph.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    if !graph.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let apply = |c: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| graph.neighbors(i).iter().map(|&j| c[j]).sum())
            .collect()
    };
    let mut c = vec![1.0; n];
    for _ in 0..max_iter {
        let sc = apply(&c);
        let cc: f64 = c.iter().map(|v| v * v).sum();
        let rho = c.iter().zip(&sc).map(|(a, b)| a * b).sum::<f64>() / cc;
        let resid: f64 = sc
            .iter()
            .zip(&c)
            .map(|(s, v)| (s - rho * v).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid <= tol * cc.sqrt() {
            return Ok(c);
        }
        let next: Vec<f64> = sc.iter().zip(&c).map(|(s, v)| s + v).collect();
        let max = next.iter().copied().fold(0.0, f64::max);
        c = next.into_iter().map(|v| v / max).collect();
    }
    Err(GraphError::NoConvergence { iterations: max_iter })
}

pub fn centrality_scores(graph: &GridGraph) -> Result<CentralityScores, GraphError> {
    Ok(CentralityScores {
        closeness: closeness_centrality(graph)?,
        eigenvector: eigenvector_centrality(graph, EIGEN_TOL, EIGEN_MAX_ITER)?,
    })
}
