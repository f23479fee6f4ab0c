//! Node signals, K-hop aggregation features, centralities, communities and
//! sensor placement.

mod centrality;
mod community;

use nalgebra::DMatrix;

use crate::grid_io::{GridCase, GridGraph};
use crate::steady_state::OperatingPoint;

pub use centrality::{
    centrality_scores, closeness_centrality, eigenvector_centrality, hop_sums, CentralityScores,
    EIGEN_MAX_ITER, EIGEN_TOL,
};
pub use community::{detect_communities, edge_betweenness, pmu_placement, select_aggregation_nodes};

/// Signals per bus: `v_mag`, `p_net`, `q_net`.
pub const N_FEATURES: usize = 3;

/// Per-branch sending-end flows with the dense endpoints of each branch.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlows {
    pub endpoints: Vec<(usize, usize)>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Node signals (N×F, columns `v_mag, p_net, q_net`) plus the line flows
/// used by the two extra feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignals {
    pub x: DMatrix<f64>,
    pub lines: LineFlows,
}

impl GraphSignals {
    pub fn from_operating_point(case: &GridCase, op: &OperatingPoint) -> Self {
        let n = case.n_buses();
        let mut x = DMatrix::zeros(n, N_FEATURES);
        for i in 0..n {
            x[(i, 0)] = op.v_mag[i];
            x[(i, 1)] = op.p_net[i];
            x[(i, 2)] = op.q_net[i];
        }
        GraphSignals {
            x,
            lines: LineFlows {
                endpoints: case.branch_endpoints(),
                p: op.line_p.clone(),
                q: op.line_q.clone(),
            },
        }
    }
}

/// Stacked features for one or more aggregation nodes: a `(K+2) × (F·nodes)`
/// matrix whose column `j·F + f` holds feature `f` aggregated at `nodes[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggFeatures {
    pub z: DMatrix<f64>,
    pub k_len: usize,
    pub nodes: Vec<usize>,
}

/// One application of the shift: `out[i] = Σ_{j ~ i} x[j]`, per column.
/// Neighbour values are added in ascending value order so the result does
/// not depend on node numbering.
fn shift_once(graph: &GridGraph, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut buf = Vec::new();
    for i in 0..graph.n() {
        for f in 0..x.ncols() {
            buf.clear();
            buf.extend(graph.neighbors(i).iter().map(|&j| x[(j, f)]));
            buf.sort_unstable_by(f64::total_cmp);
            out[(i, f)] = buf.iter().sum();
        }
    }
    out
}

/// Rows `k = 0..K-1` hold `[S^k x]_node` for every feature column, built by
/// repeated neighbour sums.
pub fn aggregate(graph: &GridGraph, x: &DMatrix<f64>, node: usize, k_len: usize) -> DMatrix<f64> {
    assert!(k_len >= 1 && node < graph.n() && x.nrows() == graph.n());
    let mut out = DMatrix::zeros(k_len, x.ncols());
    let mut cur = x.clone();
    for k in 0..k_len {
        out.set_row(k, &cur.row(node));
        if k + 1 < k_len {
            cur = shift_once(graph, &cur);
        }
    }
    out
}

fn sum_mean_max(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [0.0; 3];
    }
    let sum: f64 = values.iter().sum();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [sum, sum / values.len() as f64, max]
}

/// Appends `[sum, mean, max]` of the active and of the reactive flow on the
/// branches touching `node`. Flows are oriented out of `node`. A node with
/// no branches gets two zero rows.
pub fn append_line_flow_rows(agg: &DMatrix<f64>, lines: &LineFlows, node: usize) -> DMatrix<f64> {
    assert_eq!(agg.ncols(), N_FEATURES);
    let k = agg.nrows();
    let mut p = Vec::new();
    let mut q = Vec::new();
    // Incident flows sorted for a numbering-independent summation order.
    for (b, &(f, t)) in lines.endpoints.iter().enumerate() {
        let sign = if f == node {
            1.0
        } else if t == node {
            -1.0
        } else {
            continue;
        };
        p.push(sign * lines.p[b]);
        q.push(sign * lines.q[b]);
    }
    p.sort_unstable_by(f64::total_cmp);
    q.sort_unstable_by(f64::total_cmp);
    let mut out = agg.clone().resize_vertically(k + 2, 0.0);
    for (c, v) in sum_mean_max(&p).into_iter().enumerate() {
        out[(k, c)] = v;
    }
    for (c, v) in sum_mean_max(&q).into_iter().enumerate() {
        out[(k + 1, c)] = v;
    }
    out
}

/// Full `(K+2) × F·n` feature matrix for the given aggregation nodes.
pub fn node_features(graph: &GridGraph, signals: &GraphSignals, nodes: &[usize], k_len: usize) -> AggFeatures {
    let f = signals.x.ncols();
    let mut z = DMatrix::zeros(k_len + 2, f * nodes.len());
    // Share the shifted signals across nodes.
    let mut cur = signals.x.clone();
    for k in 0..k_len {
        for (j, &node) in nodes.iter().enumerate() {
            for c in 0..f {
                z[(k, j * f + c)] = cur[(node, c)];
            }
        }
        if k + 1 < k_len {
            cur = shift_once(graph, &cur);
        }
    }
    for (j, &node) in nodes.iter().enumerate() {
        let rows = append_line_flow_rows(&DMatrix::zeros(0, f), &signals.lines, node);
        for c in 0..f {
            z[(k_len, j * f + c)] = rows[(0, c)];
            z[(k_len + 1, j * f + c)] = rows[(1, c)];
        }
    }
    AggFeatures {
        z,
        k_len,
        nodes: nodes.to_vec(),
    }
}

/// Zeroes the signals of every node not in `observed`, and the flows of
/// branches with both endpoints unobserved.
pub fn mask_unobserved(signals: &GraphSignals, observed: &[usize]) -> GraphSignals {
    let n = signals.x.nrows();
    let mut seen = vec![false; n];
    for &i in observed {
        seen[i] = true;
    }
    let mut out = signals.clone();
    for i in (0..n).filter(|&i| !seen[i]) {
        out.x.row_mut(i).fill(0.0);
    }
    for (b, &(f, t)) in signals.lines.endpoints.iter().enumerate() {
        if !seen[f] && !seen[t] {
            out.lines.p[b] = 0.0;
            out.lines.q[b] = 0.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> GridGraph {
        GridGraph::from_edges(3, [(0, 1), (1, 2)])
    }

    fn column(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn path_aggregation() {
        let z = aggregate(&path3(), &column(&[1.0, 0.0, 0.0]), 0, 3);
        assert_eq!(z.as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn k1_is_identity_row() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let z = aggregate(&path3(), &x, 1, 1);
        assert_eq!(z.row(0), x.row(1));
    }

    #[test]
    fn star_center() {
        let g = GridGraph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)]);
        let z = aggregate(&g, &column(&[0.0, 1.0, 1.0, 1.0, 1.0]), 0, 2);
        assert_eq!(z.as_slice(), &[0.0, 4.0]);
    }

    fn flows(endpoints: Vec<(usize, usize)>, p: Vec<f64>) -> LineFlows {
        let q = p.iter().map(|v| v / 4.0).collect();
        LineFlows { endpoints, p, q }
    }

    #[test]
    fn line_rows() {
        let agg = DMatrix::zeros(2, 3);
        let isolated = append_line_flow_rows(&agg, &flows(vec![(0, 1)], vec![0.4]), 2);
        assert_eq!(isolated.nrows(), 4);
        assert!(isolated.iter().all(|&v| v == 0.0));

        let one = append_line_flow_rows(&agg, &flows(vec![(0, 1)], vec![0.4]), 0);
        assert_eq!(one.row(2).iter().copied().collect::<Vec<_>>(), vec![0.4; 3]);
        assert_eq!(one.row(3).iter().copied().collect::<Vec<_>>(), vec![0.1; 3]);

        let two = append_line_flow_rows(&agg, &flows(vec![(0, 1), (2, 0)], vec![0.2, 0.1]), 0);
        let row: Vec<f64> = two.row(2).iter().copied().collect();
        assert!((row[0] - 0.1).abs() < 1e-15 && (row[1] - 0.05).abs() < 1e-15 && row[2] == 0.2);
    }

    #[test]
    fn masking() {
        let s = GraphSignals {
            x: DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0]),
            lines: flows(vec![(0, 1), (1, 2)], vec![0.5, 0.7]),
        };
        assert_eq!(mask_unobserved(&s, &[0, 1, 2]), s);
        let none = mask_unobserved(&s, &[]);
        assert!(none.x.iter().chain(&none.lines.p).all(|&v| v == 0.0));
        let m = mask_unobserved(&s, &[0, 1]);
        assert_eq!(m.x.column(0).as_slice(), &[1.0, 2.0, 0.0]);
        assert_eq!(m.lines.p, vec![0.5, 0.7]);
        let m = mask_unobserved(&s, &[0]);
        assert_eq!(m.lines.p, vec![0.5, 0.0]);
    }

    #[test]
    fn node_features_matches_parts() {
        let g = GridGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
        let x = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.37 - 1.0);
        let s = GraphSignals {
            x: x.clone(),
            lines: flows(vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], vec![0.1, -0.2, 0.3, 0.4, -0.5]),
        };
        let feats = node_features(&g, &s, &[2, 0], 3);
        for (j, &node) in [2usize, 0].iter().enumerate() {
            let parts = append_line_flow_rows(&aggregate(&g, &x, node, 3), &s.lines, node);
            assert_eq!(feats.z.columns(j * 3, 3), parts.columns(0, 3));
        }
    }
}
