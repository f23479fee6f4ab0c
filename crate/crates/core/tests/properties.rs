use std::path::PathBuf;

use nalgebra::DMatrix;
use proptest::prelude::*;
use ssa_core::eval::compute_metrics;
use ssa_core::graph_features::{aggregate, closeness_centrality, eigenvector_centrality};
use ssa_core::grid_io::{build_graph, parse_case, GridGraph};
use ssa_core::learner::{init_model, persist_model, predict, restore_model, ModelSpec};
use ssa_core::small_signal::{damping_ratio, eigenvalues, label_operating_point, LabelOptions};
use ssa_core::steady_state::{scale_profile, solve_power_flow, PowerFlowOptions};

fn graph_strategy(max_n: usize) -> impl Strategy<Value = GridGraph> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
            let mut edges = Vec::new();
            let mut it = bits.into_iter();
            for i in 0..n {
                for j in i + 1..n {
                    if it.next().unwrap() {
                        edges.push((i, j));
                    }
                }
            }
            GridGraph::from_edges(n, edges)
        })
    })
}

/// Connected graph: random spanning tree plus extra edges.
fn connected_strategy(max_n: usize) -> impl Strategy<Value = GridGraph> {
    (2..=max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<prop::sample::Index>(), n - 1),
            proptest::collection::vec((0..n, 0..n), 0..n),
        )
            .prop_map(move |(parents, extra)| {
                let mut edges: Vec<(usize, usize)> =
                    parents.iter().enumerate().map(|(i, p)| (p.index(i + 1), i + 1)).collect();
                edges.extend(extra.into_iter().filter(|(a, b)| a != b));
                GridGraph::from_edges(n, edges)
            })
    })
}

fn relabel(g: &GridGraph, perm: &[usize]) -> GridGraph {
    GridGraph::from_edges(g.n(), g.edge_list().iter().map(|&(a, b)| (perm[a], perm[b])))
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn signal(n: usize, values: &[i8]) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |i, j| f64::from(values[(i * 2 + j) % values.len()]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn aggregation_commutes_with_relabelling(
        (g, perm) in graph_strategy(9).prop_flat_map(|g| { let n = g.n(); (Just(g), perm_strategy(n)) }),
        values in proptest::collection::vec(any::<i8>(), 1..30),
        node in any::<prop::sample::Index>(),
        k in 1usize..5,
    ) {
        let n = g.n();
        let node = node.index(n);
        let x = signal(n, &values);
        let mut moved = DMatrix::zeros(n, 2);
        for i in 0..n {
            moved.set_row(perm[i], &x.row(i));
        }
        prop_assert_eq!(aggregate(&g, &x, node, k), aggregate(&relabel(&g, &perm), &moved, perm[node], k));
    }

    #[test]
    fn aggregation_ignores_distant_nodes(
        g in graph_strategy(10),
        values in proptest::collection::vec(-1e3f64..1e3, 1..30),
        noise in proptest::collection::vec(-1e3f64..1e3, 20),
        node in any::<prop::sample::Index>(),
        k in 1usize..5,
    ) {
        let n = g.n();
        let node = node.index(n);
        let x = DMatrix::from_fn(n, 2, |i, j| values[(i * 2 + j) % values.len()]);
        let dist = g.bfs_distances(node);
        let mut y = x.clone();
        for i in 0..n {
            if dist[i].is_none_or(|d| d >= k) {
                y[(i, 0)] = noise[(2 * i) % noise.len()];
                y[(i, 1)] = noise[(2 * i + 1) % noise.len()];
            }
        }
        prop_assert_eq!(aggregate(&g, &x, node, k), aggregate(&g, &y, node, k));
    }

    #[test]
    fn centrality_follows_relabelling(
        (g, perm) in connected_strategy(10).prop_flat_map(|g| { let n = g.n(); (Just(g), perm_strategy(n)) }),
    ) {
        let h = relabel(&g, &perm);
        let (c0, c1) = (closeness_centrality(&g).unwrap(), closeness_centrality(&h).unwrap());
        let (e0, e1) = (
            eigenvector_centrality(&g, 1e-12, 100_000).unwrap(),
            eigenvector_centrality(&h, 1e-12, 100_000).unwrap(),
        );
        for i in 0..g.n() {
            prop_assert_eq!(c0[i], c1[perm[i]]);
            prop_assert!((e0[i] - e1[perm[i]]).abs() <= 1e-8, "{} vs {}", e0[i], e1[perm[i]]);
        }
    }

    #[test]
    fn eigenvalues_pair_and_sum_to_trace(
        n in 1usize..10,
        entries in proptest::collection::vec(-10.0f64..10.0, 100),
    ) {
        let a = DMatrix::from_fn(n, n, |i, j| entries[i * 10 + j]);
        let ev = eigenvalues(&a).unwrap();
        prop_assert_eq!(ev.len(), n);
        for z in &ev {
            if z.im != 0.0 {
                prop_assert!(ev.iter().any(|w| w.re == z.re && w.im == -z.im));
            }
        }
        let sum: f64 = ev.iter().map(|z| z.re).sum();
        let scale = a.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((sum - a.trace()).abs() <= 1e-9 * scale);
    }

    #[test]
    fn damping_ratio_is_bounded(sigma in -1e3f64..1e3, omega in -1e3f64..1e3) {
        prop_assume!(sigma != 0.0 || omega != 0.0);
        let z = damping_ratio(sigma, omega).unwrap();
        prop_assert!((-1.0..=1.0).contains(&z));
        prop_assert_eq!(z > 0.0, sigma < 0.0);
    }

    #[test]
    fn model_round_trips_and_outputs_probabilities(
        widths in (1usize..4, 1usize..8, 1usize..8),
        k in 1usize..5,
        seed in any::<u64>(),
        scale in 0.0f64..1e3,
        inputs in proptest::collection::vec(-1e3f64..1e3, 1..64),
    ) {
        let spec = ModelSpec::from_widths([widths.0, widths.1, widths.2, 1], k, 3, vec![0]);
        let mut model = init_model(&spec, seed).unwrap();
        model.theta.iter_mut().for_each(|v| *v *= scale);
        let restored = restore_model(&persist_model(&model)).unwrap();
        prop_assert_eq!(&restored, &model);
        let z = DMatrix::from_fn(spec.rows(), spec.channels(), |i, j| inputs[(i * 7 + j) % inputs.len()]);
        let p = predict(&model, &z).unwrap();
        prop_assert!(p > 0.0 && p < 1.0, "{p}");
        prop_assert_eq!(p.to_bits(), predict(&restored, &z).unwrap().to_bits());
    }

    #[test]
    fn metric_counts_are_consistent(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (preds, labels): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let m = compute_metrics(&preds, &labels).unwrap();
        let n = pairs.len();
        prop_assert_eq!(m.tp + m.tn + m.fp + m.fn_, n);
        prop_assert_eq!(m.tp + m.fn_, labels.iter().filter(|&&y| y).count());
        prop_assert_eq!(m.tp + m.fp, preds.iter().filter(|&&p| p).count());
        prop_assert_eq!(m.accuracy, (m.tp + m.tn) as f64 / n as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn raising_the_threshold_never_makes_a_point_secure(
        profile in any::<u64>(),
        lo in 0.0f64..0.2,
        gap in 0.0f64..0.2,
    ) {
        let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/three_bus.case");
        let base = parse_case(&std::fs::read_to_string(path).unwrap()).unwrap();
        let (case, _) = scale_profile(&base, (0.7, 1.3), profile);
        let Ok(op) = solve_power_flow(&case, PowerFlowOptions::default()) else { return Ok(()) };
        prop_assume!(op.converged);
        let all: Vec<usize> = (0..case.branches.len()).collect();
        let at = |threshold| {
            label_operating_point(&case, &op, &all, &LabelOptions { threshold, ..LabelOptions::default() }).unwrap()
        };
        let (loose, strict) = (at(lo), at(lo + gap));
        prop_assert_eq!(loose.min_zeta, strict.min_zeta);
        prop_assert!(!strict.secure || loose.secure);
        prop_assert_eq!(loose.secure, loose.min_zeta >= lo);
        prop_assert!(build_graph(&case).is_connected());
    }
}
