//! Parallel vs single-threaded cost of the three hot loops: batch feature
//! aggregation, contingency screening and minibatch gradients.

use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use ssa_core::eval::draw_seed;
use ssa_core::graph_features::{node_features, GraphSignals};
use ssa_core::grid_io::{build_graph, parse_case, GridCase};
use ssa_core::learner::{init_model, loss_and_gradients, ModelSpec};
use ssa_core::par;
use ssa_core::small_signal::{label_operating_point, LabelOptions};
use ssa_core::steady_state::{scale_profile, solve_power_flow, OperatingPoint, PowerFlowOptions};

fn points(case: &GridCase, n: usize) -> Vec<(GridCase, OperatingPoint)> {
    (0..)
        .filter_map(|i| {
            let (c, _) = scale_profile(case, (0.7, 1.5), draw_seed(11, i));
            let op = solve_power_flow(&c, PowerFlowOptions::default()).ok()?;
            op.converged.then_some((c, op))
        })
        .take(n)
        .collect()
}

fn modes(c: &mut Criterion, name: &str, run: impl Fn() + Sync) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", par::threads()), |b| b.iter(&run));
    // One single-thread pool per sample, with the timer around the loop only.
    group.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter_custom(|iters| {
            par::sequential(|| {
                let t = Instant::now();
                for _ in 0..iters {
                    run();
                }
                t.elapsed()
            })
        })
    });
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case68.case");
    let case = parse_case(&std::fs::read_to_string(path).unwrap()).unwrap();
    let graph = build_graph(&case);
    let pts = points(&case, 128);
    let signals: Vec<GraphSignals> = pts.iter().map(|(c, op)| GraphSignals::from_operating_point(c, op)).collect();

    modes(c, "featurize_128", || {
        black_box(par::map(&signals, |s| node_features(&graph, s, &[0], 3).z));
    });

    let all: Vec<usize> = (0..case.branches.len()).collect();
    let (c0, op0) = &pts[0];
    modes(c, "label_all_outages", || {
        black_box(label_operating_point(c0, op0, &all, &LabelOptions::default()).unwrap());
    });

    let spec = ModelSpec::from_widths([10, 20, 50, 1], 3, 3, vec![0]);
    let model = init_model(&spec, 0).unwrap();
    let zs: Vec<DMatrix<f64>> = signals.iter().map(|s| node_features(&graph, s, &[0], 3).z).collect();
    let batch: Vec<(&DMatrix<f64>, bool)> = zs.iter().enumerate().map(|(i, z)| (z, i % 2 == 0)).collect();
    modes(c, "gradients_128", || {
        black_box(loss_and_gradients(&model, &batch).unwrap());
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
