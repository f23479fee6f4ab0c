//! Writes the bundled test grids to `fixtures/` (or the directory given as the
//! first argument) and prints a short health check of each.
//!
//! `case68` is a 68-bus, 16-machine, 86-branch grid built around a hub bus:
//! four rings of load buses start and end at the hub, and every other machine
//! sits on a two-branch "ear" joining two load buses. The hub machine is
//! lightly damped, so the grid's worst mode is its local swing and the
//! security label hinges on the hub's operating state. `case140` is a larger
//! three-cluster grid with 48 machines used for solver and eigen checks.
//!
//! Pass `--probe N` to also label `N` random profiles of `case68` and print
//! the class balance.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssa_core::eval::{generate_dataset, GenerateConfig};
use ssa_core::graph_features::{closeness_centrality, eigenvector_centrality, EIGEN_MAX_ITER, EIGEN_TOL};
use ssa_core::grid_io::{build_graph, parse_case, serialize_case, validate_case, Branch, Bus, BusKind, Generator, GridCase, GridGraph};
use ssa_core::small_signal::{build_state_matrix, min_oscillatory_zeta, modes, OMEGA_60HZ, OMEGA_FLOOR};
use ssa_core::steady_state::{compute_line_flows, solve_power_flow, PowerFlowOptions};

fn bus(id: u32, kind: BusKind, p: f64, q: f64, v: Option<f64>) -> Bus {
    Bus {
        id,
        kind,
        p_load: p,
        q_load: q,
        v_setpoint: v,
        v_min: 0.9,
        v_max: 1.1,
    }
}

fn line(from: u32, to: u32, x: f64) -> Branch {
    Branch {
        from_bus: from,
        to_bus: to,
        r: 0.1 * x,
        x,
        b_shunt: 0.02,
        rating: 0.0,
    }
}

fn machine(bus: u32, p: f64, h: f64, d: f64, xd: f64) -> Generator {
    Generator {
        bus,
        p_gen: p,
        p_min: 0.0,
        p_max: 2.5 * p,
        inertia_h: h,
        damping_d: d,
        xd_prime: xd,
    }
}

/// Rates each branch comfortably above its base-case loading.
fn rate_branches(case: &mut GridCase) {
    let op = solve_power_flow(case, PowerFlowOptions::default()).expect("base case solves");
    let (p, q) = compute_line_flows(case, &op.v_mag, &op.v_ang);
    for (br, (p, q)) in case.branches.iter_mut().zip(p.iter().zip(&q)) {
        br.rating = (2.5 * p.hypot(*q) + 1.0).round();
    }
}

fn ring_position(petal: u32, k: u32) -> u32 {
    2 + 13 * petal + (k - 1)
}

fn case68() -> GridCase {
    let mut rng = ChaCha8Rng::seed_from_u64(68);
    let mut buses = vec![bus(1, BusKind::Pv, 0.0, 0.0, Some(1.02))];
    for id in 2..=53 {
        let p: f64 = rng.gen_range(0.3..1.2);
        let q = p * rng.gen_range(0.25..0.45);
        buses.push(bus(id, BusKind::Pq, round4(p), round4(q), None));
    }
    let total_load: f64 = buses.iter().map(|b| b.p_load).sum();

    let mut branches = Vec::new();
    for petal in 0..4 {
        let mut prev = 1;
        for k in 1..=13 {
            let id = ring_position(petal, k);
            branches.push(line(prev, id, round4(rng.gen_range(0.01..0.03))));
            prev = id;
        }
        branches.push(line(prev, 1, round4(rng.gen_range(0.01..0.03))));
    }
    let p = ring_position;
    let ears: [(u32, u32, u32); 15] = [
        (54, p(0, 4), p(0, 10)),
        (55, p(1, 4), p(1, 10)),
        (56, p(2, 4), p(2, 10)),
        (57, p(3, 4), p(3, 10)),
        (58, p(0, 7), p(1, 7)),
        (59, p(1, 7), p(2, 7)),
        (60, p(2, 7), p(3, 7)),
        (61, p(3, 7), p(0, 7)),
        (62, p(0, 2), p(1, 12)),
        (63, p(1, 2), p(2, 12)),
        (64, p(2, 2), p(3, 12)),
        (65, p(3, 2), p(0, 12)),
        (66, 1, p(0, 7)),
        (67, 1, p(2, 7)),
        (68, 1, p(3, 7)),
    ];
    let hub_p = 2.0;
    let share = (total_load * 1.01 - hub_p) / ears.len() as f64;
    let mut generators = vec![machine(1, hub_p, 6.0, HUB_DAMPING, 0.1)];
    for &(g, a, b) in &ears {
        let kind = if g == 65 { BusKind::Slack } else { BusKind::Pv };
        buses.push(bus(g, kind, 0.0, 0.0, Some(round4(rng.gen_range(1.02..1.04)))));
        branches.push(line(a, g, round4(rng.gen_range(0.012..0.018))));
        branches.push(line(g, b, round4(rng.gen_range(0.012..0.018))));
        let h = round4(rng.gen_range(20.0..40.0));
        generators.push(machine(g, round4(share), h, round4(8.0 * h), round4(rng.gen_range(0.04..0.08))));
    }
    // Weak hub ties put a sizeable angle between the hub machine and the
    // rest of the grid, so its synchronising torque falls as it loads up.
    for br in branches.iter_mut().filter(|b| b.from_bus == 1 || b.to_bus == 1) {
        *br = line(br.from_bus, br.to_bus, HUB_LINE_X);
    }
    let mut case = GridCase {
        base_mva: 100.0,
        buses,
        generators,
        branches,
    };
    rate_branches(&mut case);
    case
}

/// Damping of the hub machine, set so that about half of the sampled
/// profiles screen as secure.
const HUB_DAMPING: f64 = 5.3;
const HUB_LINE_X: f64 = 3.0;

fn case140() -> GridCase {
    let mut rng = ChaCha8Rng::seed_from_u64(140);
    let sizes = [31u32, 31, 30];
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut clusters = Vec::new();
    let mut next = 1u32;
    for &n in &sizes {
        let ids: Vec<u32> = (next..next + n).collect();
        next += n;
        for &id in &ids {
            let p: f64 = rng.gen_range(0.3..1.0);
            buses.push(bus(id, BusKind::Pq, round4(p), round4(p * rng.gen_range(0.2..0.4)), None));
        }
        for w in 0..ids.len() {
            branches.push(line(ids[w], ids[(w + 1) % ids.len()], round4(rng.gen_range(0.01..0.03))));
        }
        for c in 0..13 {
            let a = ids[(2 * c) % ids.len()];
            let b = ids[(2 * c + ids.len() / 2) % ids.len()];
            branches.push(line(a, b, round4(rng.gen_range(0.02..0.04))));
        }
        clusters.push(ids);
    }
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        for off in [0, 15] {
            branches.push(line(clusters[a][off], clusters[b][off + 5], round4(rng.gen_range(0.02..0.03))));
        }
    }
    let total_load: f64 = buses.iter().map(|b| b.p_load).sum();
    let share = total_load * 1.01 / 48.0;
    let mut generators = Vec::new();
    for g in 0..48u32 {
        let id = 93 + g;
        let cl = &clusters[(g % 3) as usize];
        let a = cl[(g as usize * 7) % cl.len()];
        let b = cl[(g as usize * 7 + 11) % cl.len()];
        let kind = if g == 0 { BusKind::Slack } else { BusKind::Pv };
        buses.push(bus(id, kind, 0.0, 0.0, Some(round4(rng.gen_range(1.01..1.04)))));
        branches.push(line(a, id, round4(rng.gen_range(0.012..0.02))));
        branches.push(line(id, b, round4(rng.gen_range(0.012..0.02))));
        let h = round4(rng.gen_range(3.0..9.0));
        generators.push(machine(id, round4(share), h, round4(rng.gen_range(0.5..2.0) * h), round4(rng.gen_range(0.05..0.25))));
    }
    let mut case = GridCase {
        base_mva: 100.0,
        buses,
        generators,
        branches,
    };
    rate_branches(&mut case);
    case
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

const SMIB: &str = "\
# Single machine against an infinite bus over two parallel lossless lines.
BASE_MVA
100
BUS  # id kind p_load q_load v_setpoint v_min v_max
1 PV 0 0 1.0 0.9 1.1
2 SLACK 0.2 0.05 1.0 0.9 1.1
GEN  # bus p_gen p_min p_max
1 0.8 0 5
GEN_DYNAMICS  # bus inertia_h damping_d xd_prime
1 4 6 0.25
BRANCH  # from to r x b_shunt rating
1 2 0 0.4 0 0
1 2 0 0.4 0 0
";

const THREE_BUS: &str = "\
# Three buses, lossy lines with charging, two machines.
BASE_MVA
100
BUS  # id kind p_load q_load v_setpoint v_min v_max
1 SLACK 0 0 1.02 0.9 1.1
2 PV 0.2 0.1 1.01 0.9 1.1
3 PQ 0.9 0.3 - 0.9 1.1
GEN  # bus p_gen p_min p_max
1 0.5 0 3
2 0.6 0 2
GEN_DYNAMICS  # bus inertia_h damping_d xd_prime
1 5 10 0.2
2 3 6 0.25
BRANCH  # from to r x b_shunt rating
1 2 0.02 0.06 0.03 0
1 3 0.08 0.24 0.025 0
2 3 0.06 0.18 0.02 0
";

fn bridges(case: &GridCase) -> usize {
    let ends = case.branch_endpoints();
    (0..ends.len())
        .filter(|&skip| {
            let pairs = ends.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &e)| e);
            !GridGraph::from_edges(case.n_buses(), pairs).is_connected()
        })
        .count()
}

fn health(name: &str, case: &GridCase) {
    assert!(validate_case(case).is_empty(), "{name}: {:?}", validate_case(case));
    let graph = build_graph(case);
    let op = solve_power_flow(case, PowerFlowOptions::default()).expect("solves");
    let closeness = closeness_centrality(&graph).expect("connected");
    let eig = eigenvector_centrality(&graph, EIGEN_TOL, EIGEN_MAX_ITER).expect("converges");
    let top = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a))).unwrap();
    let top_degree = (0..graph.n()).max_by_key(|&i| (graph.degree(i), std::cmp::Reverse(i))).unwrap();
    let a = build_state_matrix(case, &op, None, OMEGA_60HZ).expect("state matrix");
    let zeta = min_oscillatory_zeta(&modes(&a.a).expect("eigen"), OMEGA_FLOOR);
    let vmin = op.v_mag.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = op.v_mag.iter().copied().fold(0.0, f64::max);
    println!(
        "{name}: {} buses, {} branches, {} machines, {} bridges, converged in {} iterations, \
         |V| in [{vmin:.3}, {vmax:.3}], top closeness {}, top eigenvector {}, top degree {}, base min zeta {zeta:.4}",
        case.n_buses(),
        case.branches.len(),
        case.generators.len(),
        bridges(case),
        op.iterations,
        top(&closeness),
        top(&eig),
        top_degree,
    );
}

fn main() {
    let mut args = std::env::args().skip(1);
    let mut dir = PathBuf::from("fixtures");
    let mut probe = 0usize;
    while let Some(a) = args.next() {
        if a == "--probe" {
            probe = args.next().and_then(|v| v.parse().ok()).expect("--probe takes a count");
        } else {
            dir = PathBuf::from(a);
        }
    }
    std::fs::create_dir_all(&dir).expect("create fixture directory");

    let cases = [
        ("smib", parse_case(SMIB).expect("smib")),
        ("three_bus", parse_case(THREE_BUS).expect("three bus")),
        ("case68", case68()),
        ("case140", case140()),
    ];
    for (name, case) in &cases {
        health(name, case);
        let text = match *name {
            "smib" => SMIB.to_string(),
            "three_bus" => THREE_BUS.to_string(),
            _ => serialize_case(case),
        };
        assert_eq!(&parse_case(&text).expect("round trip"), case);
        std::fs::write(dir.join(format!("{name}.case")), text).expect("write fixture");
    }

    if probe > 0 {
        let cfg = GenerateConfig {
            n_points: probe,
            seed: 1,
            ..GenerateConfig::default()
        };
        let ds = generate_dataset(&cases[2].1, &cfg).expect("dataset");
        let mut z: Vec<f64> = ds.samples.iter().map(|s| s.min_zeta).collect();
        z.sort_by(f64::total_cmp);
        println!(
            "case68 probe: {} kept of {} draws ({} non-convergent, {} over limits), secure {:.1}%, min zeta quartiles {:.4} {:.4} {:.4}",
            ds.samples.len(),
            ds.header.draws,
            ds.header.discarded_nonconvergence,
            ds.header.discarded_limits,
            100.0 * ds.secure_fraction(),
            z[z.len() / 4],
            z[z.len() / 2],
            z[3 * z.len() / 4],
        );
    }
}
