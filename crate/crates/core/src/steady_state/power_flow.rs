use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::PowerFlowError;
use crate::grid_io::{build_graph, BusKind, GridCase};

/// Solved (or last-iterate) steady state of a case.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub v_mag: Vec<f64>,
    /// Radians; the slack bus is the zero reference.
    pub v_ang: Vec<f64>,
    pub p_net: Vec<f64>,
    pub q_net: Vec<f64>,
    /// Sending-end (from-bus) flow per branch.
    pub line_p: Vec<f64>,
    pub line_q: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute P/Q mismatch at the final iterate.
    pub mismatch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

/// Series admittance and half line charging of a pi-model branch.
fn branch_admittance(r: f64, x: f64, b_shunt: f64) -> (Complex64, Complex64) {
    (Complex64::new(r, x).inv(), Complex64::new(0.0, b_shunt / 2.0))
}

/// Dense bus admittance matrix, optionally with one branch taken out.
pub fn bus_admittance(case: &GridCase, outage: Option<usize>) -> DMatrix<Complex64> {
    let n = case.n_buses();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, ((f, t), br)) in case
        .branch_endpoints()
        .into_iter()
        .zip(&case.branches)
        .enumerate()
    {
        if Some(k) == outage {
            continue;
        }
        let (ys, ysh) = branch_admittance(br.r, br.x, br.b_shunt);
        y[(f, f)] += ys + ysh;
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    y
}

fn injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut current = Complex64::new(0.0, 0.0);
            for j in 0..n {
                current += y[(i, j)] * v[j];
            }
            v[i] * current.conj()
        })
        .collect()
}

fn count_islands(case: &GridCase) -> usize {
    let g = build_graph(case);
    let mut seen = vec![false; g.n()];
    let mut islands = 0;
    for s in 0..g.n() {
        if seen[s] {
            continue;
        }
        islands += 1;
        for (v, d) in g.bfs_distances(s).into_iter().enumerate() {
            if d.is_some() {
                seen[v] = true;
            }
        }
    }
    islands
}

/// Newton–Raphson AC power flow in polar coordinates from a flat start.
///
/// Non-convergence is not an error: the returned point has
/// `converged == false` and callers decide what to do with it.
pub fn solve_power_flow(
    case: &GridCase,
    opts: PowerFlowOptions,
) -> Result<OperatingPoint, PowerFlowError> {
    let n = case.n_buses();
    let islands = count_islands(case);
    if islands > 1 {
        return Err(PowerFlowError::Disconnected { islands });
    }

    let y = bus_admittance(case, None);
    let g = y.map(|c| c.re);
    let b = y.map(|c| c.im);

    let p_gen = case.scheduled_generation();
    let p_spec: Vec<f64> = (0..n).map(|i| p_gen[i] - case.buses[i].p_load).collect();
    let q_spec: Vec<f64> = case.buses.iter().map(|b| -b.q_load).collect();

    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Pq => 1.0,
            _ => b.v_setpoint.unwrap_or(1.0),
        })
        .collect();
    let mut va = vec![0.0; n];

    // Unknown ordering: angles of non-slack buses, then magnitudes of PQ buses.
    let ang_idx: Vec<usize> = (0..n).filter(|&i| case.buses[i].kind != BusKind::Slack).collect();
    let mag_idx: Vec<usize> = (0..n).filter(|&i| case.buses[i].kind == BusKind::Pq).collect();
    let mut ang_pos = vec![usize::MAX; n];
    let mut mag_pos = vec![usize::MAX; n];
    for (k, &i) in ang_idx.iter().enumerate() {
        ang_pos[i] = k;
    }
    for (k, &i) in mag_idx.iter().enumerate() {
        mag_pos[i] = ang_idx.len() + k;
    }
    let dim = ang_idx.len() + mag_idx.len();

    let calc = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let s = injections(&y, &v);
        (s.iter().map(|c| c.re).collect(), s.iter().map(|c| c.im).collect())
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut mismatch;
    loop {
        let (p, q) = calc(&vm, &va);
        let mut f = DVector::zeros(dim);
        for &i in &ang_idx {
            f[ang_pos[i]] = p_spec[i] - p[i];
        }
        for &i in &mag_idx {
            f[mag_pos[i]] = q_spec[i] - q[i];
        }
        mismatch = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !mismatch.is_finite() {
            break;
        }
        if mismatch < opts.tol {
            converged = true;
            break;
        }
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;

        let mut jac = DMatrix::zeros(dim, dim);
        for &i in &ang_idx {
            let row_p = ang_pos[i];
            let row_q = mag_pos[i];
            for j in 0..n {
                let gij = g[(i, j)];
                let bij = b[(i, j)];
                if i != j && gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let t = va[i] - va[j];
                let (s, c) = t.sin_cos();
                let (dp_dt, dp_dv, dq_dt, dq_dv);
                if i == j {
                    dp_dt = -q[i] - bij * vm[i] * vm[i];
                    dp_dv = p[i] / vm[i] + gij * vm[i];
                    dq_dt = p[i] - gij * vm[i] * vm[i];
                    dq_dv = q[i] / vm[i] - bij * vm[i];
                } else {
                    dp_dt = vm[i] * vm[j] * (gij * s - bij * c);
                    dp_dv = vm[i] * (gij * c + bij * s);
                    dq_dt = -vm[i] * vm[j] * (gij * c + bij * s);
                    dq_dv = vm[i] * (gij * s - bij * c);
                }
                if ang_pos[j] != usize::MAX {
                    jac[(row_p, ang_pos[j])] = dp_dt;
                    if row_q != usize::MAX {
                        jac[(row_q, ang_pos[j])] = dq_dt;
                    }
                }
                if mag_pos[j] != usize::MAX {
                    jac[(row_p, mag_pos[j])] = dp_dv;
                    if row_q != usize::MAX {
                        jac[(row_q, mag_pos[j])] = dq_dv;
                    }
                }
            }
        }
        let dx = jac
            .lu()
            .solve(&f)
            .ok_or(PowerFlowError::SingularJacobian { iteration: iterations })?;
        for &i in &ang_idx {
            va[i] += dx[ang_pos[i]];
        }
        for &i in &mag_idx {
            vm[i] += dx[mag_pos[i]];
        }
    }

    let (p_net, q_net) = calc(&vm, &va);
    let (line_p, line_q) = compute_line_flows(case, &vm, &va);
    Ok(OperatingPoint {
        v_mag: vm,
        v_ang: va,
        p_net,
        q_net,
        line_p,
        line_q,
        converged,
        iterations,
        mismatch,
    })
}

/// Complex power entering each branch at its from end and at its to end.
pub fn branch_end_flows(case: &GridCase, v_mag: &[f64], v_ang: &[f64]) -> Vec<(Complex64, Complex64)> {
    let v = |i: usize| Complex64::from_polar(v_mag[i], v_ang[i]);
    case.branch_endpoints()
        .into_iter()
        .zip(&case.branches)
        .map(|((f, t), br)| {
            let (ys, ysh) = branch_admittance(br.r, br.x, br.b_shunt);
            let (vf, vt) = (v(f), v(t));
            let i_ft = (vf - vt) * ys + vf * ysh;
            let i_tf = (vt - vf) * ys + vt * ysh;
            (vf * i_ft.conj(), vt * i_tf.conj())
        })
        .collect()
}

/// Pi-model sending-end active and reactive flow of every branch.
pub fn compute_line_flows(case: &GridCase, v_mag: &[f64], v_ang: &[f64]) -> (Vec<f64>, Vec<f64>) {
    branch_end_flows(case, v_mag, v_ang)
        .into_iter()
        .map(|(s, _)| (s.re, s.im))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_io::{parse_case, tests::two_bus};

    #[test]
    fn unloaded_two_bus_is_flat() {
        let mut c = two_bus();
        c.buses[1].p_load = 0.0;
        c.buses[1].q_load = 0.0;
        c.generators[0].p_gen = 0.0;
        c.branches[0].b_shunt = 0.0;
        let op = solve_power_flow(&c, PowerFlowOptions::default()).unwrap();
        assert!(op.converged);
        assert_eq!(op.iterations, 0);
        assert_eq!(op.v_mag, vec![1.0, 1.0]);
        assert_eq!(op.v_ang, vec![0.0, 0.0]);
        assert!(op.line_p.iter().chain(&op.line_q).all(|f| f.abs() < 1e-15));
    }

    #[test]
    fn lossless_line_flow_is_sin_over_x() {
        let mut c = two_bus();
        c.branches[0].r = 0.0;
        c.branches[0].b_shunt = 0.0;
        let (p, _) = compute_line_flows(&c, &[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(p[0], 0.0);
        for theta in [0.05, 0.3, -0.7] {
            let (p, _) = compute_line_flows(&c, &[1.0, 1.0], &[theta, 0.0]);
            assert!((p[0] - theta.sin() / 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn overloaded_two_bus_does_not_converge() {
        // Lossless line, unity-pf load P at the far end: V2 satisfies
        // V2^4 - V1^2 V2^2 + P^2 x^2 = 0, solvable iff V1^4 >= 4 P^2 x^2.
        let (v1, p, x) = (1.0f64, 100.0f64, 0.1f64);
        assert!(v1.powi(4) - 4.0 * p * p * x * x < 0.0);
        let mut c = two_bus();
        c.buses[1].p_load = 100.0;
        c.buses[1].q_load = 0.0;
        c.branches[0].r = 0.0;
        c.branches[0].b_shunt = 0.0;
        match solve_power_flow(&c, PowerFlowOptions::default()) {
            Ok(op) => assert!(!op.converged),
            Err(PowerFlowError::SingularJacobian { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn disconnected_rejected_before_iterating() {
        let text = "BASE_MVA\n100\nBUS\n1 SLACK 0 0 1 0.9 1.1\n2 PQ 0.1 0 - 0.9 1.1\n3 PQ 0.1 0 - 0.9 1.1\n\
                    GEN\n1 0.2 0 1\nGEN_DYNAMICS\n1 3 1 0.2\nBRANCH\n1 2 0 0.1 0 0\n";
        let c = parse_case(text).unwrap();
        assert!(matches!(
            solve_power_flow(&c, PowerFlowOptions::default()),
            Err(PowerFlowError::Disconnected { islands: 2 })
        ));
    }
}
