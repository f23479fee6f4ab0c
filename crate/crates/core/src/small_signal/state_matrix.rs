use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::SmallSignalError;
use crate::grid_io::{GridCase, GridGraph};
use crate::steady_state::{bus_admittance, OperatingPoint};

/// Synchronous speed of a 60 Hz system in rad/s.
pub const OMEGA_60HZ: f64 = 2.0 * std::f64::consts::PI * 60.0;

/// Linearised classical-machine model with states `[δ₁..δ_g, ω₁..ω_g]`
/// (rotor angle in rad, speed deviation in pu).
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub a: DMatrix<f64>,
    pub n_machines: usize,
    pub omega_s: f64,
}

/// Internal EMF magnitude and angle of every generator behind its transient
/// reactance, from the bus injections of a solved point.
pub fn internal_emfs(case: &GridCase, op: &OperatingPoint) -> Vec<Complex64> {
    let gen_bus = case.generator_buses();
    let n = case.n_buses();
    let mut total_p = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (g, &b) in case.generators.iter().zip(&gen_bus) {
        total_p[b] += g.p_gen;
        count[b] += 1;
    }
    case.generators
        .iter()
        .zip(&gen_bus)
        .map(|(g, &b)| {
            let share = if total_p[b] != 0.0 {
                g.p_gen / total_p[b]
            } else {
                1.0 / count[b] as f64
            };
            let bus = &case.buses[b];
            let s_gen = Complex64::new(op.p_net[b] + bus.p_load, op.q_net[b] + bus.q_load) * share;
            let v = Complex64::from_polar(op.v_mag[b], op.v_ang[b]);
            let current = (s_gen / v).conj();
            v + Complex64::new(0.0, g.xd_prime) * current
        })
        .collect()
}

/// Builds the state matrix `[[0, ω_s·I], [−M⁻¹L, −M⁻¹D]]`, `M = diag(2H)`,
/// for the network with `outage` removed.
///
/// Loads become constant admittances at the solved voltages, machines are
/// constant EMFs behind `xd_prime`, and the network is Kron-reduced onto the
/// internal machine nodes. A slack bus without a generator is kept as an
/// infinite bus: it stays in the reduction but contributes no states.
pub fn build_state_matrix(
    case: &GridCase,
    op: &OperatingPoint,
    outage: Option<usize>,
    omega_s: f64,
) -> Result<StateMatrix, SmallSignalError> {
    if !op.converged {
        return Err(SmallSignalError::BadOperatingPoint("power flow not converged".into()));
    }
    let n = case.n_buses();
    if op.v_mag.len() != n || op.v_ang.len() != n || op.p_net.len() != n || op.q_net.len() != n {
        return Err(SmallSignalError::BadOperatingPoint("dimension mismatch with case".into()));
    }
    if let Some(k) = outage {
        let pairs = case
            .branch_endpoints()
            .into_iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, e)| e);
        if !GridGraph::from_edges(n, pairs).is_connected() {
            return Err(SmallSignalError::Islanding { branch: k });
        }
    }

    let gen_bus = case.generator_buses();
    let g = gen_bus.len();
    let emf = internal_emfs(case, op);

    let infinite_bus = case
        .slack_index()
        .filter(|s| !gen_bus.contains(s));

    // Retained sources: machine EMFs, then the infinite bus if present.
    let mut sources: Vec<(usize, Complex64, Complex64)> = Vec::with_capacity(g + 1);
    let mut y_nn = bus_admittance(case, outage);
    for (k, gen) in case.generators.iter().enumerate() {
        let y = Complex64::new(0.0, -1.0 / gen.xd_prime);
        y_nn[(gen_bus[k], gen_bus[k])] += y;
        sources.push((gen_bus[k], y, emf[k]));
    }
    for (i, bus) in case.buses.iter().enumerate() {
        let v2 = op.v_mag[i] * op.v_mag[i];
        y_nn[(i, i)] += Complex64::new(bus.p_load, -bus.q_load) / v2;
    }

    // Y_red = Y_ss - Y_sn Y_nn⁻¹ Y_ns. Machine sources tie to their bus
    // through y; the infinite bus is the bus node itself, so it moves from
    // the eliminated set into the retained set.
    let m = sources.len() + usize::from(infinite_bus.is_some());
    let mut y_ns = DMatrix::from_element(n, m, Complex64::new(0.0, 0.0));
    let mut y_ss = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for (k, &(bus, y, _)) in sources.iter().enumerate() {
        y_ns[(bus, k)] = -y;
        y_ss[(k, k)] = y;
    }
    let mut e = emf.clone();
    if let Some(s) = infinite_bus {
        // Split the slack bus out of Y_nn by zeroing its row/column and
        // moving the couplings into Y_ns / Y_ss.
        let col = m - 1;
        for i in 0..n {
            if i != s {
                y_ns[(i, col)] = y_nn[(i, s)];
            }
        }
        y_ss[(col, col)] = y_nn[(s, s)];
        for i in 0..n {
            y_nn[(i, s)] = Complex64::new(0.0, 0.0);
            y_nn[(s, i)] = Complex64::new(0.0, 0.0);
        }
        y_nn[(s, s)] = Complex64::new(1.0, 0.0);
        e.push(Complex64::from_polar(op.v_mag[s], op.v_ang[s]));
    }
    let x = y_nn
        .lu()
        .solve(&y_ns)
        .ok_or(SmallSignalError::SingularNetwork)?;
    let y_red = &y_ss - y_ns.transpose() * x;
    if y_red.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(SmallSignalError::SingularNetwork);
    }

    // Synchronising coefficients ∂Pe_i/∂δ_j over all retained sources.
    let mut l = DMatrix::zeros(g, g);
    for i in 0..g {
        let mut diag = 0.0;
        for j in 0..m {
            if i == j {
                continue;
            }
            let (gij, bij) = (y_red[(i, j)].re, y_red[(i, j)].im);
            let d = e[i].arg() - e[j].arg();
            let (sin, cos) = d.sin_cos();
            let coeff = e[i].norm() * e[j].norm() * (gij * sin - bij * cos);
            if j < g {
                l[(i, j)] = coeff;
            }
            diag -= coeff;
        }
        l[(i, i)] = diag;
    }

    let mut a = DMatrix::zeros(2 * g, 2 * g);
    for (i, gen) in case.generators.iter().enumerate() {
        let m_i = 2.0 * gen.inertia_h;
        a[(i, g + i)] = omega_s;
        for j in 0..g {
            a[(g + i, j)] = -l[(i, j)] / m_i;
        }
        a[(g + i, g + i)] = -gen.damping_d / m_i;
    }
    Ok(StateMatrix {
        a,
        n_machines: g,
        omega_s,
    })
}
