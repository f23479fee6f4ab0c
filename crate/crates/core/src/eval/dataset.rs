//! Labelled operating points and their text file format.
//!
//! ```text
//! SSA-DATASET 1
//! case_hash <sha256 of the canonical case text>
//! k_len 3
//! agg_nodes 0
//! threshold 0.03
//! seed 7
//! scale 0.7 1.5
//! n_buses 68
//! n_branches 86
//! draws 1210
//! discarded_nonconvergence 3
//! discarded_limits 207
//! samples 1000
//! sample <draw> <profile_seed> <0|1> <min_zeta>
//! v ... / a ... / p ... / q ... / lp ... / lq ... / z ...
//! ```
//!
//! Each sample stores raw per-bus signals and per-branch flows, not features,
//! so any aggregation length or sensor mask can be applied on load.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, PowerFlowError, Result};
use crate::graph_features::{mask_unobserved, node_features, GraphSignals, LineFlows, N_FEATURES};
use crate::grid_io::{fmt_f64, serialize_case, GridCase, GridGraph};
use crate::par;
use crate::small_signal::{label_operating_point, LabelOptions};
use crate::steady_state::{check_limits, scale_profile, solve_power_flow, OperatingPoint, PowerFlowOptions};

pub const DATASET_MAGIC: &str = "SSA-DATASET";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub n_points: usize,
    pub scale: (f64, f64),
    pub label: LabelOptions,
    pub seed: u64,
    /// Default aggregation length recorded for downstream training.
    pub k_len: usize,
    /// Default aggregation nodes (dense indices) recorded for training.
    pub agg_nodes: Vec<usize>,
    /// Give up after `draw_cap_factor · n_points` draws.
    pub draw_cap_factor: usize,
    pub power_flow: PowerFlowOptions,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n_points: 1000,
            scale: (0.7, 1.5),
            label: LabelOptions::default(),
            seed: 0,
            k_len: 3,
            agg_nodes: vec![0],
            draw_cap_factor: 10,
            power_flow: PowerFlowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub case_hash: String,
    pub k_len: usize,
    pub agg_nodes: Vec<usize>,
    pub threshold: f64,
    pub seed: u64,
    pub scale: (f64, f64),
    pub n_buses: usize,
    pub n_branches: usize,
    pub draws: usize,
    pub discarded_nonconvergence: usize,
    pub discarded_limits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub draw: u64,
    /// Seed passed to the profile sampler; regenerates the scaled case.
    pub profile_seed: u64,
    pub secure: bool,
    pub min_zeta: f64,
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub p_net: Vec<f64>,
    pub q_net: Vec<f64>,
    pub line_p: Vec<f64>,
    pub line_q: Vec<f64>,
    /// Worst damping ratio per branch outage, in branch order.
    pub per_contingency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<RawSample>,
}

impl Dataset {
    /// Fraction of secure samples.
    pub fn secure_fraction(&self) -> f64 {
        let n = self.samples.iter().filter(|s| s.secure).count();
        n as f64 / self.samples.len().max(1) as f64
    }
}

impl RawSample {
    pub fn signals(&self, endpoints: &[(usize, usize)]) -> GraphSignals {
        let n = self.v_mag.len();
        let mut x = DMatrix::zeros(n, N_FEATURES);
        for i in 0..n {
            x[(i, 0)] = self.v_mag[i];
            x[(i, 1)] = self.p_net[i];
            x[(i, 2)] = self.q_net[i];
        }
        GraphSignals {
            x,
            lines: LineFlows {
                endpoints: endpoints.to_vec(),
                p: self.line_p.clone(),
                q: self.line_q.clone(),
            },
        }
    }

    pub fn operating_point(&self) -> OperatingPoint {
        OperatingPoint {
            v_mag: self.v_mag.clone(),
            v_ang: self.v_ang.clone(),
            p_net: self.p_net.clone(),
            q_net: self.q_net.clone(),
            line_p: self.line_p.clone(),
            line_q: self.line_q.clone(),
            converged: true,
            iterations: 0,
            mismatch: 0.0,
        }
    }
}

pub fn case_hash(case: &GridCase) -> String {
    Sha256::digest(serialize_case(case).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Profile seed of draw `index`: a splitmix64 step over `seed + index·φ`.
pub fn draw_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Draw {
    Kept(RawSample),
    NonConvergence,
    Limits,
}

fn run_draw(case: &GridCase, cfg: &GenerateConfig, index: u64, branches: &[usize]) -> Result<Draw> {
    let profile_seed = draw_seed(cfg.seed, index);
    let (scaled, _) = scale_profile(case, cfg.scale, profile_seed);
    let op = match solve_power_flow(&scaled, cfg.power_flow) {
        Ok(op) if op.converged => op,
        Ok(_) | Err(PowerFlowError::SingularJacobian { .. } | PowerFlowError::NoConvergence { .. }) => {
            return Ok(Draw::NonConvergence)
        }
        Err(e) => return Err(e.into()),
    };
    if !check_limits(&scaled, &op).is_empty() {
        return Ok(Draw::Limits);
    }
    let label = label_operating_point(&scaled, &op, branches, &cfg.label)?;
    Ok(Draw::Kept(RawSample {
        draw: index,
        profile_seed,
        secure: label.secure,
        min_zeta: label.min_zeta,
        per_contingency: label.per_contingency.iter().map(|c| c.min_zeta).collect(),
        v_mag: op.v_mag,
        v_ang: op.v_ang,
        p_net: op.p_net,
        q_net: op.q_net,
        line_p: op.line_p,
        line_q: op.line_q,
    }))
}

/// Draws scaled profiles until `n_points` of them solve within limits, then
/// labels each over every single-branch outage. Draws are evaluated in
/// parallel batches but consumed in index order, so the result only depends
/// on the configuration, not on the batch sizes.
pub fn generate_dataset(case: &GridCase, cfg: &GenerateConfig) -> Result<Dataset> {
    if cfg.n_points == 0 {
        return Err(Error::Usage("n_points must be positive".into()));
    }
    let base = solve_power_flow(case, cfg.power_flow)?;
    if !base.converged {
        return Err(PowerFlowError::NoConvergence {
            iterations: base.iterations,
            mismatch: base.mismatch,
        }
        .into());
    }
    let branches: Vec<usize> = (0..case.branches.len()).collect();
    let cap = cfg.n_points.saturating_mul(cfg.draw_cap_factor.max(1));
    let mut samples = Vec::with_capacity(cfg.n_points);
    let (mut draws, mut nonconv, mut limits) = (0usize, 0usize, 0usize);

    'outer: while samples.len() < cfg.n_points && draws < cap {
        // Slightly more draws than still needed, to cover discards.
        let wanted = cfg.n_points - samples.len();
        let count = (wanted + wanted / 4 + 1).max(par::threads()).min(512).min(cap - draws);
        let start = draws as u64;
        let results = par::map_range(count, |i| run_draw(case, cfg, start + i as u64, &branches));
        for r in results {
            draws += 1;
            match r? {
                Draw::Kept(s) => samples.push(s),
                Draw::NonConvergence => nonconv += 1,
                Draw::Limits => limits += 1,
            }
            if samples.len() == cfg.n_points {
                break 'outer;
            }
        }
    }
    if samples.len() < cfg.n_points {
        return Err(Error::Data(format!(
            "draw cap of {cap} exhausted with {} kept points ({nonconv} non-convergent, {limits} limit violations)",
            samples.len()
        )));
    }
    Ok(Dataset {
        header: DatasetHeader {
            case_hash: case_hash(case),
            k_len: cfg.k_len,
            agg_nodes: cfg.agg_nodes.clone(),
            threshold: cfg.label.threshold,
            seed: cfg.seed,
            scale: cfg.scale,
            n_buses: case.n_buses(),
            n_branches: case.branches.len(),
            draws,
            discarded_nonconvergence: nonconv,
            discarded_limits: limits,
        },
        samples,
    })
}

/// Feature matrix of one sample, optionally with unobserved buses masked.
pub fn featurize(
    graph: &GridGraph,
    endpoints: &[(usize, usize)],
    sample: &RawSample,
    nodes: &[usize],
    k_len: usize,
    observed: Option<&[usize]>,
) -> DMatrix<f64> {
    let mut signals = sample.signals(endpoints);
    if let Some(obs) = observed {
        signals = mask_unobserved(&signals, obs);
    }
    node_features(graph, &signals, nodes, k_len).z
}

/// `(features, label)` for every sample, in dataset order.
pub fn featurize_all(
    case: &GridCase,
    samples: &[RawSample],
    nodes: &[usize],
    k_len: usize,
    observed: Option<&[usize]>,
) -> Vec<(DMatrix<f64>, bool)> {
    let graph = crate::grid_io::build_graph(case);
    let endpoints = case.branch_endpoints();
    par::map(samples, |s| (featurize(&graph, &endpoints, s, nodes, k_len, observed), s.secure))
}

fn join_f64(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        out.push(' ');
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
}

pub fn write_dataset(ds: &Dataset) -> String {
    let h = &ds.header;
    let mut out = String::new();
    let nodes: Vec<String> = h.agg_nodes.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(out, "{DATASET_MAGIC} {DATASET_VERSION}");
    let _ = writeln!(out, "case_hash {}", h.case_hash);
    let _ = writeln!(out, "k_len {}", h.k_len);
    let _ = writeln!(out, "agg_nodes {}", nodes.join(" "));
    let _ = writeln!(out, "threshold {}", fmt_f64(h.threshold));
    let _ = writeln!(out, "seed {}", h.seed);
    let _ = writeln!(out, "scale {} {}", fmt_f64(h.scale.0), fmt_f64(h.scale.1));
    let _ = writeln!(out, "n_buses {}", h.n_buses);
    let _ = writeln!(out, "n_branches {}", h.n_branches);
    let _ = writeln!(out, "draws {}", h.draws);
    let _ = writeln!(out, "discarded_nonconvergence {}", h.discarded_nonconvergence);
    let _ = writeln!(out, "discarded_limits {}", h.discarded_limits);
    let _ = writeln!(out, "samples {}", ds.samples.len());
    for s in &ds.samples {
        let _ = writeln!(
            out,
            "sample {} {} {} {}",
            s.draw,
            s.profile_seed,
            u8::from(s.secure),
            fmt_f64(s.min_zeta)
        );
        join_f64(&mut out, "v", &s.v_mag);
        join_f64(&mut out, "a", &s.v_ang);
        join_f64(&mut out, "p", &s.p_net);
        join_f64(&mut out, "q", &s.q_net);
        join_f64(&mut out, "lp", &s.line_p);
        join_f64(&mut out, "lq", &s.line_q);
        join_f64(&mut out, "z", &s.per_contingency);
    }
    out
}

struct Lines<'a> {
    name: &'a str,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            file: self.name.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    /// Next line split as `(tag, rest)`, with the tag checked.
    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let (i, line) = self.iter.next().ok_or_else(|| {
            Error::Format {
                file: self.name.to_string(),
                line: self.line + 1,
                message: format!("unexpected end of file, expected `{tag}`"),
            }
        })?;
        self.line = i + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(t) if t == tag => Ok(parts.collect()),
            other => Err(self.err(format!("expected `{tag}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn parse<T: FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("invalid value `{s}`")))
    }

    fn one<T: FromStr>(&mut self, tag: &str) -> Result<T> {
        let v = self.tagged(tag)?;
        if v.len() != 1 {
            return Err(self.err(format!("`{tag}` takes one value")));
        }
        self.parse(v[0])
    }

    fn floats(&mut self, tag: &str, len: usize) -> Result<Vec<f64>> {
        let v = self.tagged(tag)?;
        if v.len() != len {
            return Err(self.err(format!("`{tag}` needs {len} values, found {}", v.len())));
        }
        v.iter().map(|s| self.parse(s)).collect()
    }
}

pub fn read_dataset(text: &str, name: &str) -> Result<Dataset> {
    let mut r = Lines {
        name,
        iter: text.lines().enumerate(),
        line: 0,
    };
    let version: u32 = r.one(DATASET_MAGIC)?;
    if version != DATASET_VERSION {
        return Err(r.err(format!("unsupported dataset version {version}")));
    }
    let case_hash: String = r.one("case_hash")?;
    let k_len = r.one("k_len")?;
    let agg_nodes = {
        let v = r.tagged("agg_nodes")?;
        v.iter().map(|s| r.parse(s)).collect::<Result<Vec<usize>>>()?
    };
    let threshold = r.one("threshold")?;
    let seed = r.one("seed")?;
    let scale = {
        let v = r.floats("scale", 2)?;
        (v[0], v[1])
    };
    let n_buses: usize = r.one("n_buses")?;
    let n_branches: usize = r.one("n_branches")?;
    let draws = r.one("draws")?;
    let discarded_nonconvergence = r.one("discarded_nonconvergence")?;
    let discarded_limits = r.one("discarded_limits")?;
    let n_samples: usize = r.one("samples")?;
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let head = r.tagged("sample")?;
        if head.len() != 4 {
            return Err(r.err("`sample` takes draw, seed, label and min_zeta"));
        }
        let secure = match head[2] {
            "0" => false,
            "1" => true,
            other => return Err(r.err(format!("label must be 0 or 1, found `{other}`"))),
        };
        samples.push(RawSample {
            draw: r.parse(head[0])?,
            profile_seed: r.parse(head[1])?,
            secure,
            min_zeta: r.parse(head[3])?,
            v_mag: r.floats("v", n_buses)?,
            v_ang: r.floats("a", n_buses)?,
            p_net: r.floats("p", n_buses)?,
            q_net: r.floats("q", n_buses)?,
            line_p: r.floats("lp", n_branches)?,
            line_q: r.floats("lq", n_branches)?,
            per_contingency: {
                let v = r.tagged("z")?;
                v.iter().map(|s| r.parse(s)).collect::<Result<Vec<f64>>>()?
            },
        });
    }
    if let Some((i, extra)) = r.iter.find(|(_, l)| !l.trim().is_empty()) {
        r.line = i + 1;
        return Err(r.err(format!("unexpected trailing content `{extra}`")));
    }
    Ok(Dataset {
        header: DatasetHeader {
            case_hash,
            k_len,
            agg_nodes,
            threshold,
            seed,
            scale,
            n_buses,
            n_branches,
            draws,
            discarded_nonconvergence,
            discarded_limits,
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_io::parse_case;

    fn smib() -> GridCase {
        parse_case(
            "BASE_MVA\n100\nBUS\n1 PV 0 0 1.0 0.9 1.1\n2 SLACK 0.2 0.05 1.0 0.9 1.1\n\
             GEN\n1 0.8 0 5\nGEN_DYNAMICS\n1 4 6 0.25\n\
             BRANCH\n1 2 0 0.4 0 0\n1 2 0 0.4 0 0\n",
        )
        .unwrap()
    }

    #[test]
    fn smib_generation_structure() {
        let cfg = GenerateConfig {
            n_points: 10,
            seed: 5,
            ..GenerateConfig::default()
        };
        let ds = generate_dataset(&smib(), &cfg).unwrap();
        assert_eq!(ds.samples.len(), 10);
        assert!(ds.samples.iter().all(|s| s.per_contingency.len() == 2));
        assert_eq!(ds, generate_dataset(&smib(), &cfg).unwrap());
        let text = write_dataset(&ds);
        let back = read_dataset(&text, "mem").unwrap();
        assert_eq!(write_dataset(&back), text);
        assert_eq!(back.samples[3].v_mag, ds.samples[3].v_mag);
    }

    #[test]
    fn unit_scale_gives_identical_samples() {
        let cfg = GenerateConfig {
            n_points: 4,
            scale: (1.0, 1.0),
            ..GenerateConfig::default()
        };
        let ds = generate_dataset(&smib(), &cfg).unwrap();
        for s in &ds.samples[1..] {
            assert_eq!(s.v_mag, ds.samples[0].v_mag);
            assert_eq!(s.secure, ds.samples[0].secure);
            assert_eq!(s.min_zeta, ds.samples[0].min_zeta);
        }
    }

    #[test]
    fn draw_cap_reported() {
        let mut case = smib();
        // Every draw overloads this rating.
        case.branches[0].rating = 1e-3;
        let cfg = GenerateConfig {
            n_points: 3,
            ..GenerateConfig::default()
        };
        let err = generate_dataset(&case, &cfg).unwrap_err().to_string();
        assert!(err.contains("draw cap of 30"), "{err}");
    }

    #[test]
    fn malformed_files_report_line() {
        let ds = generate_dataset(
            &smib(),
            &GenerateConfig {
                n_points: 2,
                ..GenerateConfig::default()
            },
        )
        .unwrap();
        let text = write_dataset(&ds);
        let broken = text.replacen("\nv ", "\nv 1.0 ", 1);
        match read_dataset(&broken, "d.txt") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 15),
            other => panic!("{other:?}"),
        }
        assert!(read_dataset("SSA-DATASET 9\n", "d.txt").is_err());
    }
}
