use std::time::Instant;

use nalgebra::DMatrix;

use super::dataset::{case_hash, featurize, featurize_all, Dataset, RawSample};
use super::metrics::{compute_metrics, Metrics};
use super::report::{Cell, ExperimentReport};
use crate::error::{Error, Result};
use crate::graph_features::{centrality_scores, closeness_centrality, pmu_placement, select_aggregation_nodes};
use crate::grid_io::{build_graph, GridCase, GridGraph};
use crate::learner::{predict, split_indices, train, EpochStats, ModelParams, ModelSpec, TrainConfig};
use crate::par;
use crate::small_signal::{label_operating_point, LabelOptions};
use crate::steady_state::{scale_profile, OperatingPoint};

/// Refuses datasets labelled on a different case.
pub fn check_dataset_case(case: &GridCase, ds: &Dataset) -> Result<()> {
    let h = case_hash(case);
    if ds.header.case_hash != h || ds.header.n_buses != case.n_buses() || ds.header.n_branches != case.branches.len() {
        return Err(Error::Data(format!(
            "dataset was generated on case {} but this case hashes to {h}",
            ds.header.case_hash
        )));
    }
    Ok(())
}

/// Checks that a model can be fed features of `case`, and that the requested
/// aggregation setup (if any) is the one it was trained with.
pub fn check_model_compat(
    model: &ModelParams,
    case: &GridCase,
    k_len: Option<usize>,
    agg_nodes: Option<&[usize]>,
) -> Result<()> {
    let spec = &model.spec;
    if let Some(k) = k_len.filter(|&k| k != spec.k_len) {
        return Err(Error::Data(format!(
            "model expects aggregation length {}, got {k}",
            spec.k_len
        )));
    }
    if let Some(nodes) = agg_nodes.filter(|n| *n != spec.agg_nodes.as_slice()) {
        return Err(Error::Data(format!(
            "model aggregates at nodes {:?}, got {nodes:?}",
            spec.agg_nodes
        )));
    }
    if let Some(&bad) = spec.agg_nodes.iter().find(|&&i| i >= case.n_buses()) {
        return Err(Error::Data(format!(
            "model aggregates at node {bad} but the case has {} buses",
            case.n_buses()
        )));
    }
    if spec.n_features != crate::graph_features::N_FEATURES {
        return Err(Error::Data(format!("model expects {} input features", spec.n_features)));
    }
    Ok(())
}

fn score(model: &ModelParams, set: &[&(DMatrix<f64>, bool)], threshold: f64) -> Result<Metrics> {
    let preds = set
        .iter()
        .map(|(z, _)| predict(model, z).map(|p| p >= threshold))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let labels: Vec<bool> = set.iter().map(|s| s.1).collect();
    compute_metrics(&preds, &labels)
}

/// Metrics on the test split that [`train`] would carve out with the same
/// fractions and seed.
pub fn test_metrics(
    model: &ModelParams,
    feats: &[(DMatrix<f64>, bool)],
    split: (f64, f64, f64),
    seed: u64,
    threshold: f64,
) -> Result<Metrics> {
    let (_, _, test) = split_indices(feats.len(), split, seed);
    if test.is_empty() {
        return Err(Error::Data("the test split is empty".into()));
    }
    let set: Vec<_> = test.iter().map(|&i| &feats[i]).collect();
    score(model, &set, threshold)
}

fn metric_cells(m: &Metrics) -> Vec<Cell> {
    vec![
        m.accuracy.into(),
        m.specificity.into(),
        m.recall.into(),
        m.tp.into(),
        m.tn.into(),
        m.fp.into(),
        m.fn_.into(),
    ]
}

const METRIC_COLUMNS: [&str; 7] = ["accuracy", "specificity", "recall", "tp", "tn", "fp", "fn"];

/// Scores a trained model on the test split of `ds`.
pub fn evaluate(
    model: &ModelParams,
    case: &GridCase,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Metrics, ExperimentReport)> {
    check_dataset_case(case, ds)?;
    check_model_compat(model, case, None, None)?;
    let spec = &model.spec;
    let feats = featurize_all(case, &ds.samples, &spec.agg_nodes, spec.k_len, None);
    let m = test_metrics(model, &feats, cfg.split, cfg.seed, cfg.threshold)?;

    let mut cols = vec!["split", "samples"];
    cols.extend(METRIC_COLUMNS);
    let mut report = ExperimentReport::new("Test-split evaluation", &cols);
    report
        .config("seed", cfg.seed)
        .config("k_len", spec.k_len)
        .config("parameters", model.parameter_count())
        .config("threshold", cfg.threshold);
    let mut row = vec![Cell::from("test"), (m.tp + m.tn + m.fp + m.fn_).into()];
    row.extend(metric_cells(&m));
    report.push(row);
    Ok((m, report))
}

/// Per-epoch training curve.
pub fn history_report(history: &[EpochStats]) -> ExperimentReport {
    let mut r = ExperimentReport::new(
        "Training history",
        &["epoch", "train_loss", "train_acc", "val_loss", "val_acc"],
    );
    let opt = |v: f64| if v.is_nan() { Cell::Missing } else { v.into() };
    for e in history {
        r.push(vec![
            e.epoch.into(),
            e.train_loss.into(),
            e.train_acc.into(),
            opt(e.val_loss),
            opt(e.val_acc),
        ]);
    }
    r
}

pub struct KSweepConfig {
    /// `[conv filters, fc1, fc2, fc3]`.
    pub widths: [usize; 4],
    pub k_values: Vec<usize>,
    pub repeats: usize,
    pub agg_nodes: Vec<usize>,
    /// Repeat `r` trains with seed `train.seed + r`.
    pub train: TrainConfig,
}

/// Trains `repeats` models per aggregation length and reports test accuracy.
pub fn k_sweep(case: &GridCase, ds: &Dataset, cfg: &KSweepConfig) -> Result<ExperimentReport> {
    if cfg.k_values.is_empty() || cfg.repeats == 0 {
        return Err(Error::Usage("k sweep needs at least one K and one repeat".into()));
    }
    check_dataset_case(case, ds)?;
    let mut report = ExperimentReport::new(
        "Accuracy by aggregation length",
        &["k", "parameters", "accuracy_mean", "accuracy_std", "repeats"],
    );
    report
        .config("widths", format!("{:?}", cfg.widths))
        .config("agg_nodes", format!("{:?}", cfg.agg_nodes))
        .config("seed", cfg.train.seed)
        .config("epochs", cfg.train.epochs)
        .config("lr", cfg.train.lr);
    for &k in &cfg.k_values {
        let spec = ModelSpec::from_widths(cfg.widths, k, crate::graph_features::N_FEATURES, cfg.agg_nodes.clone());
        spec.validate()?;
        let feats = featurize_all(case, &ds.samples, &cfg.agg_nodes, k, None);
        let accs = par::map_range(cfg.repeats, |r| -> Result<f64> {
            let tc = TrainConfig {
                seed: cfg.train.seed.wrapping_add(r as u64),
                ..cfg.train.clone()
            };
            let (model, _) = train(&feats, &spec, &tc)?;
            Ok(test_metrics(&model, &feats, tc.split, tc.seed, tc.threshold)?.accuracy)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let (mean, std) = mean_std(&accs);
        report.push(vec![k.into(), spec.parameter_count().into(), mean.into(), std.into(), cfg.repeats.into()]);
    }
    Ok(report)
}

/// Mean and sample standard deviation; the latter needs two values.
pub fn mean_std(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.len() >= 2).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

/// Buses left without a sensor when a fraction `f` of the grid goes dark:
/// the `round(f·N)` lowest-closeness buses outside `placement`, ties broken
/// by index. Returned sorted.
pub fn unobserved_nodes(graph: &GridGraph, placement: &[usize], fraction: f64) -> Result<Vec<usize>> {
    let n = graph.n();
    let closeness = closeness_centrality(graph)?;
    let mut candidates: Vec<usize> = (0..n).filter(|i| !placement.contains(i)).collect();
    candidates.sort_by(|&a, &b| closeness[a].total_cmp(&closeness[b]).then(a.cmp(&b)));
    let count = ((fraction * n as f64).round() as usize).min(candidates.len());
    let mut out = candidates[..count].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// True when every node in `hidden` is at least `k_len` hops from every
/// aggregation node, so masking it cannot reach the features.
pub fn satisfies_locality(graph: &GridGraph, agg_nodes: &[usize], hidden: &[usize], k_len: usize) -> bool {
    agg_nodes.iter().all(|&a| {
        let d = graph.bfs_distances(a);
        hidden.iter().all(|&h| d[h].is_none_or(|d| d >= k_len.max(2)))
    })
}

/// Re-scores the test split with progressively more buses unobserved.
pub fn missing_data_experiment(
    model: &ModelParams,
    case: &GridCase,
    ds: &Dataset,
    budget: f64,
    fractions: &[f64],
    cfg: &TrainConfig,
) -> Result<ExperimentReport> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::Usage(format!("missing fraction {f} outside [0, 1)")));
    }
    check_dataset_case(case, ds)?;
    check_model_compat(model, case, None, None)?;
    let graph = build_graph(case);
    let placement = pmu_placement(&graph, budget)?;
    let spec = &model.spec;
    let endpoints = case.branch_endpoints();
    let (_, _, test) = split_indices(ds.samples.len(), cfg.split, cfg.seed);
    if test.is_empty() {
        return Err(Error::Data("the test split is empty".into()));
    }

    let mut cols = vec!["fraction", "unobserved", "locality"];
    cols.extend(METRIC_COLUMNS);
    let mut report = ExperimentReport::new("Accuracy with unobserved buses", &cols);
    report
        .config("budget", budget)
        .config("placement", placement.len())
        .config("seed", cfg.seed)
        .config("k_len", spec.k_len);
    for &f in fractions {
        let hidden = unobserved_nodes(&graph, &placement, f)?;
        let observed: Vec<usize> = (0..graph.n()).filter(|i| hidden.binary_search(i).is_err()).collect();
        let set = par::map(&test, |&i| {
            let s = &ds.samples[i];
            (featurize(&graph, &endpoints, s, &spec.agg_nodes, spec.k_len, Some(&observed)), s.secure)
        });
        let m = score(model, &set.iter().collect::<Vec<_>>(), cfg.threshold)?;
        let mut row = vec![
            f.into(),
            hidden.len().into(),
            satisfies_locality(&graph, &spec.agg_nodes, &hidden, spec.k_len).into(),
        ];
        row.extend(metric_cells(&m));
        report.push(row);
    }
    Ok(report)
}

/// Latency figures in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub batch_size: usize,
    pub repeats: usize,
    pub batch_median_ms: f64,
    pub batch_p95_ms: f64,
    pub feature_ms_per_sample: f64,
    pub forward_ms_per_sample: f64,
    /// Full N-1 labelling per point, the non-learned reference path.
    pub exact_ms_per_point: Option<f64>,
}

impl BenchResult {
    pub fn per_sample_ms(&self) -> f64 {
        self.batch_median_ms / self.batch_size as f64
    }

    pub fn report(&self) -> ExperimentReport {
        let mut r = ExperimentReport::new("Inference latency", &["measure", "milliseconds"]);
        r.config("batch_size", self.batch_size).config("repeats", self.repeats);
        for (k, v) in [
            ("batch_median", Some(self.batch_median_ms)),
            ("batch_p95", Some(self.batch_p95_ms)),
            ("per_sample", Some(self.per_sample_ms())),
            ("feature_per_sample", Some(self.feature_ms_per_sample)),
            ("forward_per_sample", Some(self.forward_ms_per_sample)),
            ("exact_labelling_per_point", self.exact_ms_per_point),
        ] {
            r.push(vec![k.into(), v.into()]);
        }
        r
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Median (midpoint average) and nearest-rank 95th percentile.
pub fn median_p95(times: &[f64]) -> (f64, f64) {
    let mut v = times.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    (median, v[rank - 1])
}

/// Times feature aggregation plus the forward pass on batches of raw
/// samples, single-threaded, after three warm-up batches. `exact_points`
/// additionally times that many exact labellings.
pub fn benchmark_inference(
    model: &ModelParams,
    case: &GridCase,
    ds: &Dataset,
    batch_size: usize,
    repeats: usize,
    exact_points: usize,
    label: &LabelOptions,
) -> Result<BenchResult> {
    if batch_size == 0 || repeats == 0 || ds.samples.is_empty() {
        return Err(Error::Usage("benchmark needs a positive batch size, repeats and samples".into()));
    }
    check_dataset_case(case, ds)?;
    check_model_compat(model, case, None, None)?;
    let spec = &model.spec;
    let graph = build_graph(case);
    let endpoints = case.branch_endpoints();
    let batch_of = |r: usize| -> Vec<&RawSample> {
        (0..batch_size)
            .map(|i| &ds.samples[(r * batch_size + i) % ds.samples.len()])
            .collect()
    };
    let run = |batch: &[&RawSample]| -> Result<f64> {
        let mut acc = 0.0;
        for s in batch {
            let z = featurize(&graph, &endpoints, s, &spec.agg_nodes, spec.k_len, None);
            acc += predict(model, &z)?;
        }
        Ok(acc)
    };

    par::sequential(|| -> Result<BenchResult> {
        let mut sink = 0.0;
        for w in 0..3 {
            sink += run(&batch_of(w))?;
        }
        let mut times = Vec::with_capacity(repeats);
        let (mut feat_ms, mut fwd_ms, mut count) = (0.0, 0.0, 0usize);
        for r in 0..repeats {
            let batch = batch_of(r);
            let t = Instant::now();
            sink += run(&batch)?;
            times.push(ms(t));

            let t = Instant::now();
            let zs: Vec<DMatrix<f64>> = batch
                .iter()
                .map(|s| featurize(&graph, &endpoints, s, &spec.agg_nodes, spec.k_len, None))
                .collect();
            feat_ms += ms(t);
            let t = Instant::now();
            for z in &zs {
                sink += predict(model, z)?;
            }
            fwd_ms += ms(t);
            count += batch.len();
        }
        std::hint::black_box(sink);

        let exact_ms_per_point = if exact_points > 0 {
            let branches: Vec<usize> = (0..case.branches.len()).collect();
            let points: Vec<_> = (0..exact_points)
                .map(|i| dataset_point(case, ds, &ds.samples[i % ds.samples.len()]))
                .collect();
            let t = Instant::now();
            for (c, op) in &points {
                std::hint::black_box(label_operating_point(c, op, &branches, label)?);
            }
            Some(ms(t) / exact_points as f64)
        } else {
            None
        };

        let (batch_median_ms, batch_p95_ms) = median_p95(&times);
        Ok(BenchResult {
            batch_size,
            repeats,
            batch_median_ms,
            batch_p95_ms,
            feature_ms_per_sample: feat_ms / count as f64,
            forward_ms_per_sample: fwd_ms / count as f64,
            exact_ms_per_point,
        })
    })
}

/// The scaled case and solved state behind a stored sample.
pub fn dataset_point(case: &GridCase, ds: &Dataset, s: &RawSample) -> (GridCase, OperatingPoint) {
    (scale_profile(case, ds.header.scale, s.profile_seed).0, s.operating_point())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub probability: f64,
    pub secure: bool,
    /// Filled when exact labelling was requested.
    pub exact: Option<ExactVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactVerdict {
    pub secure: bool,
    pub min_zeta: f64,
}

impl Verdict {
    pub fn agrees(&self) -> Option<bool> {
        self.exact.map(|e| e.secure == self.secure)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessOptions {
    /// Expected aggregation length; a mismatch with the model is an error.
    pub k_len: Option<usize>,
    pub agg_nodes: Option<Vec<usize>>,
    pub threshold: f64,
    pub exact: Option<LabelOptions>,
}

impl Default for AssessOptions {
    fn default() -> Self {
        AssessOptions {
            k_len: None,
            agg_nodes: None,
            threshold: 0.5,
            exact: None,
        }
    }
}

/// Classifies each `(scaled case, operating point)` pair, in order.
pub fn assess(
    model: &ModelParams,
    case: &GridCase,
    points: &[(GridCase, OperatingPoint)],
    opts: &AssessOptions,
) -> Result<Vec<Verdict>> {
    check_model_compat(model, case, opts.k_len, opts.agg_nodes.as_deref())?;
    let spec = &model.spec;
    let graph = build_graph(case);
    let branches: Vec<usize> = (0..case.branches.len()).collect();
    for (c, op) in points {
        if c.n_buses() != case.n_buses() || c.branches.len() != case.branches.len() || op.v_mag.len() != case.n_buses() {
            return Err(Error::Data("operating point does not match the case topology".into()));
        }
    }
    par::map(points, |(c, op)| -> Result<Verdict> {
        let signals = crate::graph_features::GraphSignals::from_operating_point(c, op);
        let z = crate::graph_features::node_features(&graph, &signals, &spec.agg_nodes, spec.k_len).z;
        let probability = predict(model, &z)?;
        let exact = match &opts.exact {
            Some(label) => {
                let l = label_operating_point(c, op, &branches, label)?;
                Some(ExactVerdict {
                    secure: l.secure,
                    min_zeta: l.min_zeta,
                })
            }
            None => None,
        };
        Ok(Verdict {
            probability,
            secure: probability >= opts.threshold,
            exact,
        })
    })
    .into_iter()
    .collect()
}

pub fn verdict_report(verdicts: &[Verdict]) -> ExperimentReport {
    let mut r = ExperimentReport::new(
        "Security verdicts",
        &["point", "probability", "secure", "exact_secure", "exact_min_zeta", "agree"],
    );
    for (i, v) in verdicts.iter().enumerate() {
        r.push(vec![
            i.into(),
            v.probability.into(),
            v.secure.into(),
            v.exact.map_or(Cell::Missing, |e| e.secure.into()),
            v.exact.map(|e| e.min_zeta).into(),
            v.agrees().map_or(Cell::Missing, Cell::from),
        ]);
    }
    r
}

/// Centralities, sensor placement and the suggested aggregation nodes.
pub fn placement_report(case: &GridCase, budget: f64, n_agg: usize) -> Result<ExperimentReport> {
    let graph = build_graph(case);
    let scores = centrality_scores(&graph)?;
    let placement = pmu_placement(&graph, budget)?;
    let agg = select_aggregation_nodes(&graph, n_agg)?;
    let mut r = ExperimentReport::new(
        "Sensor placement",
        &["index", "bus", "degree", "closeness", "eigenvector", "pmu", "aggregation_rank"],
    );
    r.config("budget", budget).config("pmus", placement.len()).config("aggregation_nodes", n_agg);
    for i in 0..graph.n() {
        r.push(vec![
            i.into(),
            (case.buses[i].id as usize).into(),
            graph.degree(i).into(),
            scores.closeness[i].into(),
            scores.eigenvector[i].into(),
            placement.binary_search(&i).is_ok().into(),
            agg.iter().position(|&a| a == i).map_or(Cell::Missing, |p| (p + 1).into()),
        ]);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_conventions() {
        assert_eq!(median_p95(&[4.0]), (4.0, 4.0));
        assert_eq!(median_p95(&[3.0, 1.0, 2.0, 4.0]), (2.5, 4.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(median_p95(&v), (50.5, 95.0));
    }

    #[test]
    fn mean_std_needs_two() {
        assert_eq!(mean_std(&[0.8]), (0.8, None));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unobserved_skips_placement_and_prefers_periphery() {
        // Path 0-1-2-3-4: closeness lowest at the ends.
        let g = GridGraph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(unobserved_nodes(&g, &[2], 0.4).unwrap(), vec![0, 4]);
        assert_eq!(unobserved_nodes(&g, &[0, 2], 0.4).unwrap(), vec![1, 4]);
        assert!(unobserved_nodes(&g, &[], 0.0).unwrap().is_empty());
        assert!(satisfies_locality(&g, &[2], &[0, 4], 2));
        assert!(!satisfies_locality(&g, &[2], &[0, 4], 3));
        assert!(!satisfies_locality(&g, &[2], &[1], 1));
    }
}
