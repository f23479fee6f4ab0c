//! `ssa`: generate labelled operating points, train the aggregation
//! classifier and run the assessment experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ssa_core::eval::{
    self, AssessOptions, Dataset, ExperimentReport, GenerateConfig, KSweepConfig,
};
use ssa_core::graph_features::select_aggregation_nodes;
use ssa_core::grid_io::{build_graph, parse_case, GridCase};
use ssa_core::learner::{persist_model, restore_model, train, ModelParams, ModelSpec, TrainConfig};
use ssa_core::small_signal::LabelOptions;
use ssa_core::steady_state::{check_limits, scale_profile, solve_power_flow, PowerFlowOptions};
use ssa_core::{Error, Result};

mod config;

#[derive(Parser, Debug)]
#[command(name = "ssa", version, about = "Small-signal security assessment with a graph aggregation classifier")]
struct Cli {
    /// Seed for sampling, splitting and initialisation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Text file of `key = value` lines, one per flag. Flags given on the
    /// command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports and default outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample load profiles, solve and label them over all line outages.
    Generate(GenerateArgs),
    /// Train a classifier on a generated dataset.
    Train(TrainArgs),
    /// Classify operating points with a trained model.
    Assess(AssessArgs),
    /// Score a trained model on the test split.
    Evaluate(EvaluateArgs),
    /// Test accuracy as a function of the aggregation length.
    SweepK(SweepArgs),
    /// Test accuracy with progressively more buses unobserved.
    MissingData(MissingArgs),
    /// Centralities, sensor placement and aggregation node choice.
    Placement(PlacementArgs),
    /// Inference latency.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct CaseArg {
    /// Grid case file.
    #[arg(long)]
    case: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// Lower and upper load/dispatch multiplier.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.7, 1.5])]
    scale: Vec<f64>,
    /// Minimum damping ratio of a secure point.
    #[arg(long, default_value_t = 0.03)]
    zeta_min: f64,
    /// Aggregation length recorded for training.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Aggregation bus ids; defaults to the most central bus.
    #[arg(long, value_delimiter = ',')]
    agg_buses: Vec<u32>,
    /// Output file; defaults to `<out>/dataset.txt`.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainSettings {
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 2500)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.75, 0.15, 0.10])]
    split: Vec<f64>,
    /// Probability at or above which a point is called secure.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Skip input standardisation.
    #[arg(long)]
    raw_inputs: bool,
}

impl TrainSettings {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            split: (self.split[0], self.split[1], self.split[2]),
            standardize: !self.raw_inputs,
            threshold: self.threshold,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    dataset: PathBuf,
    /// Conv filters and the three dense widths.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [2, 4, 5, 1])]
    widths: Vec<usize>,
    /// Aggregation length; defaults to the dataset's.
    #[arg(long)]
    k: Option<usize>,
    /// Aggregation bus ids; default to the dataset's.
    #[arg(long, value_delimiter = ',')]
    agg_buses: Vec<u32>,
    #[command(flatten)]
    train: TrainSettings,
    /// Output model; defaults to `<out>/model.bin`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AssessArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    model: PathBuf,
    /// Assess the points stored in this dataset.
    #[arg(long, conflicts_with = "points")]
    dataset: Option<PathBuf>,
    /// Otherwise draw and solve this many fresh profiles.
    #[arg(long, default_value_t = 1)]
    points: usize,
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.7, 1.5])]
    scale: Vec<f64>,
    /// Required aggregation length; refused if the model differs.
    #[arg(long)]
    k: Option<usize>,
    /// Required aggregation bus ids; refused if the model differs.
    #[arg(long, value_delimiter = ',')]
    agg_buses: Vec<u32>,
    /// Also run the full contingency screening and report agreement.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 0.03)]
    zeta_min: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.75, 0.15, 0.10])]
    split: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [2, 4, 5, 1])]
    widths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    k_values: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    repeats: usize,
    #[arg(long, value_delimiter = ',')]
    agg_buses: Vec<u32>,
    #[command(flatten)]
    train: TrainSettings,
}

#[derive(Args, Debug)]
struct MissingArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Fraction of buses carrying a sensor.
    #[arg(long, default_value_t = 0.3)]
    budget: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.05, 0.1, 0.15, 0.2])]
    fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.75, 0.15, 0.10])]
    split: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct PlacementArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long, default_value_t = 0.3)]
    budget: f64,
    /// How many aggregation nodes to propose.
    #[arg(long, default_value_t = 1)]
    agg_count: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    /// Exact labellings to time for comparison; 0 skips them.
    #[arg(long, default_value_t = 3)]
    exact_points: usize,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn load_case(arg: &CaseArg) -> Result<GridCase> {
    Ok(parse_case(&read_text(&arg.case)?)?)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    eval::read_dataset(&read_text(path)?, &path.display().to_string())
}

fn load_model(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(restore_model(&bytes)?)
}

/// Dense indices of the given bus ids.
fn bus_indices(case: &GridCase, ids: &[u32]) -> Result<Vec<usize>> {
    let index = case.bus_index();
    ids.iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Usage(format!("bus {id} is not in the case")))
        })
        .collect()
}

fn widths(v: &[usize]) -> [usize; 4] {
    [v[0], v[1], v[2], v[3]]
}

fn emit(report: &ExperimentReport, out: &Path, stem: &str) -> Result<()> {
    print!("{}", report.to_table());
    for p in report.write(out, stem)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    if !(a.scale[0] > 0.0 && a.scale[0] <= a.scale[1]) {
        return Err(Error::Usage("--scale needs 0 < lo <= hi".into()));
    }
    let agg_nodes = if a.agg_buses.is_empty() {
        select_aggregation_nodes(&build_graph(&case), 1)?
    } else {
        bus_indices(&case, &a.agg_buses)?
    };
    let cfg = GenerateConfig {
        n_points: a.points,
        scale: (a.scale[0], a.scale[1]),
        label: LabelOptions {
            threshold: a.zeta_min,
            ..LabelOptions::default()
        },
        seed: cli.seed,
        k_len: a.k,
        agg_nodes,
        ..GenerateConfig::default()
    };
    let t = Instant::now();
    let ds = eval::generate_dataset(&case, &cfg)?;
    let elapsed = t.elapsed().as_secs_f64() * 1e3;
    let path = a.dataset.clone().unwrap_or_else(|| cli.out.join("dataset.txt"));
    write_file(&path, eval::write_dataset(&ds).as_bytes())?;
    eprintln!("wrote {}", path.display());

    let h = &ds.header;
    let mut r = ExperimentReport::new(
        "Dataset generation",
        &["draws", "kept", "non_convergent", "limit_violations", "secure", "insecure", "secure_fraction"],
    );
    r.config("case", a.case.case.display()).config("seed", cli.seed).config("zeta_min", a.zeta_min);
    let secure = ds.samples.iter().filter(|s| s.secure).count();
    r.push(vec![
        h.draws.into(),
        ds.samples.len().into(),
        h.discarded_nonconvergence.into(),
        h.discarded_limits.into(),
        secure.into(),
        (ds.samples.len() - secure).into(),
        ds.secure_fraction().into(),
    ]);
    r.timings_ms.push(("generate".into(), elapsed));
    emit(&r, &cli.out, "generate")
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let ds = load_dataset(&a.dataset)?;
    eval::check_dataset_case(&case, &ds)?;
    let k = a.k.unwrap_or(ds.header.k_len);
    let nodes = if a.agg_buses.is_empty() {
        ds.header.agg_nodes.clone()
    } else {
        bus_indices(&case, &a.agg_buses)?
    };
    let spec = ModelSpec::from_widths(widths(&a.widths), k, ssa_core::graph_features::N_FEATURES, nodes.clone());
    spec.validate()?;
    let cfg = a.train.config(cli.seed);
    let feats = eval::featurize_all(&case, &ds.samples, &nodes, k, None);
    let t = Instant::now();
    let (model, history) = train(&feats, &spec, &cfg)?;
    let elapsed = t.elapsed().as_secs_f64() * 1e3;

    let path = a.model.clone().unwrap_or_else(|| cli.out.join("model.bin"));
    write_file(&path, &persist_model(&model))?;
    eprintln!("wrote {} ({} parameters)", path.display(), model.parameter_count());
    let mut hist = eval::history_report(&history);
    hist.config("seed", cli.seed)
        .config("parameters", model.parameter_count())
        .config("k_len", k);
    hist.timings_ms.push(("train".into(), elapsed));
    for p in hist.write(&cli.out, "history")? {
        eprintln!("wrote {}", p.display());
    }
    if let Some(last) = history.last() {
        println!(
            "epoch {}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            last.epoch, last.train_loss, last.train_acc, last.val_loss, last.val_acc
        );
    }
    Ok(())
}

fn evaluate_cmd(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let ds = load_dataset(&a.dataset)?;
    let model = load_model(&a.model)?;
    let cfg = TrainConfig {
        seed: cli.seed,
        split: (a.split[0], a.split[1], a.split[2]),
        threshold: a.threshold,
        ..TrainConfig::default()
    };
    let (_, report) = eval::evaluate(&model, &case, &ds, &cfg)?;
    emit(&report, &cli.out, "evaluate")
}

fn assess_cmd(cli: &Cli, a: &AssessArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let model = load_model(&a.model)?;
    let agg = (!a.agg_buses.is_empty())
        .then(|| bus_indices(&case, &a.agg_buses))
        .transpose()?;
    // Refuse a mismatched model before solving anything.
    eval::check_model_compat(&model, &case, a.k, agg.as_deref())?;

    let points = match &a.dataset {
        Some(path) => {
            let ds = load_dataset(path)?;
            eval::check_dataset_case(&case, &ds)?;
            ds.samples.iter().map(|s| eval::dataset_point(&case, &ds, s)).collect()
        }
        None => {
            let mut points = Vec::with_capacity(a.points);
            let mut draw = 0u64;
            while points.len() < a.points {
                if draw >= 10 * a.points.max(1) as u64 {
                    return Err(Error::Data(format!("only {} of {} draws solved within limits", points.len(), draw)));
                }
                let (scaled, _) = scale_profile(&case, (a.scale[0], a.scale[1]), eval::draw_seed(cli.seed, draw));
                draw += 1;
                match solve_power_flow(&scaled, PowerFlowOptions::default()) {
                    Ok(op) if op.converged && check_limits(&scaled, &op).is_empty() => points.push((scaled, op)),
                    _ => {}
                }
            }
            points
        }
    };
    let opts = AssessOptions {
        k_len: a.k,
        agg_nodes: agg,
        threshold: a.threshold,
        exact: a.exact.then(|| LabelOptions {
            threshold: a.zeta_min,
            ..LabelOptions::default()
        }),
    };
    let t = Instant::now();
    let verdicts = eval::assess(&model, &case, &points, &opts)?;
    let mut r = eval::verdict_report(&verdicts);
    r.config("points", verdicts.len());
    r.timings_ms.push(("assess".into(), t.elapsed().as_secs_f64() * 1e3));
    if a.exact {
        let agree = verdicts.iter().filter(|v| v.agrees() == Some(true)).count();
        r.config("agreement", format!("{agree}/{}", verdicts.len()));
    }
    emit(&r, &cli.out, "assess")
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let ds = load_dataset(&a.dataset)?;
    let agg_nodes = if a.agg_buses.is_empty() {
        ds.header.agg_nodes.clone()
    } else {
        bus_indices(&case, &a.agg_buses)?
    };
    let cfg = KSweepConfig {
        widths: widths(&a.widths),
        k_values: a.k_values.clone(),
        repeats: a.repeats,
        agg_nodes,
        train: a.train.config(cli.seed),
    };
    let t = Instant::now();
    let mut r = eval::k_sweep(&case, &ds, &cfg)?;
    r.timings_ms.push(("sweep".into(), t.elapsed().as_secs_f64() * 1e3));
    emit(&r, &cli.out, "sweep_k")
}

fn missing_cmd(cli: &Cli, a: &MissingArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let ds = load_dataset(&a.dataset)?;
    let model = load_model(&a.model)?;
    let cfg = TrainConfig {
        seed: cli.seed,
        split: (a.split[0], a.split[1], a.split[2]),
        threshold: a.threshold,
        ..TrainConfig::default()
    };
    let r = eval::missing_data_experiment(&model, &case, &ds, a.budget, &a.fractions, &cfg)?;
    emit(&r, &cli.out, "missing_data")
}

fn placement_cmd(cli: &Cli, a: &PlacementArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let r = eval::placement_report(&case, a.budget, a.agg_count)?;
    emit(&r, &cli.out, "placement")
}

fn bench_cmd(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let ds = load_dataset(&a.dataset)?;
    let model = load_model(&a.model)?;
    let res = eval::benchmark_inference(
        &model,
        &case,
        &ds,
        a.batch_size,
        a.repeats,
        a.exact_points,
        &LabelOptions::default(),
    )?;
    emit(&res.report(), &cli.out, "bench")
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Assess(a) => assess_cmd(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
        Command::SweepK(a) => sweep_cmd(cli, a),
        Command::MissingData(a) => missing_cmd(cli, a),
        Command::Placement(a) => placement_cmd(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
