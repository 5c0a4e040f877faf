use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use multiselect::harness::{adjust_training, run_compare, run_tradeoff, CompareConfig, Method, Report, TradeoffConfig};
use multiselect::io::{load_dataset, load_json, save_dataset, to_json};
use multiselect::{
    evaluate, fit, greedy_select, sample_dataset, Algorithm, GenerativeModel, JudgmentDataset, LinearPredictor,
    RepeatVector,
};

#[derive(Parser)]
#[command(name = "multiselect", version, about = "Choose how many judgments of each attribute to buy per object")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a judged dataset from a model file
    Simulate(SimulateArgs),
    /// Choose a repeat vector from a training set
    Select(SelectArgs),
    /// Trim or extend a dataset's judgments to match a repeat vector
    Topup(TopupArgs),
    /// Fit a predictor on averaged judgments
    Fit(FitArgs),
    /// Mean squared error of a predictor on a test set
    Evaluate(EvaluateArgs),
    /// Seeded multi-trial experiments
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Subcommand)]
enum Experiment {
    /// Compare methods across budgets on random train/test splits
    Compare(CompareArgs),
    /// Trade repeats per object against objects for a fixed judgment total
    Tradeoff(TradeoffArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    objects: usize,
    /// One count for every attribute, or a comma-separated count per attribute
    #[arg(long, value_delimiter = ',', required = true)]
    repeats: Vec<u32>,
    /// Overrides the seed in the model file
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, default_value = "full")]
    algorithm: Algorithm,
    #[arg(long)]
    budget: f64,
    #[arg(long)]
    train: PathBuf,
    /// Per-attribute judgment costs (default 1 each)
    #[arg(long, value_delimiter = ',')]
    costs: Option<Vec<f64>>,
    /// Write the selection trace and objective alongside the repeat vector
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TopupArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    repeats: PathBuf,
    /// Must match the seed the training set was simulated with
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    repeats: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictor: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Per-trial CSV
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregated CSV (printed to stdout when omitted)
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "full,scoring,averages,copies")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', required = true)]
    budgets: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    costs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2)]
    k: u32,
    /// Pool size before the train/test split
    #[arg(long)]
    objects: usize,
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attribute averaged by the direct method
    #[arg(long)]
    direct_attribute: Option<usize>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct TradeoffArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "full")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 12.0)]
    budget: f64,
    #[arg(long, value_delimiter = ',')]
    costs: Option<Vec<f64>>,
    #[arg(long)]
    total_judgments: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<u32>,
    #[arg(long, default_value_t = 1000)]
    test_objects: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    report: ReportArgs,
}

fn read_model(path: &Path, seed: Option<u64>) -> anyhow::Result<GenerativeModel> {
    let model: GenerativeModel = load_json(path).with_context(|| format!("cannot read model {}", path.display()))?;
    model.validate().with_context(|| format!("invalid model {}", path.display()))?;
    Ok(match seed {
        Some(s) => model.with_seed(s),
        None => model,
    })
}

fn read_dataset(path: &Path, attributes: Option<usize>) -> anyhow::Result<JudgmentDataset> {
    load_dataset(path, attributes).with_context(|| format!("cannot read dataset {}", path.display()))
}

fn read_repeats(path: &Path) -> anyhow::Result<RepeatVector> {
    load_json(path).with_context(|| format!("cannot read repeat vector {}", path.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_report(report: &Report, args: &ReportArgs) -> anyhow::Result<()> {
    if let Some(p) = &args.out {
        let file = fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
        report.write_trials(io::BufWriter::new(file))?;
    }
    let mut summary = Vec::new();
    report.write_summary(&mut summary)?;
    write_text(args.summary.as_deref(), std::str::from_utf8(&summary)?)
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let model = read_model(&args.model, args.seed)?;
    let d = model.num_attributes();
    let counts = match args.repeats.len() {
        1 => vec![args.repeats[0]; d],
        n if n == d => args.repeats,
        n => bail!("--repeats lists {n} counts but the model has {d} attributes"),
    };
    let data = sample_dataset(&model, args.objects, &RepeatVector::new(counts))?;
    save_dataset(&data, &args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

#[derive(serde::Serialize)]
struct SelectionTrace<'a> {
    algorithm: Algorithm,
    budget: f64,
    objective: f64,
    objective_trace: &'a [f64],
}

fn select(args: SelectArgs) -> anyhow::Result<()> {
    let mut train = read_dataset(&args.train, None)?;
    // Extra costs may belong to trailing attributes that have no judgments in the file.
    if let Some(n) = args.costs.as_ref().map(Vec::len).filter(|&n| n > train.num_attributes()) {
        train = read_dataset(&args.train, Some(n))?;
    }
    let costs = args.costs.unwrap_or_else(|| vec![1.0; train.num_attributes()]);
    if costs.len() != train.num_attributes() {
        bail!("--costs lists {} values but the training set has {} attributes", costs.len(), train.num_attributes());
    }
    let est = multiselect::multiselect::prepare_estimates(&train, args.algorithm)?;
    let selection = greedy_select(&est, args.budget, &costs, args.algorithm)?;
    if let Some(p) = &args.trace {
        let trace = SelectionTrace {
            algorithm: args.algorithm,
            budget: args.budget,
            objective: selection.objective,
            objective_trace: &selection.objective_trace,
        };
        write_text(Some(p), &to_json(&trace)?)?;
    }
    write_text(args.out.as_deref(), &to_json(&selection.repeat_vector)?)
}

fn topup(args: TopupArgs) -> anyhow::Result<()> {
    let model = read_model(&args.model, args.seed)?;
    let target = read_repeats(&args.repeats)?;
    let train = read_dataset(&args.train, Some(target.len()))?;
    let data = adjust_training(&train, &model, &target)?;
    save_dataset(&data, &args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

fn fit_cmd(args: FitArgs) -> anyhow::Result<()> {
    let r = read_repeats(&args.repeats)?;
    let train = read_dataset(&args.train, Some(r.len()))?.truncated(&r)?;
    let predictor = fit(&train, &r)?;
    write_text(args.out.as_deref(), &to_json(&predictor)?)
}

fn evaluate_cmd(args: EvaluateArgs) -> anyhow::Result<()> {
    let predictor: LinearPredictor =
        load_json(&args.predictor).with_context(|| format!("cannot read predictor {}", args.predictor.display()))?;
    let r = &predictor.repeat_vector;
    let test = read_dataset(&args.test, Some(r.len()))?.truncated(r)?;
    println!("{}", evaluate(&predictor, &test)?);
    Ok(())
}

fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let config = CompareConfig {
        model: read_model(&args.model, None)?,
        methods: args.methods,
        budgets: args.budgets,
        costs: args.costs,
        k: args.k,
        objects: args.objects,
        split: args.split,
        trials: args.trials,
        seed: args.seed,
        direct_attribute: args.direct_attribute,
    };
    write_report(&run_compare(&config)?, &args.report)
}

fn tradeoff(args: TradeoffArgs) -> anyhow::Result<()> {
    let config = TradeoffConfig {
        model: read_model(&args.model, None)?,
        methods: args.methods,
        budget: args.budget,
        costs: args.costs,
        total_judgments: args.total_judgments,
        ks: args.k,
        test_objects: args.test_objects,
        trials: args.trials,
        seed: args.seed,
    };
    write_report(&run_tradeoff(&config)?, &args.report)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Select(a) => select(a),
        Command::Topup(a) => topup(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(Experiment::Compare(a)) => compare(a),
        Command::Experiment(Experiment::Tradeoff(a)) => tradeoff(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
