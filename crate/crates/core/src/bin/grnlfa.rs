//! Batch experiment runner: train sparse latent-factor models on temporal
//! transaction networks, sweep the decay parameter, compare models, or
//! generate synthetic datasets. Every run leaves a self-describing artifact
//! directory that reproduces the run in deterministic mode.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grnlfa::config::{ExperimentConfig, Mode};
use grnlfa::error::{Error, Result};
use grnlfa::evaluation::{
    compare_models, curves_csv_rows, generate_synthetic, parse_synthetic_spec, prepare,
    results_csv_row, run_record, sweep_theta, RunRecord, CURVES_CSV_HEADER, RESULTS_CSV_HEADER,
};
use grnlfa::factorization::{write_factors, Model};
use grnlfa::regularizer::WeightScheme;
use grnlfa::temporal_graph::{write_network, Delimiter, TrainAggregation, ValueTransform};

#[derive(Parser)]
#[command(
    name = "grnlfa",
    version,
    about = "Sparse latent-factor link prediction on temporal transaction networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its artifact directory.
    Run(RunArgs),
    /// Train the configured model once per decay value in a grid.
    Sweep(RunArgs),
    /// Train several models on the identical data split.
    Compare(RunArgs),
    /// Write a synthetic dataset to a file in the network text format.
    Gen(GenArgs),
}

/// Flags shared by `run`, `sweep`, and `compare`. Every omitted flag falls
/// back to the config file (when given), then to the built-in default, so
/// the resolved values echoed into the artifact are never silent.
#[derive(Args)]
struct RunArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input: edge-list path, network-format path, or `synthetic:` spec.
    #[arg(long)]
    input: Option<String>,
    /// Edge-list field delimiter.
    #[arg(long, value_enum)]
    delimiter: Option<DelimiterArg>,
    /// Edge list starts with a header line.
    #[arg(long)]
    has_header: Option<bool>,
    /// Number of equal-width time slices to bin timestamps into.
    #[arg(long)]
    slices: Option<usize>,
    /// Edge list carries an explicit slice column instead of timestamps.
    #[arg(long)]
    explicit_slices: Option<bool>,
    /// Value transform applied to entries.
    #[arg(long, value_enum)]
    transform: Option<TransformArg>,
    /// How training slices aggregate into the training target.
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
    /// Model to train.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Latent dimension.
    #[arg(long)]
    k: Option<usize>,
    /// Graph regularization strength.
    #[arg(long)]
    alpha: Option<f64>,
    /// Temporal decay parameter in (0, 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Comma-separated decay grid for `sweep`.
    #[arg(long, value_delimiter = ',')]
    theta_grid: Option<Vec<f64>>,
    /// Comma-separated model list for `compare`.
    #[arg(long, value_delimiter = ',', value_enum)]
    models: Option<Vec<ModelArg>>,
    /// Receiver-graph edge weighting scheme.
    #[arg(long, value_enum)]
    weight_scheme: Option<WeightSchemeArg>,
    /// Training round cap.
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Objective-change convergence threshold.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Denominator guard for multiplicative updates.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Seed for factor initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Scale the graph pull by each receiver's observation count.
    #[arg(long)]
    lambda_scaling: Option<bool>,
    /// Zero wall-time columns in CSVs and run sequentially for
    /// byte-identical reruns.
    #[arg(long)]
    deterministic: Option<bool>,
    /// Artifact directory to create.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Synthetic spec, e.g. `synthetic:u=20,s=20,k=3,t=6,density=0.3`.
    #[arg(long, default_value = "synthetic:")]
    input: String,
    /// File to write the dataset to.
    #[arg(long)]
    to: PathBuf,
}

// Thin clap-facing enums; the library enums carry serde attributes and
// validation, these carry the command-line spellings.
#[derive(Clone, Copy, clap::ValueEnum)]
enum DelimiterArg {
    Comma,
    Tab,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TransformArg {
    Identity,
    Log1p,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AggregationArg {
    DecayedSum,
    PlainSum,
    LastSlice,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    NmfDense,
    Nlfa,
    Grnlfa,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WeightSchemeArg {
    CoSenderProduct,
    BinarizedCoOccurrence,
    CosineNormalized,
}

impl From<DelimiterArg> for Delimiter {
    fn from(v: DelimiterArg) -> Self {
        match v {
            DelimiterArg::Comma => Delimiter::Comma,
            DelimiterArg::Tab => Delimiter::Tab,
        }
    }
}

impl From<TransformArg> for ValueTransform {
    fn from(v: TransformArg) -> Self {
        match v {
            TransformArg::Identity => ValueTransform::Identity,
            TransformArg::Log1p => ValueTransform::Log1p,
        }
    }
}

impl From<AggregationArg> for TrainAggregation {
    fn from(v: AggregationArg) -> Self {
        match v {
            AggregationArg::DecayedSum => TrainAggregation::DecayedSum,
            AggregationArg::PlainSum => TrainAggregation::PlainSum,
            AggregationArg::LastSlice => TrainAggregation::LastSlice,
        }
    }
}

impl From<ModelArg> for Model {
    fn from(v: ModelArg) -> Self {
        match v {
            ModelArg::NmfDense => Model::NmfDense,
            ModelArg::Nlfa => Model::Nlfa,
            ModelArg::Grnlfa => Model::Grnlfa,
        }
    }
}

impl From<WeightSchemeArg> for WeightScheme {
    fn from(v: WeightSchemeArg) -> Self {
        match v {
            WeightSchemeArg::CoSenderProduct => WeightScheme::CoSenderProduct,
            WeightSchemeArg::BinarizedCoOccurrence => WeightScheme::BinarizedCoOccurrence,
            WeightSchemeArg::CosineNormalized => WeightScheme::CosineNormalized,
        }
    }
}

/// Overlay order: built-in defaults, then the config file, then explicit
/// flags. The result is fully resolved before validation.
fn resolve_config(args: &RunArgs, mode: Mode) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(vec![format!("cannot read config '{}': {e}", path.display())])
            })?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    config.mode = mode;
    if let Some(v) = &args.input {
        config.input = v.clone();
    }
    if let Some(v) = args.delimiter {
        config.delimiter = v.into();
    }
    if let Some(v) = args.has_header {
        config.has_header = v;
    }
    if let Some(v) = args.slices {
        config.num_slices = Some(v);
    }
    if let Some(v) = args.explicit_slices {
        config.explicit_slices = v;
    }
    if let Some(v) = args.transform {
        config.transform = v.into();
    }
    if let Some(v) = args.aggregation {
        config.aggregation = v.into();
    }
    if let Some(v) = args.model {
        config.model = v.into();
    }
    if let Some(v) = args.k {
        config.k = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.theta {
        config.theta = v;
    }
    if let Some(v) = &args.theta_grid {
        config.theta_grid = Some(v.clone());
    }
    if let Some(v) = &args.models {
        config.models = Some(v.iter().map(|&m| m.into()).collect());
    }
    if let Some(v) = args.weight_scheme {
        config.weight_scheme = v.into();
    }
    if let Some(v) = args.max_epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.tolerance {
        config.tolerance = v;
    }
    if let Some(v) = args.epsilon {
        config.epsilon = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.lambda_scaling {
        config.lambda_scaling = v;
    }
    if let Some(v) = args.deterministic {
        config.deterministic = v;
    }
    if let Some(v) = &args.output {
        config.output = v.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Worker cap from the environment: unset defaults to sequential, 0 means
/// sequential, anything larger allows that many parallel runs (still
/// sequential in deterministic mode).
fn threads_from_env() -> Result<usize> {
    match std::env::var("GRNLFA_THREADS") {
        Ok(raw) => raw.trim().parse::<usize>().map(|n| n.max(1)).map_err(|_| {
            Error::Config(vec![format!("GRNLFA_THREADS must be an integer, got '{raw}'")])
        }),
        Err(_) => Ok(1),
    }
}

fn error_lines(err: &Error) -> String {
    format!("{err}")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => experiment(&args, Mode::Run),
        Command::Sweep(args) => experiment(&args, Mode::Sweep),
        Command::Compare(args) => experiment(&args, Mode::Compare),
        Command::Gen(args) => gen(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", error_lines(&err));
            ExitCode::FAILURE
        }
    }
}

fn gen(args: &GenArgs) -> Result<()> {
    let spec = parse_synthetic_spec(&args.input)?.ok_or_else(|| {
        Error::Config(vec![format!(
            "gen needs a synthetic: spec, got '{}'",
            args.input
        )])
    })?;
    let network = generate_synthetic(&spec)?;
    std::fs::write(&args.to, write_network(&network))?;
    println!(
        "wrote {} slices, {} entries to {}",
        network.num_slices(),
        network.total_entries(),
        args.to.display()
    );
    Ok(())
}

fn experiment(args: &RunArgs, mode: Mode) -> Result<()> {
    let config = resolve_config(args, mode)?;
    let threads = threads_from_env()?;

    // Load before touching the output directory: a bad input leaves no
    // artifact behind.
    prepare(&config)?;

    let dir = config.output.clone();
    std::fs::create_dir_all(&dir)?;
    let echoed = format!(
        "# grnlfa {}\n{}",
        env!("CARGO_PKG_VERSION"),
        config.to_toml()?
    );
    std::fs::write(dir.join("config.toml"), echoed)?;

    match run_and_write(&config, threads, &dir) {
        Ok(()) => Ok(()),
        Err(err) => {
            // Artifacts may be partial; flag the directory so nothing
            // mistakes it for a finished run.
            let _ = std::fs::write(
                dir.join("FAILED"),
                format!("{}\n", error_lines(&err)),
            );
            Err(err)
        }
    }
}

fn run_and_write(config: &ExperimentConfig, threads: usize, dir: &Path) -> Result<()> {
    let records: Vec<RunRecord> = match config.mode {
        Mode::Run => vec![run_record(config)?],
        Mode::Sweep => {
            let grid = config
                .theta_grid
                .clone()
                .expect("validation guarantees a grid in sweep mode");
            sweep_theta(config, &grid, threads)?.records
        }
        Mode::Compare => {
            let models = config
                .models
                .clone()
                .expect("validation guarantees a model list in compare mode");
            compare_models(config, &models, threads)?.records
        }
    };

    let mut results = String::from(RESULTS_CSV_HEADER);
    results.push('\n');
    for record in &records {
        results.push_str(&results_csv_row(record, config.deterministic));
        results.push('\n');
    }
    std::fs::write(dir.join("results.csv"), results)?;

    // One run's curves and factors go into the artifact: the run itself,
    // the best-validation grid point of a sweep, or the first-listed
    // model of a comparison.
    let featured = match config.mode {
        Mode::Sweep => records
            .iter()
            .min_by(|a, b| {
                a.validation
                    .rmse
                    .partial_cmp(&b.validation.rmse)
                    .expect("validation RMSE is never NaN")
            })
            .expect("a sweep has at least one record"),
        _ => &records[0],
    };
    let mut curves = String::from(CURVES_CSV_HEADER);
    curves.push('\n');
    curves.push_str(&curves_csv_rows(&featured.result, config.deterministic));
    std::fs::write(dir.join("curves.csv"), curves)?;
    std::fs::write(
        dir.join("factors.txt"),
        write_factors(&featured.result.factors),
    )?;

    for record in &records {
        println!(
            "model={} rmse_test={:.6} mae_test={:.6} epochs={} time={:.3}",
            record.model,
            record.test.rmse,
            record.test.mae,
            record.result.epochs_run,
            record.result.wall_time_s,
        );
    }
    Ok(())
}
