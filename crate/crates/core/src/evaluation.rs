//! Experiment execution and scoring: metric reports, single runs, theta
//! sweeps, model comparisons, the synthetic dataset generator, and the
//! CSV row formats the CLI writes.

use rayon::prelude::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::factorization::{
    rmse_mae, train, FactorMatrices, Model, TrainConfig, TrainResult,
};
use crate::regularizer::{build_combined, CombinedGraph};
use crate::temporal_graph::{
    build_network, parse_edge_stream, read_network, temporal_split_with, DataSplit, EdgeFormat,
    NodeIndex, Snapshot, SparseKnownSet, TemporalNetwork,
};

/// Prediction quality on one evaluated slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    /// Number of known entries scored.
    pub count: usize,
    /// 1-based index of the slice the entries came from.
    pub slice: usize,
}

/// Score factors against a non-empty known set; `slice` labels where the
/// entries came from.
pub fn score(
    factors: &FactorMatrices,
    eval_set: &SparseKnownSet,
    slice: usize,
) -> Result<MetricReport> {
    let (rmse, mae) = rmse_mae(factors, eval_set)?;
    Ok(MetricReport {
        rmse,
        mae,
        count: eval_set.len(),
        slice,
    })
}

/// One finished training run with everything the results table needs.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub model: Model,
    /// The theta this run used (the one hyperparameter the tables vary).
    pub theta: f64,
    /// Lowest validation RMSE and MAE (their epochs may differ).
    pub validation: MetricReport,
    /// Test-slice metrics from the best-validation-RMSE factors.
    pub test: MetricReport,
    /// 1-based epoch that reached the lowest validation RMSE / MAE.
    pub round_rmse: usize,
    pub round_mae: usize,
    /// Wall-clock seconds from training start to those epochs.
    pub time_to_rmse_s: f64,
    pub time_to_mae_s: f64,
    pub result: TrainResult,
}

/// A theta sweep: one run per grid value, everything else fixed.
#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Name of the swept parameter (always "theta" today).
    pub parameter: &'static str,
    pub records: Vec<RunRecord>,
}

/// A model comparison on one shared split.
#[derive(Clone, Debug)]
pub struct ComparisonResult {
    pub records: Vec<RunRecord>,
    /// Fingerprint of the shared training target, proving every model saw
    /// the same data.
    pub split_checksum: u64,
    pub split_entries: usize,
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Parameters of the planted-structure generator: ground-truth factors
/// with per-slice receiver drift, plus observation noise and sparsity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_senders: usize,
    pub num_receivers: usize,
    pub k_true: usize,
    pub num_slices: usize,
    /// Fraction of pairs observed per slice.
    pub density: f64,
    /// Per-slice uniform drift half-width applied to receiver factors.
    pub drift: f64,
    /// Observation noise half-width.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_senders: 20,
            num_receivers: 20,
            k_true: 3,
            num_slices: 6,
            density: 0.3,
            drift: 0.05,
            noise: 0.01,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_senders < 1 || self.num_receivers < 1 {
            problems.push("synthetic: node counts must be >= 1".to_string());
        }
        if self.k_true < 1 {
            problems.push(format!("synthetic: k must be >= 1, got {}", self.k_true));
        }
        if self.num_slices < 3 {
            problems.push(format!(
                "synthetic: t must be >= 3, got {}",
                self.num_slices
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            problems.push(format!(
                "synthetic: density must be in (0, 1], got {}",
                self.density
            ));
        }
        if !(self.drift >= 0.0 && self.drift.is_finite()) {
            problems.push(format!("synthetic: drift must be >= 0, got {}", self.drift));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            problems.push(format!("synthetic: noise must be >= 0, got {}", self.noise));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Parse a `synthetic:` input spec: comma-separated key=value pairs after
/// the prefix, e.g. `synthetic:u=20,s=20,k=3,t=6,density=0.3`. Returns
/// `None` when the input is not a synthetic spec at all.
pub fn parse_synthetic_spec(input: &str) -> Result<Option<SyntheticSpec>> {
    let Some(rest) = input.strip_prefix("synthetic:") else {
        return Ok(None);
    };
    let mut spec = SyntheticSpec::default();
    let mut problems = Vec::new();
    for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let Some((key, value)) = pair.split_once('=') else {
            problems.push(format!("synthetic: expected key=value, got '{pair}'"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let mut parse_usize = |target: &mut usize| match value.parse() {
            Ok(v) => *target = v,
            Err(_) => problems.push(format!("synthetic: bad integer '{value}' for {key}")),
        };
        match key {
            "u" => parse_usize(&mut spec.num_senders),
            "s" => parse_usize(&mut spec.num_receivers),
            "k" => parse_usize(&mut spec.k_true),
            "t" => parse_usize(&mut spec.num_slices),
            "density" | "drift" | "noise" => match value.parse::<f64>() {
                Ok(v) => match key {
                    "density" => spec.density = v,
                    "drift" => spec.drift = v,
                    _ => spec.noise = v,
                },
                Err(_) => problems.push(format!("synthetic: bad number '{value}' for {key}")),
            },
            "seed" => match value.parse() {
                Ok(v) => spec.seed = v,
                Err(_) => problems.push(format!("synthetic: bad seed '{value}'")),
            },
            other => problems.push(format!("synthetic: unknown key '{other}'")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    spec.validate()?;
    Ok(Some(spec))
}

/// Generate a temporal network with planted low-rank structure: fixed
/// sender factors, receiver factors drifting a little each slice, sparse
/// noisy observations of their products. Deterministic given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TemporalNetwork> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = spec.num_senders;
    let s = spec.num_receivers;
    let k = spec.k_true;

    let x_true: Vec<f64> = (0..u * k).map(|_| rng.random::<f64>()).collect();
    let mut y_true: Vec<f64> = (0..s * k).map(|_| rng.random::<f64>()).collect();

    let mut snapshots = Vec::with_capacity(spec.num_slices);
    for t in 1..=spec.num_slices {
        if t > 1 {
            for y in y_true.iter_mut() {
                let step = spec.drift * (2.0 * rng.random::<f64>() - 1.0);
                *y = (*y + step).max(0.0);
            }
        }
        let mut triples = Vec::new();
        for i in 0..u {
            for j in 0..s {
                if rng.random::<f64>() >= spec.density {
                    continue;
                }
                let mut value: f64 = (0..k)
                    .map(|kk| x_true[i * k + kk] * y_true[j * k + kk])
                    .sum();
                if spec.noise > 0.0 {
                    value += spec.noise * (2.0 * rng.random::<f64>() - 1.0);
                }
                triples.push((i, j, value.max(0.0)));
            }
        }
        snapshots.push(Snapshot {
            t,
            known: SparseKnownSet::from_triples(u, s, triples)?,
        });
    }
    TemporalNetwork::new(snapshots, NodeIndex::anonymous(u, s))
}

// ---------------------------------------------------------------------------
// Experiment plumbing
// ---------------------------------------------------------------------------

/// Load the configured input into a temporal network, applying the value
/// transform. Handles `synthetic:` specs, canonical network files, and
/// delimited edge lists (which need a slicing policy).
pub fn load_network(config: &ExperimentConfig) -> Result<TemporalNetwork> {
    if let Some(spec) = parse_synthetic_spec(&config.input)? {
        let raw = generate_synthetic(&spec)?;
        return Ok(raw.map_values(|v| config.transform.apply(v)));
    }
    let text = std::fs::read_to_string(&config.input).map_err(|e| {
        Error::Config(vec![format!("cannot read input '{}': {e}", config.input)])
    })?;
    if text.starts_with("grnlfa-net v1") {
        let raw = read_network(&text)?;
        return Ok(raw.map_values(|v| config.transform.apply(v)));
    }
    let slicing = config.slicing().ok_or_else(|| {
        Error::Config(vec![
            "edge-list inputs need either num-slices or explicit-slices".into(),
        ])
    })?;
    let format = EdgeFormat {
        delimiter: config.delimiter,
        has_header: config.has_header,
        explicit_slice: config.explicit_slices,
    };
    let edges = parse_edge_stream(text.lines(), format)?;
    build_network(&edges, slicing, config.transform)
}

/// Everything shared between the runs of one experiment: the network,
/// the split, and (when the model wants it) the combined receiver graph.
pub struct PreparedExperiment {
    pub network: TemporalNetwork,
    pub split: DataSplit,
}

/// Load and split once. Sweeps rebuild per theta (the decayed training
/// target depends on it); comparisons share this object across models.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment> {
    config.validate()?;
    let network = load_network(config)?;
    let split = temporal_split_with(&network, config.theta, config.aggregation)?;
    Ok(PreparedExperiment { network, split })
}

fn graph_for_model(
    config: &ExperimentConfig,
    model: Model,
    split: &DataSplit,
) -> Result<Option<CombinedGraph>> {
    if model == Model::Grnlfa && config.alpha > 0.0 {
        Ok(Some(build_combined(
            &split.train_slices,
            config.weight_scheme,
            config.theta,
            config.alpha,
        )?))
    } else {
        Ok(None)
    }
}

/// Train one model on a prepared split and collect the record the result
/// tables want. Test metrics come from the best-validation-RMSE factors,
/// scored once.
fn run_on_split(
    config: &ExperimentConfig,
    model: Model,
    prepared: &PreparedExperiment,
) -> Result<RunRecord> {
    let split = &prepared.split;
    let graph = graph_for_model(config, model, split)?;
    let train_config = TrainConfig {
        model,
        ..config.train_config()
    };
    let result = train(&train_config, split, graph.as_ref())?;

    let t_total = prepared.network.num_slices();
    let validation = MetricReport {
        rmse: result.best_rmse.value,
        mae: result.best_mae.value,
        count: split.validation_slice.known.len(),
        slice: t_total - 1,
    };
    let test = if split.test_slice.known.is_empty() {
        // A test slice with no entries yields no test metrics; surface
        // NaN rather than failing the whole run.
        MetricReport {
            rmse: f64::NAN,
            mae: f64::NAN,
            count: 0,
            slice: t_total,
        }
    } else {
        score(&result.best_rmse.factors, &split.test_slice.known, t_total)?
    };

    Ok(RunRecord {
        model,
        theta: config.theta,
        validation,
        test,
        round_rmse: result.best_rmse.epoch,
        round_mae: result.best_mae.epoch,
        time_to_rmse_s: result.best_rmse.elapsed_s,
        time_to_mae_s: result.best_mae.elapsed_s,
        result,
    })
}

/// Run the configured experiment once: load, split, train, score.
pub fn run_record(config: &ExperimentConfig) -> Result<RunRecord> {
    let prepared = prepare(config)?;
    run_on_split(config, config.model, &prepared)
}

/// Single-run entry point: the training result plus validation-best and
/// test metric reports.
pub fn run_experiment(
    config: &ExperimentConfig,
) -> Result<(TrainResult, MetricReport, MetricReport)> {
    let record = run_record(config)?;
    Ok((record.result.clone(), record.validation, record.test))
}

/// Run a full experiment per theta value, everything else fixed. With
/// `threads > 1` and deterministic mode off, grid points run in parallel.
pub fn sweep_theta(
    config: &ExperimentConfig,
    grid: &[f64],
    threads: usize,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::config("theta sweep needs a non-empty grid"));
    }
    for &theta in grid {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::config(format!(
                "theta-grid value {theta} outside (0, 1]"
            )));
        }
    }
    let run_one = |&theta: &f64| -> Result<RunRecord> {
        let point = ExperimentConfig {
            theta,
            theta_grid: None,
            mode: crate::config::Mode::Run,
            ..config.clone()
        };
        let prepared = prepare(&point)?;
        run_on_split(&point, point.model, &prepared)
    };
    let records = maybe_parallel(grid, config.deterministic, threads, run_one)?;
    Ok(SweepResult {
        parameter: "theta",
        records,
    })
}

/// Train every listed model on the identical split and record one summary
/// row per model: lowest validation RMSE/MAE, the epochs ("rounds") that
/// reached them, and the wall time to each.
pub fn compare_models(
    config: &ExperimentConfig,
    models: &[Model],
    threads: usize,
) -> Result<ComparisonResult> {
    if models.len() < 2 {
        return Err(Error::config(format!(
            "comparison needs at least 2 models, got {}",
            models.len()
        )));
    }
    let base = ExperimentConfig {
        mode: crate::config::Mode::Run,
        models: None,
        ..config.clone()
    };
    let prepared = prepare(&base)?;
    let records = maybe_parallel(models, config.deterministic, threads, |&model| {
        run_on_split(&base, model, &prepared)
    })?;
    Ok(ComparisonResult {
        records,
        split_checksum: prepared.split.train_target.checksum(),
        split_entries: prepared.split.train_target.len(),
    })
}

/// Map runs over items, in parallel only when allowed; order of results
/// always matches input order.
fn maybe_parallel<T: Sync, R: Send>(
    items: &[T],
    deterministic: bool,
    threads: usize,
    run: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    if deterministic || threads <= 1 {
        items.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| items.par_iter().map(run).collect())
    }
}

// ---------------------------------------------------------------------------
// CSV rendering
// ---------------------------------------------------------------------------

/// Header of the results table.
pub const RESULTS_CSV_HEADER: &str =
    "model,param,value,rmse_val,mae_val,rmse_test,mae_test,round_rmse,round_mae,time_to_rmse_s,time_to_mae_s";

/// Header of the per-epoch training curve table.
pub const CURVES_CSV_HEADER: &str = "epoch,objective,rmse_val,mae_val,epoch_time_s";

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn fmt_time(v: f64, deterministic: bool) -> String {
    if deterministic {
        "0.000000".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// One results-table row. In deterministic mode the wall-time columns are
/// written as zero so reruns are byte-identical.
pub fn results_csv_row(record: &RunRecord, deterministic: bool) -> String {
    format!(
        "{},theta,{},{},{},{},{},{},{},{},{}",
        record.model,
        fmt_metric(record.theta),
        fmt_metric(record.validation.rmse),
        fmt_metric(record.validation.mae),
        fmt_metric(record.test.rmse),
        fmt_metric(record.test.mae),
        record.round_rmse,
        record.round_mae,
        fmt_time(record.time_to_rmse_s, deterministic),
        fmt_time(record.time_to_mae_s, deterministic),
    )
}

/// The per-epoch curve rows for one run (no header).
pub fn curves_csv_rows(result: &TrainResult, deterministic: bool) -> String {
    let mut out = String::new();
    use std::fmt::Write as _;
    for epoch in 0..result.epochs_run {
        let (rmse, mae) = result.validation_trace[epoch];
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            epoch + 1,
            fmt_metric(result.objective_trace[epoch]),
            fmt_metric(rmse),
            fmt_metric(mae),
            fmt_time(result.epoch_times[epoch], deterministic),
        );
    }
    out
}
