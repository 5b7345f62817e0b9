//! Latent factor training: sparse multiplicative updates (with and
//! without the receiver-graph smoothness terms), a dense NMF baseline,
//! objective evaluation, convergence control, and stationarity checks.
//!
//! All three models factor the training matrix as R ≈ X·Yᵀ with
//! non-negative X (senders × K) and Y (receivers × K). The sparse models
//! touch only the known entries Λ; the dense baseline treats unknown
//! cells as zeros and pays for the full matrix.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizer::CombinedGraph;
use crate::temporal_graph::{DataSplit, SparseKnownSet};

/// Non-negative sender and receiver factor matrices.
///
/// `x` is senders × K, `y` is receivers × K; the model's prediction for a
/// pair is the inner product of the corresponding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMatrices {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl FactorMatrices {
    pub fn num_senders(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_receivers(&self) -> usize {
        self.y.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// Predicted value for the (i, j) pair.
    pub fn predict_entry(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.num_senders() || j >= self.num_receivers() {
            return Err(Error::IndexOutOfRange(format!(
                "pair ({i}, {j}) outside {}x{}",
                self.num_senders(),
                self.num_receivers()
            )));
        }
        Ok(self.dot(i, j))
    }

    #[inline]
    fn dot(&self, i: usize, j: usize) -> f64 {
        let xi = self.x.row(i);
        let yj = self.y.row(j);
        xi.iter().zip(yj.iter()).map(|(a, b)| a * b).sum()
    }

    /// True when every entry is finite and >= 0.
    pub fn is_nonnegative(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|&v| v.is_finite() && v >= 0.0)
    }
}

/// Draw strictly positive starting factors, i.i.d. uniform on (0, 0.01].
/// Multiplicative updates can never leave an exact zero, so the lower end
/// of the range is open. Deterministic given the seed; X is drawn before
/// Y, both row-major.
pub fn init_factors(
    num_senders: usize,
    num_receivers: usize,
    k: usize,
    seed: u64,
) -> FactorMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Array2<f64> {
        let data: Vec<f64> = (0..n * k)
            .map(|_| 0.01 * (1.0 - rng.random::<f64>()))
            .collect();
        Array2::from_shape_vec((n, k), data).expect("shape matches data length")
    };
    let x = draw(num_senders);
    let y = draw(num_receivers);
    FactorMatrices { x, y }
}

// ---------------------------------------------------------------------------
// Objectives and metrics
// ---------------------------------------------------------------------------

/// Sum of squared residuals over the known entries only.
pub fn objective_nlfa(factors: &FactorMatrices, train: &SparseKnownSet) -> f64 {
    let k = factors.k();
    let x_cow = flat(&factors.x);
    let y_cow = flat(&factors.y);
    let x = x_cow.as_slice().expect("standard layout");
    let y = y_cow.as_slice().expect("standard layout");
    let mut total = 0.0;
    for e in train.iter() {
        let xi = &x[e.sender * k..(e.sender + 1) * k];
        let yj = &y[e.receiver * k..(e.receiver + 1) * k];
        let rhat: f64 = xi.iter().zip(yj).map(|(a, b)| a * b).sum();
        let d = e.value - rhat;
        total += d * d;
    }
    total
}

/// Known-entry squared error plus the receiver-graph smoothness penalty.
pub fn objective_grnlfa(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    graph: &CombinedGraph,
) -> Result<f64> {
    Ok(objective_nlfa(factors, train) + graph.regularizer_value(&factors.y)?)
}

/// Squared Frobenius distance between the zero-filled dense matrix and
/// the full reconstruction X·Yᵀ — the dense baseline's training loss.
pub fn objective_dense(factors: &FactorMatrices, r_full: &Array2<f64>) -> f64 {
    let recon = factors.x.dot(&factors.y.t());
    r_full
        .iter()
        .zip(recon.iter())
        .map(|(r, p)| (r - p) * (r - p))
        .sum()
}

/// RMSE and MAE of the predictions over a non-empty known set.
pub fn rmse_mae(factors: &FactorMatrices, eval_set: &SparseKnownSet) -> Result<(f64, f64)> {
    if eval_set.is_empty() {
        return Err(Error::EmptySet(
            "cannot score an empty evaluation set".into(),
        ));
    }
    if eval_set.num_senders() > factors.num_senders()
        || eval_set.num_receivers() > factors.num_receivers()
    {
        return Err(Error::Dimension(format!(
            "evaluation set is {}x{}, factors are {}x{}",
            eval_set.num_senders(),
            eval_set.num_receivers(),
            factors.num_senders(),
            factors.num_receivers()
        )));
    }
    let k = factors.k();
    let x_cow = flat(&factors.x);
    let y_cow = flat(&factors.y);
    let x = x_cow.as_slice().expect("standard layout");
    let y = y_cow.as_slice().expect("standard layout");
    let mut sq = 0.0;
    let mut abs = 0.0;
    for e in eval_set.iter() {
        let xi = &x[e.sender * k..(e.sender + 1) * k];
        let yj = &y[e.receiver * k..(e.receiver + 1) * k];
        let rhat: f64 = xi.iter().zip(yj).map(|(a, b)| a * b).sum();
        let d = e.value - rhat;
        sq += d * d;
        abs += d.abs();
    }
    let n = eval_set.len() as f64;
    Ok(((sq / n).sqrt(), abs / n))
}

// ---------------------------------------------------------------------------
// Epoch updates
// ---------------------------------------------------------------------------

/// Contiguous row-major view of a factor matrix. Owned factors are
/// already standard layout; anything else is normalized into the cow.
fn flat(matrix: &Array2<f64>) -> ndarray::CowArray<'_, f64, ndarray::Ix2> {
    matrix.as_standard_layout()
}

/// One X phase of the sparse multiplicative update: every x_{ik} is
/// rescaled by the ratio of evidence sums over that sender's known
/// entries, with predictions taken from the pre-update X. Senders without
/// known entries keep their rows.
pub fn slf_nmu_x_phase(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    epsilon: f64,
) -> Array2<f64> {
    let k = factors.k();
    let x_cow = flat(&factors.x);
    let y_cow = flat(&factors.y);
    let x = x_cow.as_slice().expect("standard layout");
    let y = y_cow.as_slice().expect("standard layout");
    let mut new_x = x_cow.to_owned();
    let out = new_x.as_slice_mut().expect("standard layout");
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for i in 0..factors.num_senders() {
        let entries = train.row(i);
        if entries.is_empty() {
            continue;
        }
        num.fill(0.0);
        den.fill(0.0);
        let xi = &x[i * k..(i + 1) * k];
        for e in entries {
            let yj = &y[e.receiver * k..(e.receiver + 1) * k];
            let rhat: f64 = xi.iter().zip(yj).map(|(a, b)| a * b).sum();
            for ((n, d), &yv) in num.iter_mut().zip(den.iter_mut()).zip(yj) {
                *n += yv * e.value;
                *d += yv * rhat;
            }
        }
        for (kk, (o, &xv)) in out[i * k..(i + 1) * k].iter_mut().zip(xi).enumerate() {
            *o = xv * num[kk] / (den[kk] + epsilon);
        }
    }
    new_x
}

/// One Y phase of the plain sparse update, mirroring the X phase down the
/// receiver columns. `factors.x` is read as-is, so callers choose whether
/// it is the pre- or post-update X.
pub fn slf_nmu_y_phase(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    epsilon: f64,
) -> Array2<f64> {
    slf_y_phase(factors, train, None, epsilon, false)
}

/// One Y phase of the graph-regularized update: the numerator gains the
/// neighbor-attraction term and the denominator the degree term, both
/// scaled by alpha and (optionally) the receiver's known-entry count.
/// All neighbor values are read from the pre-update Y (Jacobi within the
/// phase). Receivers without known entries keep their rows.
pub fn slf_nmgru_y_phase(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    graph: &CombinedGraph,
    epsilon: f64,
    lambda_scaling: bool,
) -> Array2<f64> {
    if graph.alpha() > 0.0 {
        let sums = graph
            .neighbor_sums(&factors.y)
            .expect("graph and factors agree on receiver count");
        slf_y_phase(factors, train, Some((graph, &sums)), epsilon, lambda_scaling)
    } else {
        slf_y_phase(factors, train, None, epsilon, lambda_scaling)
    }
}

/// Y phase over an optional graph term; `graph` pairs the combined graph
/// with its neighbor sums W̄·Y at the pre-update Y, so callers that
/// already hold the sums (the training loop evaluates the objective from
/// them) do not pay a second gather.
fn slf_y_phase(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    graph: Option<(&CombinedGraph, &Array2<f64>)>,
    epsilon: f64,
    lambda_scaling: bool,
) -> Array2<f64> {
    let k = factors.k();
    let x_cow = flat(&factors.x);
    let y_cow = flat(&factors.y);
    let x = x_cow.as_slice().expect("standard layout");
    let y = y_cow.as_slice().expect("standard layout");
    let mut new_y = y_cow.to_owned();
    let out = new_y.as_slice_mut().expect("standard layout");
    let sums_flat = graph.map(|(_, sums)| {
        debug_assert_eq!(sums.dim(), factors.y.dim());
        sums.as_slice().expect("standard layout")
    });
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for j in 0..factors.num_receivers() {
        let col_len = train.col_len(j);
        if col_len == 0 {
            continue;
        }
        num.fill(0.0);
        den.fill(0.0);
        let yj = &y[j * k..(j + 1) * k];
        for e in train.col(j) {
            let xi = &x[e.sender * k..(e.sender + 1) * k];
            let rhat: f64 = xi.iter().zip(yj).map(|(a, b)| a * b).sum();
            for ((n, d), &xv) in num.iter_mut().zip(den.iter_mut()).zip(xi) {
                *n += xv * e.value;
                *d += xv * rhat;
            }
        }
        if let (Some((graph, _)), Some(sums)) = (graph, sums_flat) {
            let scale = if lambda_scaling { col_len as f64 } else { 1.0 };
            let a = graph.alpha() * scale;
            if a > 0.0 {
                let sj = &sums[j * k..(j + 1) * k];
                let degree = graph.degree(j);
                for (kk, &sv) in sj.iter().enumerate() {
                    num[kk] += a * sv;
                    den[kk] += a * degree * yj[kk];
                }
            }
        }
        for (kk, (o, &yv)) in out[j * k..(j + 1) * k].iter_mut().zip(yj).enumerate() {
            *o = yv * num[kk] / (den[kk] + epsilon);
        }
    }
    new_y
}

/// One full epoch of the plain sparse update: all of X with the pre-update
/// X, then all of Y with the post-update X.
pub fn slf_nmu_epoch(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    epsilon: f64,
) -> FactorMatrices {
    let x = slf_nmu_x_phase(factors, train, epsilon);
    let staged = FactorMatrices {
        x,
        y: factors.y.clone(),
    };
    let y = slf_nmu_y_phase(&staged, train, epsilon);
    FactorMatrices { x: staged.x, y }
}

/// One full epoch of the graph-regularized update. The X phase is
/// identical to the plain rule; the Y phase adds the graph terms.
pub fn slf_nmgru_epoch(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    graph: &CombinedGraph,
    epsilon: f64,
    lambda_scaling: bool,
) -> FactorMatrices {
    let x = slf_nmu_x_phase(factors, train, epsilon);
    let staged = FactorMatrices {
        x,
        y: factors.y.clone(),
    };
    let y = slf_nmgru_y_phase(&staged, train, graph, epsilon, lambda_scaling);
    FactorMatrices { x: staged.x, y }
}

/// One epoch of the dense baseline: Lee–Seung multiplicative updates for
/// Frobenius NMF on the zero-filled matrix, X first (pre-update X in its
/// own ratio), then Y against the post-update X.
pub fn nmf_dense_epoch(
    factors: &FactorMatrices,
    r_full: &Array2<f64>,
    epsilon: f64,
) -> Result<FactorMatrices> {
    let (u, s) = r_full.dim();
    if factors.num_senders() != u || factors.num_receivers() != s {
        return Err(Error::Dimension(format!(
            "dense matrix is {u}x{s}, factors are {}x{}",
            factors.num_senders(),
            factors.num_receivers()
        )));
    }
    // X <- X * (R Y) / (X (Y'Y) + eps)
    let ry = r_full.dot(&factors.y);
    let yty = factors.y.t().dot(&factors.y);
    let xyty = factors.x.dot(&yty);
    let mut x = factors.x.clone();
    for (xv, (n, d)) in x.iter_mut().zip(ry.iter().zip(xyty.iter())) {
        *xv *= n / (d + epsilon);
    }
    // Y <- Y * (R' X_new) / (Y (X_new' X_new) + eps)
    let rtx = r_full.t().dot(&x);
    let xtx = x.t().dot(&x);
    let yxtx = factors.y.dot(&xtx);
    let mut y = factors.y.clone();
    for (yv, (n, d)) in y.iter_mut().zip(rtx.iter().zip(yxtx.iter())) {
        *yv *= n / (d + epsilon);
    }
    Ok(FactorMatrices { x, y })
}

/// Zero-filled dense copy of a sparse known set, for the dense baseline.
pub fn densify(known: &SparseKnownSet) -> Array2<f64> {
    let mut full = Array2::zeros((known.num_senders(), known.num_receivers()));
    for e in known.iter() {
        full[[e.sender, e.receiver]] = e.value;
    }
    full
}

// ---------------------------------------------------------------------------
// Derivative checks
// ---------------------------------------------------------------------------

/// Gradient of the graph-regularized objective with respect to Y: for
/// each (j, k),
///   2 Σ_{i∈Λ(j)} x_{ik} (r̂_{ij} − r_{ij}) + 4 α Σ_l w̄_{jl} (y_{jk} − y_{lk}).
/// The graph coefficient is 4α because the penalty counts every unordered
/// pair twice and each pair touches y_{jk} through both of its sides;
/// this is the exact derivative of the implemented objective, verified by
/// finite differences. With `graph` absent only the data term remains.
pub fn grad_y_analytic(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    graph: Option<&CombinedGraph>,
) -> Array2<f64> {
    let k = factors.k();
    let s = factors.num_receivers();
    let mut grad = Array2::zeros((s, k));
    for j in 0..s {
        for e in train.col(j) {
            let residual = factors.dot(e.sender, j) - e.value;
            for kk in 0..k {
                grad[[j, kk]] += 2.0 * factors.x[[e.sender, kk]] * residual;
            }
        }
        if let Some(graph) = graph {
            let alpha = graph.alpha();
            if alpha > 0.0 {
                for &(l, w) in graph.neighbors(j) {
                    for kk in 0..k {
                        grad[[j, kk]] +=
                            4.0 * alpha * w * (factors.y[[j, kk]] - factors.y[[l, kk]]);
                    }
                }
            }
        }
    }
    grad
}

/// Stationarity residual of the multiplicative Y update: for each (j, k),
///   y_{jk} · [Σ_{i∈Λ(j)} (r̂_{ij} − r_{ij}) x_{ik} + α s_j Σ_l w̄_{jl} (y_{jk} − y_{lk})]
/// with s_j = |Λ(j)| under lambda scaling, else 1. This is exactly the
/// quantity the update drives to zero at its fixed point, so it measures
/// how converged a trained Y is. Receivers without known entries are
/// frozen by the update and report zero.
pub fn kkt_residual_y(
    factors: &FactorMatrices,
    train: &SparseKnownSet,
    graph: &CombinedGraph,
    lambda_scaling: bool,
) -> Array2<f64> {
    let k = factors.k();
    let s = factors.num_receivers();
    let mut residual = Array2::zeros((s, k));
    for j in 0..s {
        let col_len = train.col_len(j);
        if col_len == 0 {
            continue;
        }
        let scale = if lambda_scaling { col_len as f64 } else { 1.0 };
        let a = graph.alpha() * scale;
        for kk in 0..k {
            let mut inner = 0.0;
            for e in train.col(j) {
                inner += (factors.dot(e.sender, j) - e.value) * factors.x[[e.sender, kk]];
            }
            if a > 0.0 {
                for &(l, w) in graph.neighbors(j) {
                    inner += a * w * (factors.y[[j, kk]] - factors.y[[l, kk]]);
                }
            }
            residual[[j, kk]] = factors.y[[j, kk]] * inner;
        }
    }
    residual
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Which factorization rule a training run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Dense Lee–Seung NMF on the zero-filled matrix.
    NmfDense,
    /// Sparse multiplicative update over known entries only.
    Nlfa,
    /// Sparse update with the receiver-graph smoothness terms.
    #[default]
    Grnlfa,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::NmfDense => "nmf-dense",
            Model::Nlfa => "nlfa",
            Model::Grnlfa => "grnlfa",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmf-dense" => Ok(Model::NmfDense),
            "nlfa" => Ok(Model::Nlfa),
            "grnlfa" => Ok(Model::Grnlfa),
            other => Err(Error::UnknownModel(format!(
                "'{other}' (expected nmf-dense, nlfa, or grnlfa)"
            ))),
        }
    }
}

/// Hyperparameters for one training run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: Model,
    pub k: usize,
    pub alpha: f64,
    pub theta: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub lambda_scaling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: Model::Grnlfa,
            k: 20,
            alpha: 0.01,
            theta: 0.5,
            max_epochs: 1000,
            tolerance: 1e-5,
            seed: 42,
            epsilon: 1e-8,
            lambda_scaling: true,
        }
    }
}

impl TrainConfig {
    /// Check every parameter range, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k < 1 {
            problems.push(format!("k must be >= 1, got {}", self.k));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            problems.push(format!("theta must be in (0, 1], got {}", self.theta));
        }
        if self.max_epochs < 1 {
            problems.push(format!("max_epochs must be >= 1, got {}", self.max_epochs));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            problems.push(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            problems.push(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Why a training run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::MaxEpochs => "max-epochs",
        })
    }
}

/// The stopping protocol: converge when consecutive objectives differ by
/// less than the tolerance, otherwise cap at the epoch budget. Convergence
/// is checked first, so a run that converges on its final allowed epoch
/// reports `Converged`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl StopRule {
    /// Decide after finishing 1-based epoch `epoch`, where `previous` is
    /// the objective before the epoch (the initial objective for epoch 1)
    /// and `current` the objective after it.
    pub fn decide(&self, previous: f64, current: f64, epoch: usize) -> Option<StopReason> {
        if (current - previous).abs() < self.tolerance {
            Some(StopReason::Converged)
        } else if epoch >= self.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        }
    }

    /// Run the rule over a whole objective trace (first element = initial
    /// objective, before any epoch); returns (epochs_run, reason).
    pub fn apply_to_trace(&self, objectives: &[f64]) -> Option<(usize, StopReason)> {
        for (epoch, pair) in objectives.windows(2).enumerate() {
            if let Some(reason) = self.decide(pair[0], pair[1], epoch + 1) {
                return Some((epoch + 1, reason));
            }
        }
        None
    }
}

/// The factors at a best-so-far validation epoch.
#[derive(Clone, Debug)]
pub struct BestEpoch {
    /// 1-based epoch at which the best value was first reached.
    pub epoch: usize,
    /// The metric value (validation RMSE or MAE).
    pub value: f64,
    pub factors: FactorMatrices,
    /// Wall-clock seconds from training start to the end of that epoch.
    pub elapsed_s: f64,
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainResult {
    /// Factors from the final epoch (not necessarily the best ones).
    pub factors: FactorMatrices,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    /// Objective of the initial factors, before any epoch.
    pub initial_objective: f64,
    /// Training objective after each epoch; length = epochs_run.
    pub objective_trace: Vec<f64>,
    /// Validation (rmse, mae) after each epoch; length = epochs_run.
    pub validation_trace: Vec<(f64, f64)>,
    /// Duration of each epoch in seconds; length = epochs_run.
    pub epoch_times: Vec<f64>,
    /// Total wall-clock seconds for the loop.
    pub wall_time_s: f64,
    /// Snapshot at the lowest validation RMSE.
    pub best_rmse: BestEpoch,
    /// Snapshot at the lowest validation MAE.
    pub best_mae: BestEpoch,
}

/// Train the configured model on a split. The graph must be supplied
/// exactly when the model has graph terms to apply (grnlfa with α > 0)
/// and its α must agree with the config. Validation is scored after
/// every epoch; the best-RMSE and best-MAE factor snapshots are kept
/// separately from the final factors.
pub fn train(
    config: &TrainConfig,
    split: &DataSplit,
    graph: Option<&CombinedGraph>,
) -> Result<TrainResult> {
    config.validate()?;
    let train_set = &split.train_target;
    if train_set.is_empty() {
        return Err(Error::EmptySet("training target has no known entries".into()));
    }
    if split.validation_slice.known.is_empty() {
        return Err(Error::EmptySet(
            "validation slice has no known entries".into(),
        ));
    }
    match (config.model, graph) {
        (Model::Grnlfa, Some(g)) => {
            if g.num_receivers() != train_set.num_receivers() {
                return Err(Error::Dimension(format!(
                    "graph covers {} receivers, training matrix has {}",
                    g.num_receivers(),
                    train_set.num_receivers()
                )));
            }
            if g.alpha() != config.alpha {
                return Err(Error::config(format!(
                    "graph was combined with alpha {}, config says {}",
                    g.alpha(),
                    config.alpha
                )));
            }
        }
        (Model::Grnlfa, None) => {
            if config.alpha > 0.0 {
                return Err(Error::config(
                    "grnlfa with alpha > 0 needs the combined receiver graph",
                ));
            }
        }
        (Model::Nlfa | Model::NmfDense, Some(_)) => {
            return Err(Error::config(format!(
                "model {} does not take a receiver graph",
                config.model
            )));
        }
        (Model::Nlfa | Model::NmfDense, None) => {}
    }

    let mut factors = init_factors(
        train_set.num_senders(),
        train_set.num_receivers(),
        config.k,
        config.seed,
    );
    let r_full = match config.model {
        Model::NmfDense => Some(densify(train_set)),
        _ => None,
    };
    // The graph is gathered once per epoch: the same neighbor sums feed
    // the Y-phase update terms and the objective's smoothness penalty.
    let streaming_graph = match (config.model, graph) {
        (Model::Grnlfa, Some(g)) if g.alpha() > 0.0 => Some(g),
        _ => None,
    };
    let mut sums = match streaming_graph {
        Some(g) => Some(g.neighbor_sums(&factors.y)?),
        None => None,
    };

    let objective = |f: &FactorMatrices, sums: Option<&Array2<f64>>| -> Result<f64> {
        match (config.model, graph, &r_full) {
            (Model::NmfDense, _, Some(r)) => Ok(objective_dense(f, r)),
            (Model::Grnlfa, Some(g), _) => match sums {
                Some(s) => Ok(objective_nlfa(f, train_set) + g.penalty_with_sums(&f.y, s)?),
                None => objective_grnlfa(f, train_set, g),
            },
            _ => Ok(objective_nlfa(f, train_set)),
        }
    };

    let stop = StopRule {
        tolerance: config.tolerance,
        max_epochs: config.max_epochs,
    };
    let started = Instant::now();
    let initial_objective = objective(&factors, sums.as_ref())?;
    let mut previous = initial_objective;

    let mut objective_trace = Vec::new();
    let mut validation_trace = Vec::new();
    let mut epoch_times = Vec::new();
    let mut best_rmse: Option<BestEpoch> = None;
    let mut best_mae: Option<BestEpoch> = None;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let epoch_started = Instant::now();
        factors = match (streaming_graph, &r_full) {
            (Some(g), _) => {
                let x = slf_nmu_x_phase(&factors, train_set, config.epsilon);
                let staged = FactorMatrices {
                    x,
                    y: factors.y.clone(),
                };
                let y = slf_y_phase(
                    &staged,
                    train_set,
                    Some((g, sums.as_ref().expect("sums follow the graph"))),
                    config.epsilon,
                    config.lambda_scaling,
                );
                FactorMatrices { x: staged.x, y }
            }
            (None, Some(r)) if config.model == Model::NmfDense => {
                nmf_dense_epoch(&factors, r, config.epsilon)?
            }
            _ => slf_nmu_epoch(&factors, train_set, config.epsilon),
        };
        if let Some(g) = streaming_graph {
            sums = Some(g.neighbor_sums(&factors.y)?);
        }
        let current = objective(&factors, sums.as_ref())?;
        let (rmse, mae) = rmse_mae(&factors, &split.validation_slice.known)?;
        epoch_times.push(epoch_started.elapsed().as_secs_f64());
        objective_trace.push(current);
        validation_trace.push((rmse, mae));

        let elapsed_s = started.elapsed().as_secs_f64();
        if best_rmse.as_ref().is_none_or(|b| rmse < b.value) {
            best_rmse = Some(BestEpoch {
                epoch,
                value: rmse,
                factors: factors.clone(),
                elapsed_s,
            });
        }
        if best_mae.as_ref().is_none_or(|b| mae < b.value) {
            best_mae = Some(BestEpoch {
                epoch,
                value: mae,
                factors: factors.clone(),
                elapsed_s,
            });
        }

        if let Some(reason) = stop.decide(previous, current, epoch) {
            stop_reason = reason;
            break;
        }
        previous = current;
    }

    Ok(TrainResult {
        factors,
        epochs_run: objective_trace.len(),
        stop_reason,
        initial_objective,
        objective_trace,
        validation_trace,
        epoch_times,
        wall_time_s: started.elapsed().as_secs_f64(),
        best_rmse: best_rmse.expect("at least one epoch ran"),
        best_mae: best_mae.expect("at least one epoch ran"),
    })
}

// ---------------------------------------------------------------------------
// Factor matrix serialization
// ---------------------------------------------------------------------------

/// Render factors as text: a `grnlfa-factors v1 U=.. S=.. K=..` header,
/// then one space-separated row per sender (X block) followed by one per
/// receiver (Y block).
pub fn write_factors(factors: &FactorMatrices) -> String {
    let mut out = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(
        out,
        "grnlfa-factors v1 U={} S={} K={}",
        factors.num_senders(),
        factors.num_receivers(),
        factors.k()
    );
    for block in [&factors.x, &factors.y] {
        for row in block.rows() {
            let rendered: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", rendered.join(" "));
        }
    }
    out
}

/// Parse the factor dump back; exact round trip of every value.
pub fn read_factors(text: &str) -> Result<FactorMatrices> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty factor file".into()))?;
    let mut tokens = header.split_whitespace();
    match (tokens.next(), tokens.next()) {
        (Some("grnlfa-factors"), Some("v1")) => {}
        _ => {
            return Err(Error::Format(format!(
                "expected 'grnlfa-factors v1' header, got '{header}'"
            )))
        }
    }
    let mut field = |key: &str| -> Result<usize> {
        let token = tokens
            .next()
            .ok_or_else(|| Error::Format(format!("header missing {key}= field")))?;
        token
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| Error::Format(format!("expected {key}=<n>, got '{token}'")))?
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad {key} value in '{token}'")))
    };
    let u = field("U")?;
    let s = field("S")?;
    let k = field("K")?;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(u + s);
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    Error::Format(format!("line {}: bad number '{tok}'", line_no + 2))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != k {
            return Err(Error::Format(format!(
                "line {}: expected {k} values, got {}",
                line_no + 2,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() != u + s {
        return Err(Error::Format(format!(
            "expected {u} + {s} factor rows, got {}",
            rows.len()
        )));
    }
    let flat_x: Vec<f64> = rows[..u].iter().flatten().copied().collect();
    let flat_y: Vec<f64> = rows[u..].iter().flatten().copied().collect();
    Ok(FactorMatrices {
        x: Array2::from_shape_vec((u, k), flat_x).expect("row lengths checked"),
        y: Array2::from_shape_vec((s, k), flat_y).expect("row lengths checked"),
    })
}
