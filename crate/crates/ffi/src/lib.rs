//! C ABI for the temporal link-prediction engine: opaque handles over
//! networks and trained models, a plain-old-data options struct, integer
//! status codes, and a thread-local last-error message.
//!
//! Ownership rules are the usual C ones: every `*_free` releases exactly
//! the handle its constructor returned, output pointers are written only
//! on `GRNLFA_STATUS_OK`, and returned strings stay valid until the next
//! failing call on the same thread (or forever, for static strings).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use grnlfa::error::Error;
use grnlfa::evaluation::{generate_synthetic, parse_synthetic_spec};
use grnlfa::factorization::{train, FactorMatrices, Model, StopReason, TrainConfig};
use grnlfa::regularizer::{build_combined, WeightScheme};
use grnlfa::temporal_graph::{
    read_network, temporal_split_with, NodeIndex, Snapshot, SparseKnownSet, TemporalNetwork,
    TrainAggregation, ValueTransform,
};

/// Result code of every fallible call. Anything other than OK leaves a
/// description in `grnlfa_last_error`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GrnlfaStatus {
    Ok = 0,
    ErrNullArgument = 1,
    ErrInvalidArgument = 2,
    ErrParse = 3,
    ErrIo = 4,
    ErrDimension = 5,
    ErrEmptySet = 6,
    ErrInternal = 7,
}

/// Training controls. Obtain defaults from `grnlfa_train_options_default`
/// and override fields as needed; every field is validated by
/// `grnlfa_train`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GrnlfaTrainOptions {
    /// 0 = dense NMF baseline, 1 = sparse model without the graph term,
    /// 2 = graph-regularized sparse model.
    pub model: i32,
    /// Latent dimension, >= 1.
    pub k: usize,
    /// Graph regularization strength, >= 0.
    pub alpha: f64,
    /// Temporal decay in (0, 1]; drives both the training-target decay
    /// and the historical graph combination.
    pub theta: f64,
    /// Training round cap, >= 1.
    pub max_epochs: usize,
    /// Convergence threshold on the objective change, >= 0.
    pub tolerance: f64,
    /// Denominator guard of the multiplicative updates, > 0.
    pub epsilon: f64,
    /// Factor initialization seed.
    pub seed: u64,
    /// Scale the graph pull by each receiver's observation count.
    pub lambda_scaling: bool,
    /// Training-target aggregation: 0 = decayed sum, 1 = plain sum,
    /// 2 = last slice.
    pub aggregation: i32,
    /// Receiver-graph weighting: 0 = co-sender product, 1 = binarized
    /// co-occurrence, 2 = cosine-normalized.
    pub weight_scheme: i32,
}

/// Opaque handle over a loaded temporal network.
pub struct GrnlfaNetwork {
    inner: TemporalNetwork,
}

/// Opaque handle over a trained model: the factor matrices picked by
/// validation RMSE plus the run's summary metrics.
pub struct GrnlfaResult {
    factors: FactorMatrices,
    rmse_val: f64,
    mae_val: f64,
    rmse_test: f64,
    mae_test: f64,
    epochs_run: usize,
    converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NULs were stripped");
    });
}

fn fail(status: GrnlfaStatus, message: impl AsRef<str>) -> GrnlfaStatus {
    set_last_error(message.as_ref());
    status
}

fn fail_error(err: &Error) -> GrnlfaStatus {
    let status = match err {
        Error::Parse(_) | Error::Format(_) => GrnlfaStatus::ErrParse,
        Error::Io(_) => GrnlfaStatus::ErrIo,
        Error::Dimension(_) | Error::IndexOutOfRange(_) => GrnlfaStatus::ErrDimension,
        Error::EmptySet(_) => GrnlfaStatus::ErrEmptySet,
        Error::Config(_) | Error::Split(_) | Error::UnknownModel(_) => {
            GrnlfaStatus::ErrInvalidArgument
        }
    };
    fail(status, err.to_string())
}

/// Shield the C boundary from panics; a panic reports ErrInternal.
fn guarded(body: impl FnOnce() -> GrnlfaStatus) -> GrnlfaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(GrnlfaStatus::ErrInternal, "internal panic"),
    }
}

unsafe fn opt_str<'a>(ptr: *const c_char) -> Result<&'a str, GrnlfaStatus> {
    if ptr.is_null() {
        return Err(fail(GrnlfaStatus::ErrNullArgument, "string argument is NULL"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(GrnlfaStatus::ErrParse, "string argument is not UTF-8"))
}

fn transform_from(code: i32) -> Result<ValueTransform, GrnlfaStatus> {
    match code {
        0 => Ok(ValueTransform::Identity),
        1 => Ok(ValueTransform::Log1p),
        other => Err(fail(
            GrnlfaStatus::ErrInvalidArgument,
            format!("transform code {other} (expected 0 or 1)"),
        )),
    }
}

fn model_from(code: i32) -> Result<Model, GrnlfaStatus> {
    match code {
        0 => Ok(Model::NmfDense),
        1 => Ok(Model::Nlfa),
        2 => Ok(Model::Grnlfa),
        other => Err(fail(
            GrnlfaStatus::ErrInvalidArgument,
            format!("model code {other} (expected 0, 1, or 2)"),
        )),
    }
}

fn aggregation_from(code: i32) -> Result<TrainAggregation, GrnlfaStatus> {
    match code {
        0 => Ok(TrainAggregation::DecayedSum),
        1 => Ok(TrainAggregation::PlainSum),
        2 => Ok(TrainAggregation::LastSlice),
        other => Err(fail(
            GrnlfaStatus::ErrInvalidArgument,
            format!("aggregation code {other} (expected 0, 1, or 2)"),
        )),
    }
}

fn weight_scheme_from(code: i32) -> Result<WeightScheme, GrnlfaStatus> {
    match code {
        0 => Ok(WeightScheme::CoSenderProduct),
        1 => Ok(WeightScheme::BinarizedCoOccurrence),
        2 => Ok(WeightScheme::CosineNormalized),
        other => Err(fail(
            GrnlfaStatus::ErrInvalidArgument,
            format!("weight scheme code {other} (expected 0, 1, or 2)"),
        )),
    }
}

unsafe fn emit_network(
    network: TemporalNetwork,
    out: *mut *mut GrnlfaNetwork,
) -> GrnlfaStatus {
    if out.is_null() {
        return fail(GrnlfaStatus::ErrNullArgument, "output handle is NULL");
    }
    *out = Box::into_raw(Box::new(GrnlfaNetwork { inner: network }));
    GrnlfaStatus::Ok
}

/// Version of the underlying engine as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn grnlfa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Description of the most recent failure on this thread; empty string if
/// nothing failed yet. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn grnlfa_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// The default training configuration (graph-regularized model, K = 20,
/// alpha = 0.01, theta = 0.5, 1000 epochs, tolerance 1e-5, seed 42).
#[no_mangle]
pub extern "C" fn grnlfa_train_options_default() -> GrnlfaTrainOptions {
    let config = TrainConfig::default();
    GrnlfaTrainOptions {
        model: 2,
        k: config.k,
        alpha: config.alpha,
        theta: config.theta,
        max_epochs: config.max_epochs,
        tolerance: config.tolerance,
        epsilon: config.epsilon,
        seed: config.seed,
        lambda_scaling: config.lambda_scaling,
        aggregation: 0,
        weight_scheme: 0,
    }
}

/// Parse a network from text in the `grnlfa-net v1` format, applying the
/// value transform (0 = identity, 1 = log1p).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_network_read_text(
    text: *const c_char,
    transform: i32,
    out: *mut *mut GrnlfaNetwork,
) -> GrnlfaStatus {
    guarded(|| {
        let text = match opt_str(text) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let transform = match transform_from(transform) {
            Ok(v) => v,
            Err(status) => return status,
        };
        match read_network(text) {
            Ok(network) => emit_network(network.map_values(|v| transform.apply(v)), out),
            Err(err) => fail_error(&err),
        }
    })
}

/// Read a network file in the `grnlfa-net v1` format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_network_read_file(
    path: *const c_char,
    transform: i32,
    out: *mut *mut GrnlfaNetwork,
) -> GrnlfaStatus {
    guarded(|| {
        let path = match opt_str(path) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(v) => v,
            Err(e) => return fail(GrnlfaStatus::ErrIo, format!("cannot read '{path}': {e}")),
        };
        let transform = match transform_from(transform) {
            Ok(v) => v,
            Err(status) => return status,
        };
        match read_network(&text) {
            Ok(network) => emit_network(network.map_values(|v| transform.apply(v)), out),
            Err(err) => fail_error(&err),
        }
    })
}

/// Generate a synthetic network from a `synthetic:` spec string such as
/// `synthetic:u=20,s=20,k=3,t=6,density=0.3,seed=7`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_network_synthetic(
    spec: *const c_char,
    transform: i32,
    out: *mut *mut GrnlfaNetwork,
) -> GrnlfaStatus {
    guarded(|| {
        let spec = match opt_str(spec) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let transform = match transform_from(transform) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let parsed = match parse_synthetic_spec(spec) {
            Ok(Some(parsed)) => parsed,
            Ok(None) => {
                return fail(
                    GrnlfaStatus::ErrInvalidArgument,
                    format!("'{spec}' is not a synthetic: spec"),
                )
            }
            Err(err) => return fail_error(&err),
        };
        match generate_synthetic(&parsed) {
            Ok(network) => emit_network(network.map_values(|v| transform.apply(v)), out),
            Err(err) => fail_error(&err),
        }
    })
}

/// Build a network from parallel entry arrays. `slices` holds 1-based
/// slice indices in 1..=num_slices; duplicate (slice, sender, receiver)
/// entries are merged by summation before the transform applies.
///
/// # Safety
/// The four arrays must each hold `len` readable elements; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_network_from_entries(
    num_senders: usize,
    num_receivers: usize,
    num_slices: usize,
    slices: *const usize,
    senders: *const usize,
    receivers: *const usize,
    values: *const f64,
    len: usize,
    transform: i32,
    out: *mut *mut GrnlfaNetwork,
) -> GrnlfaStatus {
    guarded(|| {
        if len > 0 && (slices.is_null() || senders.is_null() || receivers.is_null() || values.is_null()) {
            return fail(GrnlfaStatus::ErrNullArgument, "entry array is NULL");
        }
        let transform = match transform_from(transform) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let slices_arr = std::slice::from_raw_parts(slices, len);
        let senders_arr = std::slice::from_raw_parts(senders, len);
        let receivers_arr = std::slice::from_raw_parts(receivers, len);
        let values_arr = std::slice::from_raw_parts(values, len);

        let mut per_slice: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); num_slices];
        for idx in 0..len {
            let t = slices_arr[idx];
            if t < 1 || t > num_slices {
                return fail(
                    GrnlfaStatus::ErrInvalidArgument,
                    format!("entry {idx}: slice {t} outside 1..={num_slices}"),
                );
            }
            per_slice[t - 1].push((senders_arr[idx], receivers_arr[idx], values_arr[idx]));
        }
        let mut snapshots = Vec::with_capacity(num_slices);
        for (offset, triples) in per_slice.into_iter().enumerate() {
            let known = match SparseKnownSet::from_triples(num_senders, num_receivers, triples) {
                Ok(known) => known,
                Err(err) => return fail_error(&err),
            };
            snapshots.push(Snapshot {
                t: offset + 1,
                known,
            });
        }
        let network = match TemporalNetwork::new(
            snapshots,
            NodeIndex::anonymous(num_senders, num_receivers),
        ) {
            Ok(network) => network,
            Err(err) => return fail_error(&err),
        };
        emit_network(network.map_values(|v| transform.apply(v)), out)
    })
}

/// Dimensions of a network: sender count, receiver count, slice count.
/// Any output pointer may be NULL to skip that value.
///
/// # Safety
/// `network` must be a live handle from a constructor.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_network_dims(
    network: *const GrnlfaNetwork,
    num_senders: *mut usize,
    num_receivers: *mut usize,
    num_slices: *mut usize,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = network.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "network handle is NULL");
        };
        if !num_senders.is_null() {
            *num_senders = handle.inner.num_senders();
        }
        if !num_receivers.is_null() {
            *num_receivers = handle.inner.num_receivers();
        }
        if !num_slices.is_null() {
            *num_slices = handle.inner.num_slices();
        }
        GrnlfaStatus::Ok
    })
}

/// Total number of known entries across all slices.
///
/// # Safety
/// `network` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_network_entry_count(
    network: *const GrnlfaNetwork,
    out: *mut usize,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = network.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "network handle is NULL");
        };
        if out.is_null() {
            return fail(GrnlfaStatus::ErrNullArgument, "output pointer is NULL");
        }
        *out = handle.inner.total_entries();
        GrnlfaStatus::Ok
    })
}

/// Release a network handle. NULL is a no-op.
///
/// # Safety
/// `network` must be NULL or a live handle; the handle is dead afterward.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_network_free(network: *mut GrnlfaNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Train a model on the network's temporal split (earlier slices for
/// training, next-to-last for validation, last for testing). The returned
/// handle carries the factors that scored the best validation RMSE.
///
/// # Safety
/// `network` must be a live handle, `options` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_train(
    network: *const GrnlfaNetwork,
    options: *const GrnlfaTrainOptions,
    out: *mut *mut GrnlfaResult,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = network.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "network handle is NULL");
        };
        let Some(options) = options.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "options pointer is NULL");
        };
        if out.is_null() {
            return fail(GrnlfaStatus::ErrNullArgument, "output handle is NULL");
        }
        let model = match model_from(options.model) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let aggregation = match aggregation_from(options.aggregation) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let weight_scheme = match weight_scheme_from(options.weight_scheme) {
            Ok(v) => v,
            Err(status) => return status,
        };
        let config = TrainConfig {
            model,
            k: options.k,
            alpha: options.alpha,
            theta: options.theta,
            max_epochs: options.max_epochs,
            tolerance: options.tolerance,
            seed: options.seed,
            epsilon: options.epsilon,
            lambda_scaling: options.lambda_scaling,
        };
        if let Err(err) = config.validate() {
            return fail_error(&err);
        }
        let split = match temporal_split_with(&handle.inner, options.theta, aggregation) {
            Ok(split) => split,
            Err(err) => return fail_error(&err),
        };
        let graph = if model == Model::Grnlfa && options.alpha > 0.0 {
            match build_combined(
                &split.train_slices,
                weight_scheme,
                options.theta,
                options.alpha,
            ) {
                Ok(graph) => Some(graph),
                Err(err) => return fail_error(&err),
            }
        } else {
            None
        };
        let result = match train(&config, &split, graph.as_ref()) {
            Ok(result) => result,
            Err(err) => return fail_error(&err),
        };
        let (rmse_test, mae_test) = if split.test_slice.known.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            match grnlfa::factorization::rmse_mae(
                &result.best_rmse.factors,
                &split.test_slice.known,
            ) {
                Ok(pair) => pair,
                Err(err) => return fail_error(&err),
            }
        };
        let boxed = GrnlfaResult {
            rmse_val: result.best_rmse.value,
            mae_val: result.best_mae.value,
            rmse_test,
            mae_test,
            epochs_run: result.epochs_run,
            converged: result.stop_reason == StopReason::Converged,
            factors: result.best_rmse.factors,
        };
        *out = Box::into_raw(Box::new(boxed));
        GrnlfaStatus::Ok
    })
}

/// Summary metrics of a training run. Validation values are the best seen
/// across epochs; test values come from the factors at the best
/// validation-RMSE epoch (NaN when the test slice has no entries). Any
/// output pointer may be NULL to skip that value.
///
/// # Safety
/// `result` must be a live handle from `grnlfa_train`.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_result_metrics(
    result: *const GrnlfaResult,
    rmse_val: *mut f64,
    mae_val: *mut f64,
    rmse_test: *mut f64,
    mae_test: *mut f64,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = result.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "result handle is NULL");
        };
        if !rmse_val.is_null() {
            *rmse_val = handle.rmse_val;
        }
        if !mae_val.is_null() {
            *mae_val = handle.mae_val;
        }
        if !rmse_test.is_null() {
            *rmse_test = handle.rmse_test;
        }
        if !mae_test.is_null() {
            *mae_test = handle.mae_test;
        }
        GrnlfaStatus::Ok
    })
}

/// Number of epochs the run executed and whether it stopped by
/// convergence (vs hitting the epoch cap). Either output may be NULL.
///
/// # Safety
/// `result` must be a live handle from `grnlfa_train`.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_result_progress(
    result: *const GrnlfaResult,
    epochs_run: *mut usize,
    converged: *mut bool,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = result.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "result handle is NULL");
        };
        if !epochs_run.is_null() {
            *epochs_run = handle.epochs_run;
        }
        if !converged.is_null() {
            *converged = handle.converged;
        }
        GrnlfaStatus::Ok
    })
}

/// Factor-matrix dimensions: sender count, receiver count, latent
/// dimension. Any output pointer may be NULL.
///
/// # Safety
/// `result` must be a live handle from `grnlfa_train`.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_result_dims(
    result: *const GrnlfaResult,
    num_senders: *mut usize,
    num_receivers: *mut usize,
    k: *mut usize,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = result.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "result handle is NULL");
        };
        if !num_senders.is_null() {
            *num_senders = handle.factors.num_senders();
        }
        if !num_receivers.is_null() {
            *num_receivers = handle.factors.num_receivers();
        }
        if !k.is_null() {
            *k = handle.factors.k();
        }
        GrnlfaStatus::Ok
    })
}

/// Predicted value for one (sender, receiver) pair, in the transformed
/// value space the network was loaded with.
///
/// # Safety
/// `result` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_result_predict(
    result: *const GrnlfaResult,
    sender: usize,
    receiver: usize,
    out: *mut f64,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = result.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "result handle is NULL");
        };
        if out.is_null() {
            return fail(GrnlfaStatus::ErrNullArgument, "output pointer is NULL");
        }
        match handle.factors.predict_entry(sender, receiver) {
            Ok(value) => {
                *out = value;
                GrnlfaStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// Copy the factor matrices out row-major: X is num_senders x k, Y is
/// num_receivers x k. Either destination may be NULL to skip it; a
/// non-NULL destination's length must match exactly.
///
/// # Safety
/// `result` must be a live handle; non-NULL destinations must hold the
/// stated number of writable elements.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_result_copy_factors(
    result: *const GrnlfaResult,
    x_out: *mut f64,
    x_len: usize,
    y_out: *mut f64,
    y_len: usize,
) -> GrnlfaStatus {
    guarded(|| {
        let Some(handle) = result.as_ref() else {
            return fail(GrnlfaStatus::ErrNullArgument, "result handle is NULL");
        };
        let k = handle.factors.k();
        if !x_out.is_null() {
            let need = handle.factors.num_senders() * k;
            if x_len != need {
                return fail(
                    GrnlfaStatus::ErrDimension,
                    format!("x buffer holds {x_len} elements, need {need}"),
                );
            }
            for (idx, &v) in handle.factors.x.iter().enumerate() {
                *x_out.add(idx) = v;
            }
        }
        if !y_out.is_null() {
            let need = handle.factors.num_receivers() * k;
            if y_len != need {
                return fail(
                    GrnlfaStatus::ErrDimension,
                    format!("y buffer holds {y_len} elements, need {need}"),
                );
            }
            for (idx, &v) in handle.factors.y.iter().enumerate() {
                *y_out.add(idx) = v;
            }
        }
        GrnlfaStatus::Ok
    })
}

/// Release a result handle. NULL is a no-op.
///
/// # Safety
/// `result` must be NULL or a live handle; the handle is dead afterward.
#[no_mangle]
pub unsafe extern "C" fn grnlfa_result_free(result: *mut GrnlfaResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
