//! Exercises the C ABI the way a foreign caller would: raw pointers,
//! status codes, and explicit frees.

use std::ffi::{CStr, CString};
use std::ptr;

use grnlfa_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(grnlfa_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

fn synthetic(spec: &str, transform: i32) -> *mut GrnlfaNetwork {
    let spec = CString::new(spec).unwrap();
    let mut net = ptr::null_mut();
    let status = unsafe { grnlfa_network_synthetic(spec.as_ptr(), transform, &mut net) };
    assert_eq!(status, GrnlfaStatus::Ok, "{}", last_error());
    assert!(!net.is_null());
    net
}

#[test]
fn version_is_a_static_string() {
    let version = unsafe { CStr::from_ptr(grnlfa_version()) };
    assert!(!version.to_str().unwrap().is_empty());
}

#[test]
fn synthetic_network_reports_dims_and_entries() {
    let net = synthetic("synthetic:u=6,s=5,k=2,t=4,density=1.0,seed=3", 0);
    let (mut u, mut s, mut t) = (0usize, 0usize, 0usize);
    let status = unsafe { grnlfa_network_dims(net, &mut u, &mut s, &mut t) };
    assert_eq!(status, GrnlfaStatus::Ok);
    assert_eq!((u, s, t), (6, 5, 4));
    let mut count = 0usize;
    let status = unsafe { grnlfa_network_entry_count(net, &mut count) };
    assert_eq!(status, GrnlfaStatus::Ok);
    assert_eq!(count, 6 * 5 * 4);
    unsafe { grnlfa_network_free(net) };
}

#[test]
fn train_produces_metrics_factors_and_predictions() {
    let net = synthetic("synthetic:u=8,s=8,k=2,t=4,density=0.7,seed=9", 1);
    let mut options = grnlfa_train_options_default();
    options.k = 3;
    options.max_epochs = 60;
    let mut result = ptr::null_mut();
    let status = unsafe { grnlfa_train(net, &options, &mut result) };
    assert_eq!(status, GrnlfaStatus::Ok, "{}", last_error());

    let (mut rv, mut mv, mut rt, mut mt) = (0.0, 0.0, 0.0, 0.0);
    let status =
        unsafe { grnlfa_result_metrics(result, &mut rv, &mut mv, &mut rt, &mut mt) };
    assert_eq!(status, GrnlfaStatus::Ok);
    assert!(rv > 0.0 && rv.is_finite());
    assert!(mv > 0.0 && mv <= rv);
    assert!(rt > 0.0 && rt.is_finite());
    assert!(mt > 0.0 && mt <= rt);

    let (mut epochs, mut converged) = (0usize, false);
    let status = unsafe { grnlfa_result_progress(result, &mut epochs, &mut converged) };
    assert_eq!(status, GrnlfaStatus::Ok);
    assert!((1..=60).contains(&epochs));

    let (mut u, mut s, mut k) = (0usize, 0usize, 0usize);
    let status = unsafe { grnlfa_result_dims(result, &mut u, &mut s, &mut k) };
    assert_eq!(status, GrnlfaStatus::Ok);
    assert_eq!((u, s, k), (8, 8, 3));

    let mut x = vec![0.0f64; u * k];
    let mut y = vec![0.0f64; s * k];
    let status = unsafe {
        grnlfa_result_copy_factors(result, x.as_mut_ptr(), x.len(), y.as_mut_ptr(), y.len())
    };
    assert_eq!(status, GrnlfaStatus::Ok);
    assert!(x.iter().chain(y.iter()).all(|&v| v >= 0.0 && v.is_finite()));

    // A prediction equals the dot product of the copied factor rows.
    let mut predicted = 0.0f64;
    let status = unsafe { grnlfa_result_predict(result, 2, 4, &mut predicted) };
    assert_eq!(status, GrnlfaStatus::Ok);
    let manual: f64 = (0..k).map(|kk| x[2 * k + kk] * y[4 * k + kk]).sum();
    assert!((predicted - manual).abs() < 1e-12);

    unsafe { grnlfa_result_free(result) };
    unsafe { grnlfa_network_free(net) };
}

#[test]
fn entry_arrays_round_trip_through_a_network() {
    let slices: Vec<usize> = vec![1, 1, 2, 2, 3, 3, 1];
    let senders: Vec<usize> = vec![0, 1, 0, 1, 0, 1, 0];
    let receivers: Vec<usize> = vec![0, 1, 1, 0, 0, 1, 0];
    let values: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5];
    let mut net = ptr::null_mut();
    let status = unsafe {
        grnlfa_network_from_entries(
            2,
            2,
            3,
            slices.as_ptr(),
            senders.as_ptr(),
            receivers.as_ptr(),
            values.as_ptr(),
            values.len(),
            0,
            &mut net,
        )
    };
    assert_eq!(status, GrnlfaStatus::Ok, "{}", last_error());
    let mut count = 0usize;
    unsafe { grnlfa_network_entry_count(net, &mut count) };
    // The duplicate (1, 0, 0) entry merged by summation.
    assert_eq!(count, 6);
    unsafe { grnlfa_network_free(net) };
}

#[test]
fn errors_set_status_and_message() {
    // NULL string.
    let mut net = ptr::null_mut();
    let status = unsafe { grnlfa_network_synthetic(ptr::null(), 0, &mut net) };
    assert_eq!(status, GrnlfaStatus::ErrNullArgument);
    assert!(!last_error().is_empty());

    // Not a synthetic spec.
    let junk = CString::new("edges.csv").unwrap();
    let status = unsafe { grnlfa_network_synthetic(junk.as_ptr(), 0, &mut net) };
    assert_eq!(status, GrnlfaStatus::ErrInvalidArgument);

    // Bad spec value.
    let bad = CString::new("synthetic:density=7").unwrap();
    let status = unsafe { grnlfa_network_synthetic(bad.as_ptr(), 0, &mut net) };
    assert_eq!(status, GrnlfaStatus::ErrInvalidArgument);
    assert!(last_error().contains("density"));

    // Bad transform code.
    let ok = CString::new("synthetic:").unwrap();
    let status = unsafe { grnlfa_network_synthetic(ok.as_ptr(), 9, &mut net) };
    assert_eq!(status, GrnlfaStatus::ErrInvalidArgument);

    // Missing file.
    let path = CString::new("/definitely/not/here.txt").unwrap();
    let status = unsafe { grnlfa_network_read_file(path.as_ptr(), 0, &mut net) };
    assert_eq!(status, GrnlfaStatus::ErrIo);

    // Malformed network text.
    let text = CString::new("not a network").unwrap();
    let status = unsafe { grnlfa_network_read_text(text.as_ptr(), 0, &mut net) };
    assert_eq!(status, GrnlfaStatus::ErrParse);

    // Invalid training options.
    let net = synthetic("synthetic:u=5,s=5,t=3,density=0.8,seed=1", 0);
    let mut options = grnlfa_train_options_default();
    options.k = 0;
    options.theta = 4.0;
    let mut result = ptr::null_mut();
    let status = unsafe { grnlfa_train(net, &options, &mut result) };
    assert_eq!(status, GrnlfaStatus::ErrInvalidArgument);
    let message = last_error();
    assert!(message.contains("k") && message.contains("theta"), "{message}");

    // Out-of-range prediction on a valid run.
    options = grnlfa_train_options_default();
    options.k = 2;
    options.max_epochs = 5;
    let status = unsafe { grnlfa_train(net, &options, &mut result) };
    assert_eq!(status, GrnlfaStatus::Ok, "{}", last_error());
    let mut value = 0.0;
    let status = unsafe { grnlfa_result_predict(result, 99, 0, &mut value) };
    assert_eq!(status, GrnlfaStatus::ErrDimension);

    // Wrong buffer length.
    let mut tiny = [0.0f64; 1];
    let status = unsafe {
        grnlfa_result_copy_factors(result, tiny.as_mut_ptr(), tiny.len(), ptr::null_mut(), 0)
    };
    assert_eq!(status, GrnlfaStatus::ErrDimension);

    unsafe { grnlfa_result_free(result) };
    unsafe { grnlfa_network_free(net) };

    // Frees tolerate NULL.
    unsafe { grnlfa_network_free(ptr::null_mut()) };
    unsafe { grnlfa_result_free(ptr::null_mut()) };
}

#[test]
fn read_text_round_trips_written_networks() {
    let net = synthetic("synthetic:u=4,s=4,t=3,density=0.9,seed=11", 0);
    // Dump through the library, reload through the ABI, compare counts.
    let mut count_a = 0usize;
    unsafe { grnlfa_network_entry_count(net, &mut count_a) };

    let spec = grnlfa::evaluation::parse_synthetic_spec("synthetic:u=4,s=4,t=3,density=0.9,seed=11")
        .unwrap()
        .unwrap();
    let text = grnlfa::temporal_graph::write_network(
        &grnlfa::evaluation::generate_synthetic(&spec).unwrap(),
    );
    let c_text = CString::new(text).unwrap();
    let mut reloaded = ptr::null_mut();
    let status = unsafe { grnlfa_network_read_text(c_text.as_ptr(), 0, &mut reloaded) };
    assert_eq!(status, GrnlfaStatus::Ok, "{}", last_error());
    let mut count_b = 0usize;
    unsafe { grnlfa_network_entry_count(reloaded, &mut count_b) };
    assert_eq!(count_a, count_b);

    unsafe { grnlfa_network_free(net) };
    unsafe { grnlfa_network_free(reloaded) };
}

#[test]
fn grnlfa_with_zero_alpha_matches_plain_model_through_the_abi() {
    let net = synthetic("synthetic:u=8,s=8,k=2,t=4,density=0.6,seed=5", 1);
    let mut options = grnlfa_train_options_default();
    options.k = 2;
    options.max_epochs = 40;
    options.alpha = 0.0;

    let mut run = |model: i32| -> (f64, f64) {
        options.model = model;
        let mut result = ptr::null_mut();
        let status = unsafe { grnlfa_train(net, &options, &mut result) };
        assert_eq!(status, GrnlfaStatus::Ok, "{}", last_error());
        let (mut rv, mut rt) = (0.0, 0.0);
        unsafe {
            grnlfa_result_metrics(result, &mut rv, ptr::null_mut(), &mut rt, ptr::null_mut())
        };
        unsafe { grnlfa_result_free(result) };
        (rv, rt)
    };
    assert_eq!(run(2), run(1));
    unsafe { grnlfa_network_free(net) };
}
