use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use trisk_ffi::*;

fn dispersion(alpha: f64, sigma: f64) -> *mut TriskDispersion {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { trisk_dispersion_new(alpha, sigma, &mut h) }, TriskStatus::Ok);
    assert!(!h.is_null());
    h
}

fn losses(values: &[f64]) -> *mut TriskLosses {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { trisk_losses_new(values.as_ptr(), values.len(), &mut h) }, TriskStatus::Ok);
    h
}

#[test]
fn dispersion_round_trip() {
    let d = dispersion(2.0, 2.0);
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(trisk_dispersion_value(d, 3.0, &mut v), TriskStatus::Ok);
        assert!((v - 9.0 / 8.0).abs() < 1e-15);
        assert_eq!(trisk_dispersion_slope(d, 3.0, &mut v), TriskStatus::Ok);
        assert!((v - 0.75).abs() < 1e-15);
        assert_eq!(trisk_dispersion_curvature(d, 3.0, &mut v), TriskStatus::Ok);
        assert!((v - 0.25).abs() < 1e-15);
        assert_eq!(trisk_dispersion_lipschitz(d, &mut v), TriskStatus::Ok);
        assert_eq!(v, f64::INFINITY);
        assert_eq!(trisk_dispersion_value(d, f64::NAN, &mut v), TriskStatus::InvalidArgument);
        trisk_dispersion_free(d);
    }
    let welsch = dispersion(f64::NEG_INFINITY, 1.0);
    unsafe {
        assert_eq!(trisk_dispersion_smoothness(welsch, &mut v), TriskStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        trisk_dispersion_free(welsch);
    }
}

#[test]
fn invalid_arguments_and_nulls() {
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(trisk_dispersion_new(3.0, 1.0, &mut h), TriskStatus::InvalidArgument);
        assert_eq!(trisk_dispersion_new(1.0, 0.0, &mut h), TriskStatus::InvalidArgument);
        assert!(h.is_null());
        assert_eq!(trisk_dispersion_new(1.0, 1.0, ptr::null_mut()), TriskStatus::NullPointer);
        let mut l = ptr::null_mut();
        assert_eq!(trisk_losses_new(ptr::null(), 0, &mut l), TriskStatus::InvalidArgument);
        assert_eq!(trisk_losses_new(ptr::null(), 3, &mut l), TriskStatus::NullPointer);
        assert_eq!(trisk_losses_new([1.0, f64::NAN].as_ptr(), 2, &mut l), TriskStatus::InvalidArgument);
        let mut v = 0.0;
        assert_eq!(trisk_cvar(ptr::null(), 0.5, &mut v), TriskStatus::NullPointer);
        trisk_dispersion_free(ptr::null_mut());
        trisk_losses_free(ptr::null_mut());
        assert_eq!(trisk_losses_len(ptr::null()), 0);
    }
}

#[test]
fn risks_through_the_abi() {
    let l = losses(&[1.0, 2.0, 3.0, 4.0]);
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(trisk_losses_len(l), 4);
        assert_eq!(trisk_cvar(l, 0.0, &mut v), TriskStatus::Ok);
        assert!((v - 2.5).abs() < 1e-12);
        assert_eq!(trisk_quantile(l, 0.5, &mut v), TriskStatus::Ok);
        assert_eq!(v, 2.0);
        assert_eq!(trisk_tilted(l, 1.0, &mut v), TriskStatus::Ok);
        // log(mean(e, e^2, e^3, e^4))
        let expected = ((1..=4).map(|k| (k as f64).exp()).sum::<f64>() / 4.0).ln();
        assert!((v - expected).abs() < 1e-12);
        assert_eq!(trisk_tilted(l, 0.0, &mut v), TriskStatus::InvalidArgument);
        assert_eq!(trisk_dro(l, 0.25, &mut v), TriskStatus::Ok);
        let lib = trisk::risks::dro_risk(&trisk::EmpiricalLoss::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap(), 2.0, 0.25).unwrap();
        assert_eq!(v, lib);
        assert_eq!(trisk_cvar(l, 1.5, &mut v), TriskStatus::InvalidArgument);

        // alpha = 2, sigma = eta = 1: theta* = mean - 1 and value = mean + var/2 - 1/2
        let d = dispersion(2.0, 1.0);
        let (mut value, mut theta) = (f64::NAN, f64::NAN);
        assert_eq!(trisk_minimal_trisk(l, d, 1.0, &mut value, &mut theta), TriskStatus::Ok);
        assert!((theta - 1.5).abs() < 1e-8);
        assert!((value - 2.625).abs() < 1e-8);
        assert_eq!(trisk_trisk(l, d, theta, 1.0, &mut v), TriskStatus::Ok);
        assert!((v - value).abs() < 1e-10);
        assert_eq!(trisk_m_location(l, d, &mut v), TriskStatus::Ok);
        assert!((v - 2.5).abs() < 1e-8);
        assert_eq!(trisk_minimal_trisk(l, d, 1.0, ptr::null_mut(), &mut theta), TriskStatus::NullPointer);
        trisk_dispersion_free(d);

        // alpha = 0 has no minimal T-risk
        let d0 = dispersion(0.0, 1.0);
        assert_eq!(trisk_minimal_trisk(l, d0, 1.0, &mut value, &mut theta), TriskStatus::Unbounded);
        trisk_dispersion_free(d0);
        trisk_losses_free(l);
    }
}

#[test]
fn status_messages_are_static_c_strings() {
    for s in [TriskStatus::Ok, TriskStatus::Unbounded, TriskStatus::Panic] {
        let msg = unsafe { CStr::from_ptr(trisk_status_message(s)) };
        assert!(!msg.to_str().unwrap().is_empty());
    }
}

#[test]
fn header_parses_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/trisk.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["trisk_dispersion_new", "trisk_cvar", "trisk_minimal_trisk", "TRISK_STATUS_UNBOUNDED"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // a C compiler is optional in the build environment
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-xc", "-std=c99"]).arg(&header).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
