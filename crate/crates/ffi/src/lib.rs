//! C interface to the dispersion functions and static risk evaluators.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`TriskStatus`] and writes its result through an out-pointer, which is
//! left untouched on failure. Panics never unwind into C.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use trisk::risks;
use trisk::{DispersionError, DispersionSpec, EmpiricalLoss, RiskError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The requested minimal T-risk does not exist (unbounded below).
    Unbounded = 3,
    /// A solver or evaluation failed numerically.
    Numerical = 4,
    /// An internal panic was caught.
    Panic = 5,
}

/// Scaled Barron dispersion function.
pub struct TriskDispersion(DispersionSpec);

/// Nonempty sample of finite losses.
pub struct TriskLosses(EmpiricalLoss);

fn dispersion_status(e: &DispersionError) -> TriskStatus {
    match e {
        DispersionError::InvalidScale(_) | DispersionError::InvalidShape(_) | DispersionError::Domain(_) => {
            TriskStatus::InvalidArgument
        }
        DispersionError::Unsupported => TriskStatus::Numerical,
    }
}

fn risk_status(e: &RiskError) -> TriskStatus {
    match e {
        RiskError::Empty | RiskError::NonFinite { .. } | RiskError::InvalidParameter(_) => TriskStatus::InvalidArgument,
        RiskError::UnboundedBelow { .. } => TriskStatus::Unbounded,
        RiskError::Solver(_) => TriskStatus::Numerical,
        RiskError::Dispersion(d) => dispersion_status(d),
    }
}

fn guard(f: impl FnOnce() -> TriskStatus) -> TriskStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(TriskStatus::Panic)
}

/// Writes `value` through `out` after the computation succeeded.
///
/// # Safety
/// `out` must be null or valid for writes.
unsafe fn emit<T>(out: *mut T, value: Result<T, TriskStatus>) -> TriskStatus {
    if out.is_null() {
        return TriskStatus::NullPointer;
    }
    match value {
        Ok(v) => {
            // SAFETY: non-null and valid for writes per the caller contract.
            unsafe { out.write(v) };
            TriskStatus::Ok
        }
        Err(s) => s,
    }
}

/// Static description of a status code; never null, never freed.
#[no_mangle]
pub extern "C" fn trisk_status_message(status: TriskStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        TriskStatus::Ok => b"ok\0",
        TriskStatus::NullPointer => b"null pointer argument\0",
        TriskStatus::InvalidArgument => b"invalid argument\0",
        TriskStatus::Unbounded => b"risk is unbounded below\0",
        TriskStatus::Numerical => b"numerical failure\0",
        TriskStatus::Panic => b"internal panic\0",
    };
    msg.as_ptr().cast()
}

/// Creates a Barron dispersion with shape `alpha` (`-INFINITY` allowed, at
/// most 2) and scale `sigma > 0`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn trisk_dispersion_new(alpha: f64, sigma: f64, out: *mut *mut TriskDispersion) -> TriskStatus {
    guard(|| {
        if out.is_null() {
            return TriskStatus::NullPointer;
        }
        let spec = DispersionSpec::barron(alpha, sigma)
            .map(|s| Box::into_raw(Box::new(TriskDispersion(s))))
            .map_err(|e| dispersion_status(&e));
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, spec) }
    })
}

/// Releases a dispersion handle; null is ignored.
///
/// # Safety
/// `handle` must be null or come from `trisk_dispersion_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trisk_dispersion_free(handle: *mut TriskDispersion) {
    if !handle.is_null() {
        // SAFETY: allocated by Box::into_raw in trisk_dispersion_new.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// # Safety
/// `handle` must be null or a live handle.
unsafe fn spec_ref<'a>(handle: *const TriskDispersion) -> Result<&'a DispersionSpec, TriskStatus> {
    // SAFETY: per the caller contract.
    unsafe { handle.as_ref() }.map(|h| &h.0).ok_or(TriskStatus::NullPointer)
}

/// # Safety
/// `handle` must be null or a live handle.
unsafe fn losses_ref<'a>(handle: *const TriskLosses) -> Result<&'a EmpiricalLoss, TriskStatus> {
    // SAFETY: per the caller contract.
    unsafe { handle.as_ref() }.map(|h| &h.0).ok_or(TriskStatus::NullPointer)
}

/// # Safety
/// `handle` must be null or a live handle; `out` null or writable.
unsafe fn eval_dispersion(
    handle: *const TriskDispersion,
    out: *mut f64,
    f: impl FnOnce(&DispersionSpec) -> Result<f64, DispersionError>,
) -> TriskStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let value = unsafe { spec_ref(handle) }.and_then(|s| f(s).map_err(|e| dispersion_status(&e)));
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, value) }
    })
}

/// `rho_sigma(x)`.
///
/// # Safety
/// `handle` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_dispersion_value(handle: *const TriskDispersion, x: f64, out: *mut f64) -> TriskStatus {
    // SAFETY: forwarded caller contract.
    unsafe { eval_dispersion(handle, out, |s| s.rho(x)) }
}

/// First derivative of `rho_sigma` at `x`.
///
/// # Safety
/// `handle` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_dispersion_slope(handle: *const TriskDispersion, x: f64, out: *mut f64) -> TriskStatus {
    // SAFETY: forwarded caller contract.
    unsafe { eval_dispersion(handle, out, |s| s.rho_d1(x)) }
}

/// Second derivative of `rho_sigma` at `x`.
///
/// # Safety
/// `handle` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_dispersion_curvature(handle: *const TriskDispersion, x: f64, out: *mut f64) -> TriskStatus {
    // SAFETY: forwarded caller contract.
    unsafe { eval_dispersion(handle, out, |s| s.rho_d2(x)) }
}

/// Lipschitz constant of `rho_sigma` (`INFINITY` when unbounded slope).
///
/// # Safety
/// `handle` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_dispersion_lipschitz(handle: *const TriskDispersion, out: *mut f64) -> TriskStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, spec_ref(handle).map(DispersionSpec::lipschitz_coeff)) }
    })
}

/// Smoothness constant `sup |rho_sigma''|`.
///
/// # Safety
/// `handle` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_dispersion_smoothness(handle: *const TriskDispersion, out: *mut f64) -> TriskStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, spec_ref(handle).map(DispersionSpec::smoothness_coeff)) }
    })
}

/// Copies `len` finite losses into a new sample handle.
///
/// # Safety
/// `values` must be valid for `len` reads (or null with `len == 0`);
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn trisk_losses_new(values: *const f64, len: usize, out: *mut *mut TriskLosses) -> TriskStatus {
    guard(|| {
        if out.is_null() {
            return TriskStatus::NullPointer;
        }
        let sample = if values.is_null() && len > 0 {
            Err(TriskStatus::NullPointer)
        } else {
            let slice = if len == 0 {
                &[][..]
            } else {
                // SAFETY: valid for `len` reads per the caller contract.
                unsafe { std::slice::from_raw_parts(values, len) }
            };
            EmpiricalLoss::new(slice.to_vec())
                .map(|s| Box::into_raw(Box::new(TriskLosses(s))))
                .map_err(|e| risk_status(&e))
        };
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, sample) }
    })
}

/// Releases a loss sample; null is ignored.
///
/// # Safety
/// `handle` must be null or come from `trisk_losses_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trisk_losses_free(handle: *mut TriskLosses) {
    if !handle.is_null() {
        // SAFETY: allocated by Box::into_raw in trisk_losses_new.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of losses in the sample (0 for null).
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trisk_losses_len(handle: *const TriskLosses) -> usize {
    // SAFETY: per the caller contract.
    unsafe { losses_ref(handle) }.map_or(0, EmpiricalLoss::len)
}

/// # Safety
/// `losses` must be null or a live handle; `out` null or writable.
unsafe fn eval_risk(
    losses: *const TriskLosses,
    out: *mut f64,
    f: impl FnOnce(&EmpiricalLoss) -> Result<f64, RiskError>,
) -> TriskStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let value = unsafe { losses_ref(losses) }.and_then(|l| f(l).map_err(|e| risk_status(&e)));
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, value) }
    })
}

/// Lower `beta`-quantile of the sample.
///
/// # Safety
/// `losses` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_quantile(losses: *const TriskLosses, beta: f64, out: *mut f64) -> TriskStatus {
    // SAFETY: forwarded caller contract.
    unsafe { eval_risk(losses, out, |l| risks::quantile(l, beta)) }
}

/// Conditional value-at-risk at level `beta` in `[0, 1)`.
///
/// # Safety
/// `losses` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_cvar(losses: *const TriskLosses, beta: f64, out: *mut f64) -> TriskStatus {
    // SAFETY: forwarded caller contract.
    unsafe { eval_risk(losses, out, |l| risks::cvar(l, beta)) }
}

/// Tilted (entropic) risk for nonzero `gamma`.
///
/// # Safety
/// `losses` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_tilted(losses: *const TriskLosses, gamma: f64, out: *mut f64) -> TriskStatus {
    // SAFETY: forwarded caller contract.
    unsafe { eval_risk(losses, out, |l| risks::tilted(l, gamma)) }
}

/// Chi-squared DRO risk with radius parameter `a_tilde`.
///
/// # Safety
/// `losses` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_dro(losses: *const TriskLosses, a_tilde: f64, out: *mut f64) -> TriskStatus {
    // SAFETY: forwarded caller contract.
    unsafe { eval_risk(losses, out, |l| risks::dro_risk(l, 2.0, a_tilde)) }
}

/// T-risk `eta * theta + mean(rho_sigma(L - theta))` at a given threshold.
///
/// # Safety
/// Handles must be null or live; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_trisk(
    losses: *const TriskLosses,
    dispersion: *const TriskDispersion,
    theta: f64,
    eta: f64,
    out: *mut f64,
) -> TriskStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let value = unsafe { losses_ref(losses).and_then(|l| spec_ref(dispersion).map(|s| (l, s))) }.and_then(|(l, s)| {
            if theta.is_finite() && eta.is_finite() {
                Ok(risks::trisk(l, s, theta, eta))
            } else {
                Err(TriskStatus::InvalidArgument)
            }
        });
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, value) }
    })
}

/// Minimal T-risk over the threshold and the minimizing threshold.
///
/// # Safety
/// Handles must be null or live; `value` and `theta_star` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_minimal_trisk(
    losses: *const TriskLosses,
    dispersion: *const TriskDispersion,
    eta: f64,
    value: *mut f64,
    theta_star: *mut f64,
) -> TriskStatus {
    guard(|| {
        if value.is_null() || theta_star.is_null() {
            return TriskStatus::NullPointer;
        }
        // SAFETY: forwarded caller contract.
        let result = unsafe { losses_ref(losses).and_then(|l| spec_ref(dispersion).map(|s| (l, s))) }
            .and_then(|(l, s)| risks::minimal_trisk(l, s, eta).map_err(|e| risk_status(&e)));
        match result {
            Ok(r) => {
                // SAFETY: checked non-null; writable per the caller contract.
                unsafe {
                    value.write(r.value);
                    theta_star.write(r.theta_star);
                }
                TriskStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// M-location: the threshold minimizing `mean(rho_sigma(L - theta))`.
///
/// # Safety
/// Handles must be null or live; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn trisk_m_location(
    losses: *const TriskLosses,
    dispersion: *const TriskDispersion,
    out: *mut f64,
) -> TriskStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let value = unsafe { losses_ref(losses).and_then(|l| spec_ref(dispersion).map(|s| (l, s))) }
            .and_then(|(l, s)| risks::m_location(l, s).map_err(|e| risk_status(&e)));
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, value) }
    })
}
