//! C ABI for the transmittance-sensing library.
//!
//! Handles are opaque pointers owned by the library; every constructor has a
//! matching `_free`. Functions return [`QlossStatus`]; on failure the
//! thread-local message from [`qloss_last_error_message`] describes the
//! cause. Out-parameters are written only on `Ok`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qloss_core::error::QlossError;
use qloss_core::fock::{FockCutoff, SqueezeParams};
use qloss_core::gaussian::{qfi_transmittance, ChannelParams};
use qloss_core::receiver::{pmf_tms_pnr, select_omega, PmfTable, ReceiverConfig};
use qloss_core::twostage::{run_trial, RunConfig};

/// Status codes returned by every fallible entry point.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QlossStatus {
    Ok = 0,
    /// A pointer argument was null or a scalar argument was out of range.
    InvalidArgument = 1,
    /// The truncated basis lost more probability mass than allowed.
    CutoffTooSmall = 2,
    /// No receiver squeeze attains the required Fisher-information ratio.
    ExistenceRegion = 3,
    /// Internal numeric failure.
    Internal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn status_for(e: &QlossError) -> QlossStatus {
    match e {
        QlossError::CutoffTooSmall { .. } => QlossStatus::CutoffTooSmall,
        QlossError::ExistenceRegion { .. } => QlossStatus::ExistenceRegion,
        QlossError::InvalidConfig(_) | QlossError::DimensionMismatch(_) => {
            QlossStatus::InvalidArgument
        }
        _ => QlossStatus::Internal,
    }
}

fn guard<F: FnOnce() -> QlossStatus>(f: F) -> QlossStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            QlossStatus::Internal
        }
    }
}

/// Channel scenario handle.
pub struct QlossChannel {
    inner: ChannelParams,
}

/// Outcome-distribution handle.
pub struct QlossPmf {
    inner: PmfTable,
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn qloss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread.
#[no_mangle]
pub extern "C" fn qloss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a channel scenario. `theta` in (0, 1], `n_s >= 0`, `n_b > 0`,
/// `gamma` in (-pi, pi].
#[no_mangle]
pub extern "C" fn qloss_channel_new(
    theta: f64,
    gamma: f64,
    n_s: f64,
    n_b: f64,
    out: *mut *mut QlossChannel,
) -> QlossStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return QlossStatus::InvalidArgument;
        }
        match ChannelParams::new(theta, gamma, n_s, n_b) {
            Ok(inner) => {
                let boxed = Box::new(QlossChannel { inner });
                unsafe { *out = Box::into_raw(boxed) };
                QlossStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Release a channel handle. Null is ignored.
#[no_mangle]
pub extern "C" fn qloss_channel_free(channel: *mut QlossChannel) {
    if !channel.is_null() {
        drop(unsafe { Box::from_raw(channel) });
    }
}

/// Quantum Fisher information about the transmittance at the channel's
/// true parameters.
#[no_mangle]
pub extern "C" fn qloss_qfi(
    channel: *const QlossChannel,
    per_mode_max: u32,
    tail_tol: f64,
    out_qfi: *mut f64,
) -> QlossStatus {
    guard(|| {
        if channel.is_null() || out_qfi.is_null() {
            set_error("null pointer argument");
            return QlossStatus::InvalidArgument;
        }
        let ch = unsafe { &(*channel).inner };
        let cutoff = match FockCutoff::new(per_mode_max as usize, tail_tol) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return QlossStatus::InvalidArgument;
            }
        };
        match qfi_transmittance(ch, cutoff) {
            Ok(fi) => {
                unsafe { *out_qfi = fi.value };
                QlossStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Choose the receiver squeeze at a preliminary estimate. Writes the squeeze
/// parameter and the achieved CFI/QFI ratio.
#[no_mangle]
pub extern "C" fn qloss_select_omega(
    channel: *const QlossChannel,
    theta_hat: f64,
    gamma_hat: f64,
    per_mode_max: u32,
    tail_tol: f64,
    out_omega: *mut f64,
    out_cfi_ratio: *mut f64,
) -> QlossStatus {
    guard(|| {
        if channel.is_null() || out_omega.is_null() || out_cfi_ratio.is_null() {
            set_error("null pointer argument");
            return QlossStatus::InvalidArgument;
        }
        let ch = unsafe { &(*channel).inner };
        let cutoff = match FockCutoff::new(per_mode_max as usize, tail_tol) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return QlossStatus::InvalidArgument;
            }
        };
        match select_omega(theta_hat, gamma_hat, ch, cutoff) {
            Ok(sel) => {
                unsafe {
                    *out_omega = sel.omega.r;
                    *out_cfi_ratio = sel.ratio;
                }
                QlossStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Build the outcome distribution of the TMS + PNR receiver for the state at
/// `theta` with receiver settings `(omega, gamma_hat)`.
#[no_mangle]
pub extern "C" fn qloss_pmf_new(
    channel: *const QlossChannel,
    theta: f64,
    omega: f64,
    gamma_hat: f64,
    per_mode_max: u32,
    tail_tol: f64,
    out: *mut *mut QlossPmf,
) -> QlossStatus {
    guard(|| {
        if channel.is_null() || out.is_null() {
            set_error("null pointer argument");
            return QlossStatus::InvalidArgument;
        }
        let ch = unsafe { &(*channel).inner };
        let build = || -> Result<PmfTable, QlossError> {
            let cutoff = FockCutoff::new(per_mode_max as usize, tail_tol)?;
            let config = ReceiverConfig {
                omega: SqueezeParams::new(omega)?,
                gamma_hat,
                cutoff,
            };
            pmf_tms_pnr(theta, &config, ch)
        };
        match build() {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(QlossPmf { inner })) };
                QlossStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Probability of the outcome pair `(k, m)`.
#[no_mangle]
pub extern "C" fn qloss_pmf_prob(
    pmf: *const QlossPmf,
    k: u32,
    m: u32,
    out: *mut f64,
) -> QlossStatus {
    guard(|| {
        if pmf.is_null() || out.is_null() {
            set_error("null pointer argument");
            return QlossStatus::InvalidArgument;
        }
        let table = unsafe { &(*pmf).inner };
        let (k, m) = (k as usize, m as usize);
        if k > table.k_max() || m > table.k_max() {
            set_error("outcome index beyond the retained grid");
            return QlossStatus::InvalidArgument;
        }
        unsafe { *out = table.prob(k, m) };
        QlossStatus::Ok
    })
}

/// Probability mass outside the retained grid.
#[no_mangle]
pub extern "C" fn qloss_pmf_tail_mass(pmf: *const QlossPmf, out: *mut f64) -> QlossStatus {
    guard(|| {
        if pmf.is_null() || out.is_null() {
            set_error("null pointer argument");
            return QlossStatus::InvalidArgument;
        }
        unsafe { *out = (*pmf).inner.tail_mass };
        QlossStatus::Ok
    })
}

/// Release a p.m.f. handle. Null is ignored.
#[no_mangle]
pub extern "C" fn qloss_pmf_free(pmf: *mut QlossPmf) {
    if !pmf.is_null() {
        drop(unsafe { Box::from_raw(pmf) });
    }
}

/// Run one seeded two-stage trial; writes the refined estimate, the
/// preliminary estimate, and the phase estimate.
#[allow(clippy::too_many_arguments)]
#[no_mangle]
pub extern "C" fn qloss_run_trial(
    channel: *const QlossChannel,
    n_total: u64,
    schedule_q: f64,
    per_mode_max: u32,
    tail_tol: f64,
    theta_lo: f64,
    seed: u64,
    out_theta_r: *mut f64,
    out_theta_p: *mut f64,
    out_gamma_hat: *mut f64,
) -> QlossStatus {
    guard(|| {
        if channel.is_null()
            || out_theta_r.is_null()
            || out_theta_p.is_null()
            || out_gamma_hat.is_null()
        {
            set_error("null pointer argument");
            return QlossStatus::InvalidArgument;
        }
        let ch = unsafe { &(*channel).inner };
        let build = || -> Result<_, QlossError> {
            let cutoff = FockCutoff::new(per_mode_max as usize, tail_tol)?;
            let cfg = RunConfig {
                channel: *ch,
                n_total: n_total as usize,
                schedule_q,
                cutoff,
                seed,
                theta_lo,
            };
            run_trial(&cfg)
        };
        match build() {
            Ok(rec) => {
                unsafe {
                    *out_theta_r = rec.theta_r;
                    *out_theta_p = rec.theta_p;
                    *out_gamma_hat = rec.gamma_hat;
                }
                QlossStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}
