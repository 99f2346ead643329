//! C ABI over `csp_refute`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`CspStatus`]; the message of the last failure on the calling thread is
//! available from [`csp_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use csp_refute::csp::{brute_opt, eval_value, sample_instance, Assignment, Instance};
use csp_refute::io::{instance_from_json, instance_to_json, read_family};
use csp_refute::refuter::{default_ell, refute, Basis, RefutationCertificate, RefuteOptions};
use csp_refute::twise::{opt_t, OptTOptions};
use csp_refute::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CspStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameters = 3,
    ResourceLimit = 4,
    Format = 5,
    Io = 6,
    Undefined = 7,
    Internal = 8,
    Panic = 9,
}

/// Opaque instance handle.
pub struct CspInstance(Instance);

/// Opaque certificate handle.
pub struct CspCertificate(RefutationCertificate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CspStatus {
    match e {
        Error::InvalidParameters(_) | Error::WrongMode(_) | Error::Precondition(_) => CspStatus::InvalidParameters,
        Error::ResourceLimit { .. } => CspStatus::ResourceLimit,
        Error::Format(_) | Error::Json(_) => CspStatus::Format,
        Error::Io(_) => CspStatus::Io,
        Error::UndefinedValue(_) | Error::Degenerate(_) => CspStatus::Undefined,
        Error::Lp(_) => CspStatus::Internal,
    }
}

fn guard<F: FnOnce() -> Result<(), (CspStatus, String)>>(f: F) -> CspStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CspStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside csp_refute".into());
            CspStatus::Panic
        }
    }
}

fn lib<T>(r: csp_refute::Result<T>) -> Result<T, (CspStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, (CspStatus, String)> {
    if p.is_null() {
        return Err((CspStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (CspStatus::InvalidUtf8, e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, (CspStatus, String)> {
    p.as_ref().ok_or((CspStatus::NullPointer, "null handle".into()))
}

fn check_out<T>(p: *mut T) -> Result<(), (CspStatus, String)> {
    if p.is_null() {
        Err((CspStatus::NullPointer, "null output pointer".into()))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> Result<*mut c_char, (CspStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| (CspStatus::Internal, e.to_string()))
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn csp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn csp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an instance from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_instance_from_json(json: *const c_char, out: *mut *mut CspInstance) -> CspStatus {
    guard(|| {
        check_out(out)?;
        let inst = lib(instance_from_json(read_str(json)?))?;
        *out = Box::into_raw(Box::new(CspInstance(inst)));
        Ok(())
    })
}

/// Samples an instance. `family` is a JSON path or `builtin:NAME`.
///
/// # Safety
/// `family` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_instance_sample(
    family: *const c_char,
    n: usize,
    m_expected: f64,
    seed: u64,
    out: *mut *mut CspInstance,
) -> CspStatus {
    guard(|| {
        check_out(out)?;
        let fam = lib(read_family(read_str(family)?))?;
        let inst = lib(sample_instance(&fam, n, m_expected, seed))?;
        *out = Box::into_raw(Box::new(CspInstance(inst)));
        Ok(())
    })
}

/// Serializes an instance; free the result with `csp_string_free`.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_instance_to_json(inst: *const CspInstance, out: *mut *mut c_char) -> CspStatus {
    guard(|| {
        check_out(out)?;
        *out = to_c_string(instance_to_json(&deref(inst)?.0))?;
        Ok(())
    })
}

/// Number of variables and constraints.
///
/// # Safety
/// `inst` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_instance_shape(
    inst: *const CspInstance,
    n: *mut usize,
    m: *mut usize,
) -> CspStatus {
    guard(|| {
        check_out(n)?;
        check_out(m)?;
        let i = &deref(inst)?.0;
        *n = i.n;
        *m = i.constraints.len();
        Ok(())
    })
}

/// # Safety
/// `inst` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn csp_instance_free(inst: *mut CspInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Fraction of constraints satisfied by `x[0..len]`.
///
/// # Safety
/// `x` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_eval_value(
    inst: *const CspInstance,
    x: *const u32,
    len: usize,
    out: *mut f64,
) -> CspStatus {
    guard(|| {
        check_out(out)?;
        let i = &deref(inst)?.0;
        if x.is_null() && len > 0 {
            return Err((CspStatus::NullPointer, "null assignment".into()));
        }
        let vals = if len == 0 { &[][..] } else { std::slice::from_raw_parts(x, len) };
        let a = Assignment::new(vals.iter().map(|&v| v as usize).collect());
        *out = lib(eval_value(i, &a))?;
        Ok(())
    })
}

/// Exhaustive optimum; `x_out` (may be NULL) receives an optimal assignment of length n.
///
/// # Safety
/// `out` must be writable; `x_out`, if non-NULL, must hold n values.
#[no_mangle]
pub unsafe extern "C" fn csp_brute_opt(inst: *const CspInstance, out: *mut f64, x_out: *mut u32) -> CspStatus {
    guard(|| {
        check_out(out)?;
        let i = &deref(inst)?.0;
        let (v, a) = lib(brute_opt(i))?;
        *out = v;
        if !x_out.is_null() {
            for (k, &val) in a.values.iter().enumerate() {
                *x_out.add(k) = val as u32;
            }
        }
        Ok(())
    })
}

/// Runs the refuter. `ell == 0` selects the default level; `monomial != 0` picks the monomial basis.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_refute(
    inst: *const CspInstance,
    t: usize,
    ell: usize,
    epsilon: f64,
    monomial: i32,
    out: *mut *mut CspCertificate,
) -> CspStatus {
    guard(|| {
        check_out(out)?;
        let i = &deref(inst)?.0;
        let basis = if monomial != 0 { Basis::Monomial } else { Basis::Indicator };
        let ell = if ell == 0 { default_ell(t, basis) } else { ell };
        let mut opts = RefuteOptions::new(t, ell, epsilon);
        opts.basis = basis;
        let cert = lib(refute(i, &opts))?;
        *out = Box::into_raw(Box::new(CspCertificate(cert)));
        Ok(())
    })
}

/// Certified upper bound and whether it is fully certified (1) or heuristic (0).
///
/// # Safety
/// `cert` must be a live handle; `bound` must be writable, `certified` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn csp_certificate_bound(
    cert: *const CspCertificate,
    bound: *mut f64,
    certified: *mut i32,
) -> CspStatus {
    guard(|| {
        check_out(bound)?;
        let c = &deref(cert)?.0;
        *bound = c.final_bound;
        if !certified.is_null() {
            *certified = (c.soundness_mode == csp_refute::refuter::SoundnessMode::Certified) as i32;
        }
        Ok(())
    })
}

/// Serializes a certificate; free the result with `csp_string_free`.
///
/// # Safety
/// `cert` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_certificate_to_json(cert: *const CspCertificate, out: *mut *mut c_char) -> CspStatus {
    guard(|| {
        check_out(out)?;
        *out = to_c_string(deref(cert)?.0.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `cert` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn csp_certificate_free(cert: *mut CspCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// opt_t of a family (JSON path or `builtin:NAME`) with net resolution from `epsilon`.
///
/// # Safety
/// `family` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csp_opt_t(family: *const c_char, t: usize, epsilon: f64, out: *mut f64) -> CspStatus {
    guard(|| {
        check_out(out)?;
        let fam = lib(read_family(read_str(family)?))?;
        *out = lib(opt_t(&fam, t, epsilon, &OptTOptions::default()))?.value;
        Ok(())
    })
}
