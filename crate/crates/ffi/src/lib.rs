//! C ABI over `amari_flow`.
//!
//! Every fallible function returns an [`AfStatus`]; on failure a message is
//! available from [`af_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use amari_flow::cli::{base_config, run_subcommand, CliError, SUBCOMMANDS};
use amari_flow::config::{parse_config, parse_config_onto};
use amari_flow::grid::{BoundaryMode, Grid};
use amari_flow::kernel::{KernelSpec, Verdict, Witness};
use amari_flow::operator::{KernelOperator, SpectralDecomposition, DEFAULT_NEG_TOL, DEFAULT_REL_TOL};
use amari_flow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    Config = 4,
    NotNonnegative = 5,
    AtomicSpectrum = 6,
    IndexOutOfRange = 7,
    BufferTooSmall = 8,
    Io = 9,
    Numerical = 10,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfVerdict {
    NonnegativeDefinite = 0,
    Indefinite = 1,
    NumericOnly = 2,
}

/// Opaque kernel handle.
pub struct AfKernel {
    spec: KernelSpec,
}

/// Opaque handle to the retained spectrum of a discretized operator.
pub struct AfSpectrum {
    dec: SpectralDecomposition,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> AfStatus {
    match err {
        Error::NotNonnegative { .. } => AfStatus::NotNonnegative,
        Error::AtomicSpectrum => AfStatus::AtomicSpectrum,
        Error::IndexOutOfRange { .. } => AfStatus::IndexOutOfRange,
        e if e.is_numerical() => AfStatus::Numerical,
        _ => AfStatus::InvalidParameter,
    }
}

fn fail(status: AfStatus, msg: impl Into<String>) -> AfStatus {
    set_error(msg);
    status
}

fn fail_with(err: Error) -> AfStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `f`, turning panics into [`AfStatus::Internal`].
fn guard(f: impl FnOnce() -> AfStatus) -> AfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AfStatus::Internal, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, AfStatus> {
    if p.is_null() {
        return Err(fail(AfStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(AfStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn af_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn af_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Kernel from the `[kernel]` section of a config text.
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_kernel_from_config(config: *const c_char, out: *mut *mut AfKernel) -> AfStatus {
    guard(|| {
        if out.is_null() {
            return fail(AfStatus::NullPointer, "out is null");
        }
        let text = match str_arg(config, "config") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg = match parse_config(text) {
            Ok(c) => c,
            Err(e) => return fail(AfStatus::Config, e.to_string()),
        };
        match cfg.kernel.spec() {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(AfKernel { spec }));
                AfStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// `scale · exp(-x² / (2 width²))`
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_kernel_gaussian(width: f64, scale: f64, out: *mut *mut AfKernel) -> AfStatus {
    guard(|| {
        if out.is_null() {
            return fail(AfStatus::NullPointer, "out is null");
        }
        match KernelSpec::gaussian(width).and_then(|g| KernelSpec::new(g.family().clone(), scale)) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(AfKernel { spec }));
                AfStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `kernel` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_kernel_eval(kernel: *const AfKernel, x: f64, out: *mut f64) -> AfStatus {
    guard(|| {
        if kernel.is_null() || out.is_null() {
            return fail(AfStatus::NullPointer, "null argument");
        }
        *out = (*kernel).spec.eval(x);
        AfStatus::Ok
    })
}

/// Analytic classification. `witness_frequency` receives a frequency with a
/// negative density for indefinite kernels, NaN otherwise; it may be null.
///
/// # Safety
/// `kernel` must come from this library; `verdict` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_kernel_classify(
    kernel: *const AfKernel,
    verdict: *mut AfVerdict,
    witness_frequency: *mut f64,
) -> AfStatus {
    guard(|| {
        if kernel.is_null() || verdict.is_null() {
            return fail(AfStatus::NullPointer, "null argument");
        }
        let c = (*kernel).spec.classify();
        *verdict = match c.verdict {
            Verdict::NonnegativeDefinite => AfVerdict::NonnegativeDefinite,
            Verdict::Indefinite => AfVerdict::Indefinite,
            Verdict::NumericOnly => AfVerdict::NumericOnly,
        };
        if !witness_frequency.is_null() {
            *witness_frequency = match c.witness {
                Some(Witness::Frequency(xi)) => xi,
                _ => f64::NAN,
            };
        }
        AfStatus::Ok
    })
}

/// # Safety
/// `kernel` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn af_kernel_free(kernel: *mut AfKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Discretizes `kernel` on the midpoint grid of `[a, b]` with `n` nodes and
/// keeps the eigenpairs above the default relative tolerance.
///
/// # Safety
/// `kernel` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_spectrum_new(
    kernel: *const AfKernel,
    a: f64,
    b: f64,
    n: usize,
    periodic: bool,
    out: *mut *mut AfSpectrum,
) -> AfStatus {
    guard(|| {
        if kernel.is_null() || out.is_null() {
            return fail(AfStatus::NullPointer, "null argument");
        }
        let boundary = if periodic { BoundaryMode::Periodic } else { BoundaryMode::Truncated };
        let grid = match Grid::new(a, b, n, boundary) {
            Ok(g) => g,
            Err(e) => return fail_with(e),
        };
        match KernelOperator::new((*kernel).spec.clone(), grid).decompose(DEFAULT_REL_TOL, DEFAULT_NEG_TOL) {
            Ok(dec) => {
                *out = Box::into_raw(Box::new(AfSpectrum { dec }));
                AfStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `spectrum` must come from this library; `rank` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_spectrum_rank(spectrum: *const AfSpectrum, rank: *mut usize) -> AfStatus {
    guard(|| {
        if spectrum.is_null() || rank.is_null() {
            return fail(AfStatus::NullPointer, "null argument");
        }
        *rank = (*spectrum).dec.rank();
        AfStatus::Ok
    })
}

/// Copies the retained eigenvalues, descending, into `buf[0..rank]`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn af_spectrum_lambdas(spectrum: *const AfSpectrum, buf: *mut f64, len: usize) -> AfStatus {
    guard(|| {
        if spectrum.is_null() || buf.is_null() {
            return fail(AfStatus::NullPointer, "null argument");
        }
        let l = (*spectrum).dec.lambdas();
        if len < l.len() {
            return fail(AfStatus::BufferTooSmall, format!("need {} entries, got {len}", l.len()));
        }
        ptr::copy_nonoverlapping(l.as_ptr(), buf, l.len());
        AfStatus::Ok
    })
}

/// Copies eigenfield `index` (0-based) sampled at the `n` grid nodes.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn af_spectrum_eigenfield(
    spectrum: *const AfSpectrum,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> AfStatus {
    guard(|| {
        if spectrum.is_null() || buf.is_null() {
            return fail(AfStatus::NullPointer, "null argument");
        }
        let dec = &(*spectrum).dec;
        if index >= dec.rank() {
            return fail_with(Error::IndexOutOfRange { index, len: dec.rank() });
        }
        let e = dec.eigenfield_raw(index);
        if len < e.len() {
            return fail(AfStatus::BufferTooSmall, format!("need {} entries, got {len}", e.len()));
        }
        ptr::copy_nonoverlapping(e.as_ptr(), buf, e.len());
        AfStatus::Ok
    })
}

/// # Safety
/// `spectrum` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn af_spectrum_free(spectrum: *mut AfSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Runs a CLI subcommand with a config text (null for defaults) and writes
/// its artifacts to `out_dir`. `exit_code` receives the CLI exit code
/// (0 success, 1 validation failure, 2 numerical failure).
///
/// # Safety
/// String arguments must be NUL-terminated; `exit_code` must be writable.
#[no_mangle]
pub unsafe extern "C" fn af_run(
    subcommand: *const c_char,
    config: *const c_char,
    out_dir: *const c_char,
    exit_code: *mut i32,
) -> AfStatus {
    guard(|| {
        if exit_code.is_null() {
            return fail(AfStatus::NullPointer, "exit_code is null");
        }
        let name = match str_arg(subcommand, "subcommand") {
            Ok(s) => s,
            Err(s) => return s,
        };
        if !SUBCOMMANDS.contains(&name) {
            return fail(AfStatus::InvalidParameter, format!("unknown subcommand `{name}`"));
        }
        let out = match str_arg(out_dir, "out_dir") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let parsed = if config.is_null() {
            Ok(base_config(name))
        } else {
            match str_arg(config, "config") {
                Ok(t) => parse_config_onto(t, base_config(name)),
                Err(s) => return s,
            }
        };
        let result = parsed.map_err(CliError::from).and_then(|cfg| run_subcommand(name, &cfg, Path::new(out)));
        match result {
            Ok(_) => {
                *exit_code = 0;
                AfStatus::Ok
            }
            Err(e) => {
                *exit_code = e.exit_code();
                let status = match &e {
                    CliError::Config(_) => AfStatus::Config,
                    CliError::Compute(err) => status_of(err),
                    CliError::Io(_) => AfStatus::Io,
                    CliError::Usage(_) => AfStatus::InvalidParameter,
                };
                fail(status, e.reason_line())
            }
        }
    })
}
