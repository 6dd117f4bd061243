use std::ffi::{CStr, CString};
use std::ptr;

use amari_flow_ffi::*;

fn last_error() -> String {
    let p = af_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn gaussian(width: f64) -> *mut AfKernel {
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { af_kernel_gaussian(width, 1.0, &mut k) }, AfStatus::Ok);
    assert!(!k.is_null());
    k
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(af_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn kernel_eval_and_classify() {
    let k = gaussian(1.0);
    let mut y = 0.0;
    unsafe {
        assert_eq!(af_kernel_eval(k, 0.0, &mut y), AfStatus::Ok);
        assert_eq!(y, 1.0);
        assert_eq!(af_kernel_eval(k, 2.0, &mut y), AfStatus::Ok);
        assert!((y - (-2.0f64).exp()).abs() < 1e-15);
        let mut v = AfVerdict::Indefinite;
        let mut w = 0.0;
        assert_eq!(af_kernel_classify(k, &mut v, &mut w), AfStatus::Ok);
        assert_eq!(v, AfVerdict::NonnegativeDefinite);
        assert!(w.is_nan());
        assert_eq!(af_kernel_classify(k, &mut v, ptr::null_mut()), AfStatus::Ok);
        af_kernel_free(k);
    }
}

#[test]
fn kernel_from_config_reports_witness() {
    let text = CString::new("[kernel]\nfamily = mexican-hat-gauss\na = 0.9\ns = 3.0\n").unwrap();
    let mut k = ptr::null_mut();
    unsafe {
        assert_eq!(af_kernel_from_config(text.as_ptr(), &mut k), AfStatus::Ok);
        let mut v = AfVerdict::NonnegativeDefinite;
        let mut w = f64::NAN;
        assert_eq!(af_kernel_classify(k, &mut v, &mut w), AfStatus::Ok);
        assert_eq!(v, AfVerdict::Indefinite);
        assert!(w.is_finite());
        af_kernel_free(k);
    }
}

#[test]
fn bad_config_sets_message() {
    let text = CString::new("[kernel]\nnot_a_key = 1\n").unwrap();
    let mut k = ptr::null_mut();
    let s = unsafe { af_kernel_from_config(text.as_ptr(), &mut k) };
    assert_eq!(s, AfStatus::Config);
    assert!(k.is_null());
    assert!(last_error().contains("not_a_key"));
}

#[test]
fn null_and_range_errors() {
    unsafe {
        let mut y = 0.0;
        assert_eq!(af_kernel_eval(ptr::null(), 0.0, &mut y), AfStatus::NullPointer);
        assert_eq!(af_kernel_gaussian(1.0, 1.0, ptr::null_mut()), AfStatus::NullPointer);
        let mut k = ptr::null_mut();
        assert_eq!(af_kernel_gaussian(-1.0, 1.0, &mut k), AfStatus::InvalidParameter);
        assert!(k.is_null());
        af_kernel_free(ptr::null_mut());
        af_spectrum_free(ptr::null_mut());
    }
}

#[test]
fn spectrum_roundtrip() {
    let k = gaussian(1.0);
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(af_spectrum_new(k, -5.0, 5.0, 64, false, &mut s), AfStatus::Ok);
        let mut r = 0usize;
        assert_eq!(af_spectrum_rank(s, &mut r), AfStatus::Ok);
        assert!(r > 0 && r <= 64);

        let mut small = vec![0.0; r - 1];
        assert_eq!(af_spectrum_lambdas(s, small.as_mut_ptr(), small.len()), AfStatus::BufferTooSmall);
        let mut lam = vec![0.0; r];
        assert_eq!(af_spectrum_lambdas(s, lam.as_mut_ptr(), r), AfStatus::Ok);
        assert!(lam.windows(2).all(|w| w[0] >= w[1]));
        assert!(lam[r - 1] > 0.0);

        let mut e = vec![0.0; 64];
        assert_eq!(af_spectrum_eigenfield(s, 0, e.as_mut_ptr(), 64), AfStatus::Ok);
        let h = 10.0 / 64.0;
        let norm: f64 = e.iter().map(|v| v * v * h).sum();
        assert!((norm - 1.0).abs() < 1e-10, "{norm}");
        assert_eq!(af_spectrum_eigenfield(s, r, e.as_mut_ptr(), 64), AfStatus::IndexOutOfRange);

        af_spectrum_free(s);
        af_kernel_free(k);
    }
}

#[test]
fn indefinite_kernel_is_rejected_by_spectrum() {
    let text = CString::new("[kernel]\nfamily = mexican-hat-gauss\na = 0.9\ns = 3.0\n").unwrap();
    let mut k = ptr::null_mut();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(af_kernel_from_config(text.as_ptr(), &mut k), AfStatus::Ok);
        assert_eq!(af_spectrum_new(k, -10.0, 10.0, 128, true, &mut s), AfStatus::NotNonnegative);
        assert!(s.is_null());
        af_kernel_free(k);
    }
}

#[test]
fn run_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut code = -1;
    unsafe {
        let name = CString::new("spectrum").unwrap();
        assert_eq!(af_run(name.as_ptr(), ptr::null(), out.as_ptr(), &mut code), AfStatus::Ok);
        assert_eq!(code, 0);
        assert!(dir.path().join("spectrum.csv").exists());

        let name = CString::new("simulate").unwrap();
        let cfg = CString::new("[kernel]\nfamily = mexican-hat-gauss\na = 0.9\ns = 3.0\n[grid]\na = -10\nb = 10\nn = 128\nboundary = periodic\n").unwrap();
        assert_eq!(af_run(name.as_ptr(), cfg.as_ptr(), out.as_ptr(), &mut code), AfStatus::NotNonnegative);
        assert_eq!(code, 2);
        assert!(last_error().contains("\"exit\":2"));

        let name = CString::new("bogus").unwrap();
        assert_eq!(af_run(name.as_ptr(), ptr::null(), out.as_ptr(), &mut code), AfStatus::InvalidParameter);
    }
}
