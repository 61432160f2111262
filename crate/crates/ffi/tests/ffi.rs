use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use equisr_ffi::*;

const CONFIG: &str = r#"{"model": {"t": 4, "encoder": {"blocks": 1, "n": 2, "p": 3}, "inr": {"widths": [2, 8], "eps": 0.0}}}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(equisr_last_error()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn image(h: usize, w: usize, c: usize) -> *mut EquisrImage {
    let data: Vec<f64> = (0..h * w * c)
        .map(|i| ((i * 29) % 256) as f64 / 255.0)
        .collect();
    let mut img = ptr::null_mut();
    assert_eq!(
        unsafe { equisr_image_new(h, w, c, data.as_ptr(), &mut img) },
        EquisrStatus::Ok
    );
    img
}

fn shape(img: *const EquisrImage) -> (usize, usize, usize) {
    let (mut h, mut w, mut c) = (0, 0, 0);
    assert_eq!(
        unsafe { equisr_image_shape(img, &mut h, &mut w, &mut c) },
        EquisrStatus::Ok
    );
    (h, w, c)
}

fn model() -> *mut EquisrModel {
    let cfg = CString::new(CONFIG).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { equisr_model_random(cfg.as_ptr(), 3, &mut m) },
        EquisrStatus::Ok,
        "{}",
        last_error()
    );
    m
}

#[test]
fn image_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("x.ppm").to_str().unwrap()).unwrap();
    let img = image(4, 5, 3);
    unsafe {
        assert_eq!(equisr_image_write(img, path.as_ptr()), EquisrStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(
            equisr_image_read(path.as_ptr(), &mut back),
            EquisrStatus::Ok
        );
        assert_eq!(shape(back), (4, 5, 3));
        let a = std::slice::from_raw_parts(equisr_image_data(img), 60);
        let b = std::slice::from_raw_parts(equisr_image_data(back), 60);
        assert_eq!(a, b);
        equisr_image_free(back);
        equisr_image_free(img);
    }
}

#[test]
fn super_resolution_and_exact_quarter_turns() {
    let (m, img) = (model(), image(8, 8, 3));
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            equisr_super_resolve(m, img, 2.5, &mut out),
            EquisrStatus::Ok
        );
        assert_eq!(shape(out), (20, 20, 3));
        let (mut e2, mut e1) = (f64::NAN, f64::NAN);
        let s =
            equisr_equivariance_error(m, img, std::f64::consts::FRAC_PI_2, 2.0, &mut e2, &mut e1);
        assert_eq!(s, EquisrStatus::Ok);
        assert!(e2 <= 1e-6 && e1 <= 1e-6, "{e2} {e1}");
        equisr_image_free(out);
        equisr_image_free(img);
        equisr_model_free(m);
    }
}

#[test]
fn failures_map_to_status_codes_with_messages() {
    unsafe {
        let mut img = ptr::null_mut();
        let missing = CString::new("/nonexistent/x.ppm").unwrap();
        assert_eq!(
            equisr_image_read(missing.as_ptr(), &mut img),
            EquisrStatus::Io
        );
        assert!(last_error().contains("/nonexistent/x.ppm"));
        assert!(img.is_null());

        let bad = CString::new(r#"{"model": {"colour": 1}}"#).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(
            equisr_model_random(bad.as_ptr(), 0, &mut m),
            EquisrStatus::Config
        );
        assert!(last_error().contains("colour"), "{}", last_error());

        let data = [0.0; 4];
        assert_eq!(
            equisr_image_new(usize::MAX, 2, 1, data.as_ptr(), &mut img),
            EquisrStatus::InvalidArgument
        );
        assert_eq!(
            equisr_image_new(1, 1, 1, ptr::null(), &mut img),
            EquisrStatus::InvalidArgument
        );

        let (m, small) = (model(), image(4, 4, 3));
        let mut out = ptr::null_mut();
        assert_eq!(
            equisr_super_resolve(m, small, 0.5, &mut out),
            EquisrStatus::Domain,
            "{}",
            last_error()
        );
        assert_eq!(
            equisr_super_resolve(m, small, 2.0, &mut out),
            EquisrStatus::Ok
        );
        assert_eq!(last_error(), "");
        equisr_image_free(out);
        equisr_image_free(small);
        equisr_model_free(m);
        equisr_image_free(ptr::null_mut());
        equisr_model_free(ptr::null_mut());
    }
}

#[test]
fn malformed_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, "{\"version\": 7}").unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { equisr_model_load(p.as_ptr(), &mut m) },
        EquisrStatus::Checkpoint
    );
}

/// `target/<profile>`, where cargo puts the shared library.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/equisr.h");
    assert!(std::fs::read_to_string(&header)
        .unwrap()
        .contains("equisr_super_resolve"));
    let lib_dir = profile_dir();
    assert!(
        lib_dir.join("libequisr_ffi.so").is_file(),
        "no shared library in {}",
        lib_dir.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-D_DEFAULT_SOURCE", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(crate_dir.join("tests/smoke.c"))
        .arg(format!("-I{}", crate_dir.join("include").display()))
        .arg(format!("-L{}", lib_dir.display()))
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .args(["-lequisr_ffi", "-lm"])
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0.1.0 12x12"));
}
