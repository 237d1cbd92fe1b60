//! Exercises the C ABI from Rust (same call sequence a binding would make)
//! and, when a C compiler is present, compiles and runs a C smoke program
//! against the generated header and static library.

use std::ffi::{c_int, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use bures_ffi::*;

fn status_name(s: BuresStatus) -> String {
    format!("{s:?}")
}

#[test]
fn measure_round_trip_and_distance() {
    unsafe {
        let cov_a = [1.0, 0.0, 0.0, 1.0];
        let cov_b = [4.0, 0.0, 0.0, 4.0];

        let mut a: *mut BuresMeasure = ptr::null_mut();
        let mut b: *mut BuresMeasure = ptr::null_mut();
        assert_eq!(
            bures_measure_new(2, ptr::null(), cov_a.as_ptr(), &mut a),
            BuresStatus::Ok
        );
        assert_eq!(
            bures_measure_new(2, ptr::null(), cov_b.as_ptr(), &mut b),
            BuresStatus::Ok
        );

        let mut dim = 0usize;
        assert_eq!(bures_measure_dim(a, &mut dim), BuresStatus::Ok);
        assert_eq!(dim, 2);

        let mut buf = [0.0f64; 4];
        assert_eq!(bures_measure_cov(b, buf.as_mut_ptr()), BuresStatus::Ok);
        assert_eq!(buf, cov_b);

        let mut w2 = -1.0f64;
        assert_eq!(bures_w2_distance_sq(a, b, &mut w2), BuresStatus::Ok);
        assert!((w2 - 2.0).abs() < 1e-12, "expected D*(2-1)^2 = 2, got {w2}");

        bures_measure_free(a);
        bures_measure_free(b);
    }
}

#[test]
fn invalid_covariance_reports_error() {
    unsafe {
        let asym = [1.0, 0.5, 0.0, 1.0];
        let mut m: *mut BuresMeasure = ptr::null_mut();
        let status = bures_measure_new(2, ptr::null(), asym.as_ptr(), &mut m);
        assert_eq!(
            status,
            BuresStatus::InvalidArgument,
            "got {}",
            status_name(status)
        );
        let msg = CStr::from_ptr(bures_last_error_message()).to_string_lossy();
        assert!(msg.contains("symmetric"), "message: {msg}");

        let indefinite = [1.0, 0.0, 0.0, -1.0];
        let status = bures_measure_new(2, ptr::null(), indefinite.as_ptr(), &mut m);
        assert_eq!(status, BuresStatus::NotPositiveSemidefinite);

        let status = bures_measure_new(2, ptr::null(), ptr::null(), &mut m);
        assert_eq!(status, BuresStatus::NullPointer);
    }
}

#[test]
fn dataset_solving_through_the_c_surface() {
    unsafe {
        // Two centered scalar atoms, variances 1 and 4.
        let weights = [0.5, 0.5];
        let covs = [1.0, 4.0];
        let mut ds: *mut BuresDataset = ptr::null_mut();
        assert_eq!(
            bures_dataset_new(1, 2, weights.as_ptr(), ptr::null(), covs.as_ptr(), &mut ds),
            BuresStatus::Ok
        );

        let mut len = 0usize;
        assert_eq!(bures_dataset_len(ds, &mut len), BuresStatus::Ok);
        assert_eq!(len, 2);
        let mut zeta = 0.0f64;
        assert_eq!(bures_dataset_zeta(ds, &mut zeta), BuresStatus::Ok);
        assert!((zeta - 1.0).abs() < 1e-12);

        let mut bary: *mut BuresMeasure = ptr::null_mut();
        let mut iters = 0usize;
        let mut converged: c_int = 0;
        assert_eq!(
            bures_gd(
                ds,
                ptr::null(),
                100,
                1e-12,
                &mut bary,
                &mut iters,
                &mut converged
            ),
            BuresStatus::Ok
        );
        assert_eq!(converged, 1);
        let mut var = [0.0f64];
        assert_eq!(bures_measure_cov(bary, var.as_mut_ptr()), BuresStatus::Ok);
        assert!(
            (var[0] - 2.25).abs() < 1e-10,
            "barycenter variance {}",
            var[0]
        );

        let mut residual = -1.0;
        assert_eq!(
            bures_fixed_point_residual(ds, bary, &mut residual),
            BuresStatus::Ok
        );
        assert!(residual < 1e-6);

        let mut objective = -1.0;
        assert_eq!(bures_objective(ds, bary, &mut objective), BuresStatus::Ok);
        assert!((objective - 0.125).abs() < 1e-10);

        // Stochastic solve through the same surface.
        let spec = CString::new("exp:c=0.7").unwrap();
        let mut sgd_out: *mut BuresMeasure = ptr::null_mut();
        assert_eq!(
            bures_sgd_with_replacement(ds, ptr::null(), spec.as_ptr(), 400, 7, &mut sgd_out),
            BuresStatus::Ok
        );
        let mut sgd_var = [0.0f64];
        assert_eq!(
            bures_measure_cov(sgd_out, sgd_var.as_mut_ptr()),
            BuresStatus::Ok
        );
        assert!(
            (sgd_var[0] - 2.25).abs() < 0.2,
            "sgd variance {}",
            sgd_var[0]
        );

        bures_measure_free(bary);
        bures_measure_free(sgd_out);
        bures_dataset_free(ds);
    }
}

#[test]
fn json_round_trip_through_the_c_surface() {
    unsafe {
        let json = CString::new(
            r#"{"dim":1,"atoms":[
                {"weight":0.5,"mean":[0.0],"cov":[[1.0]]},
                {"weight":0.5,"mean":[0.0],"cov":[[4.0]]}
            ]}"#,
        )
        .unwrap();
        let mut ds: *mut BuresDataset = ptr::null_mut();
        assert_eq!(
            bures_dataset_from_json(json.as_ptr(), &mut ds),
            BuresStatus::Ok
        );

        let mut text: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(bures_dataset_to_json(ds, &mut text), BuresStatus::Ok);
        let round = CStr::from_ptr(text).to_string_lossy().to_string();
        assert!(round.contains("\"dim\": 1"));
        bures_string_free(text);

        let mut atom: *mut BuresMeasure = ptr::null_mut();
        assert_eq!(bures_dataset_atom(ds, 1, &mut atom), BuresStatus::Ok);
        let mut v = [0.0];
        assert_eq!(bures_measure_cov(atom, v.as_mut_ptr()), BuresStatus::Ok);
        assert_eq!(v[0], 4.0);
        assert_eq!(
            bures_dataset_atom(ds, 5, &mut atom),
            BuresStatus::InvalidArgument
        );

        let bad = CString::new("{not json").unwrap();
        assert_eq!(
            bures_dataset_from_json(bad.as_ptr(), &mut ds),
            BuresStatus::ParseError
        );

        bures_measure_free(atom);
        bures_dataset_free(ds);
    }
}

#[test]
fn version_is_exposed() {
    unsafe {
        let v = CStr::from_ptr(bures_version()).to_string_lossy();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

/// Compile and run a C program against include/bures.h and the staticlib.
///
/// Running the library target under `cargo test` only produces the rlib the
/// harness links against, so the staticlib is built here explicitly, into
/// the integration-test scratch directory (a separate target dir avoids
/// contending for the parent cargo's build lock).
#[test]
fn c_program_links_and_runs() {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".to_string());
    let scratch = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("capi-target");
    let build = std::process::Command::new(&cargo)
        .args(["build", "-p", "bures-ffi", "--target-dir"])
        .arg(&scratch)
        .output()
        .expect("cargo runs");
    assert!(
        build.status.success(),
        "staticlib build failed:\n{}",
        String::from_utf8_lossy(&build.stderr)
    );
    let staticlib = scratch.join("debug").join("libbures_ffi.a");
    assert!(staticlib.exists(), "static library not found at {}", staticlib.display());

    let include_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".to_string());
    if std::process::Command::new(&cc)
        .arg("--version")
        .output()
        .is_err()
    {
        eprintln!("no C compiler available; skipping link check");
        return;
    }

    let dir = std::env::temp_dir().join(format!("bures-capi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let c_src = dir.join("smoke.c");
    std::fs::write(
        &c_src,
        r#"
#include <stdio.h>
#include "bures.h"

int main(void) {
    double weights[2] = {0.5, 0.5};
    double covs[2] = {1.0, 4.0};
    BuresDataset *ds = NULL;
    if (bures_dataset_new(1, 2, weights, NULL, covs, &ds) != BURES_STATUS_OK) return 1;

    BuresMeasure *bary = NULL;
    size_t iters = 0;
    int converged = 0;
    if (bures_gd(ds, NULL, 100, 1e-12, &bary, &iters, &converged) != BURES_STATUS_OK) return 2;
    if (!converged) return 3;

    double var = 0.0;
    if (bures_measure_cov(bary, &var) != BURES_STATUS_OK) return 4;
    if (var < 2.2499999 || var > 2.2500001) return 5;

    printf("barycenter variance %.12f after %zu iterations\n", var, iters);
    bures_measure_free(bary);
    bures_dataset_free(ds);
    return 0;
}
"#,
    )
    .unwrap();

    let exe = dir.join("smoke");
    let compile = std::process::Command::new(&cc)
        .arg(&c_src)
        .arg("-I")
        .arg(&include_dir)
        .arg(&staticlib)
        .arg("-lpthread")
        .arg("-ldl")
        .arg("-lm")
        .arg("-o")
        .arg(&exe)
        .output()
        .expect("compiler runs");
    assert!(
        compile.status.success(),
        "C compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = std::process::Command::new(&exe)
        .output()
        .expect("smoke binary runs");
    assert!(
        run.status.success(),
        "C smoke program exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(
        stdout.contains("barycenter variance 2.25"),
        "stdout: {stdout}"
    );

    std::fs::remove_dir_all(&dir).ok();
}
