//! C ABI for the `bures` library.
//!
//! The surface follows the usual C-binding conventions: opaque handles
//! created and freed by this library, status codes for every fallible call,
//! caller-provided output buffers, and a per-thread last-error message.
//! Matrices cross the boundary as row-major `double` buffers.
//!
//! The matching header is generated into `include/bures.h` at build time.
//!
//! Ownership rules:
//! - every `*_new`/`*_from_*`/`*_gd`/`*_sgd_*` out-handle is owned by the
//!   caller and must be released with the matching `*_free`,
//! - strings returned by `bures_dataset_to_json` are released with
//!   `bures_string_free`,
//! - `bures_last_error_message` stays valid until the next failing call on
//!   the same thread.
//!
//! Safety contract, shared by every `unsafe` function here: pointer
//! arguments must be valid for the documented lengths (`dim`, `dim*dim`,
//! `n_atoms*dim*dim`, or NUL-terminated for strings), out-pointers must be
//! writable, and handles must originate from this library and not be used
//! after being freed. Nullable arguments are called out per function.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bures::dataset::DatasetFile;
use bures::geometry::{w2_distance_sq, BuresDistribution, GaussianMeasure};
use bures::solver;
use bures::spd::{Matrix, SpdMatrix};
use bures::{Error, StepSchedule};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuresStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPositiveSemidefinite = 3,
    SingularMatrix = 4,
    DimensionMismatch = 5,
    EigNotConverged = 6,
    NotAdmissible = 7,
    NotRegular = 8,
    ScheduleError = 9,
    ParseError = 10,
    IoError = 11,
    Panic = 12,
}

/// Opaque Gaussian measure handle.
pub struct BuresMeasure(GaussianMeasure);

/// Opaque weighted-dataset handle.
pub struct BuresDataset(BuresDistribution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> BuresStatus {
    match err {
        Error::NonConvergence { .. } => BuresStatus::EigNotConverged,
        Error::NotPsd { .. } => BuresStatus::NotPositiveSemidefinite,
        Error::SingularMatrix { .. } => BuresStatus::SingularMatrix,
        Error::DimensionMismatch { .. } => BuresStatus::DimensionMismatch,
        Error::ExpNotAdmissible { .. } => BuresStatus::NotAdmissible,
        Error::ScheduleExhausted { .. } | Error::InvalidSchedule(_) => BuresStatus::ScheduleError,
        Error::NotRegular { .. } => BuresStatus::NotRegular,
        Error::DegenerateFit(_) | Error::InvalidInput(_) => BuresStatus::InvalidArgument,
        Error::Io(_) => BuresStatus::IoError,
        Error::Parse(_) => BuresStatus::ParseError,
    }
}

fn fail(err: Error) -> BuresStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guard(body: impl FnOnce() -> BuresStatus) -> BuresStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic across the C boundary".to_string());
            set_error(&msg);
            BuresStatus::Panic
        }
    }
}

macro_rules! nonnull {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(concat!("null pointer: ", stringify!($ptr)));
            return BuresStatus::NullPointer;
        }
    };
}

/// Message describing the most recent failure on this thread. Never null;
/// empty before the first failure. Valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn bures_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bures_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

/// Creates a Gaussian measure from a mean (nullable: zeros) and a row-major
/// `dim x dim` covariance. The covariance must be symmetric positive
/// semidefinite.
#[no_mangle]
pub unsafe extern "C" fn bures_measure_new(
    dim: usize,
    mean: *const f64,
    cov_row_major: *const f64,
    out: *mut *mut BuresMeasure,
) -> BuresStatus {
    guard(|| {
        nonnull!(out);
        nonnull!(cov_row_major);
        if dim == 0 {
            set_error("dim must be at least 1");
            return BuresStatus::InvalidArgument;
        }
        let cov_slice = std::slice::from_raw_parts(cov_row_major, dim * dim);
        let mat = match Matrix::from_row_major(dim, cov_slice.to_vec()) {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        let cov = match SpdMatrix::new(mat) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let mean_vec = if mean.is_null() {
            vec![0.0; dim]
        } else {
            std::slice::from_raw_parts(mean, dim).to_vec()
        };
        match GaussianMeasure::new(mean_vec, cov) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(BuresMeasure(m)));
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn bures_measure_free(measure: *mut BuresMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bures_measure_dim(
    measure: *const BuresMeasure,
    out: *mut usize,
) -> BuresStatus {
    guard(|| {
        nonnull!(measure);
        nonnull!(out);
        *out = (*measure).0.dim();
        BuresStatus::Ok
    })
}

/// Copies the mean into a caller buffer of length `dim`.
#[no_mangle]
pub unsafe extern "C" fn bures_measure_mean(
    measure: *const BuresMeasure,
    buf: *mut f64,
) -> BuresStatus {
    guard(|| {
        nonnull!(measure);
        nonnull!(buf);
        let m = &(*measure).0;
        std::slice::from_raw_parts_mut(buf, m.dim()).copy_from_slice(m.mean());
        BuresStatus::Ok
    })
}

/// Copies the covariance, row-major, into a caller buffer of length
/// `dim * dim`.
#[no_mangle]
pub unsafe extern "C" fn bures_measure_cov(
    measure: *const BuresMeasure,
    buf: *mut f64,
) -> BuresStatus {
    guard(|| {
        nonnull!(measure);
        nonnull!(buf);
        let m = &(*measure).0;
        let dim = m.dim();
        std::slice::from_raw_parts_mut(buf, dim * dim)
            .copy_from_slice(m.cov().as_matrix().as_slice());
        BuresStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Builds a dataset from parallel arrays: `n_atoms` weights (must be
/// positive and sum to 1 within 1e-9; renormalized exactly), optional means
/// (`n_atoms * dim`, nullable for centered atoms), and covariances
/// (`n_atoms * dim * dim`, row-major, atom-major).
#[no_mangle]
pub unsafe extern "C" fn bures_dataset_new(
    dim: usize,
    n_atoms: usize,
    weights: *const f64,
    means: *const f64,
    covs_row_major: *const f64,
    out: *mut *mut BuresDataset,
) -> BuresStatus {
    guard(|| {
        nonnull!(out);
        nonnull!(weights);
        nonnull!(covs_row_major);
        if dim == 0 || n_atoms == 0 {
            set_error("dim and n_atoms must be at least 1");
            return BuresStatus::InvalidArgument;
        }
        let weights = std::slice::from_raw_parts(weights, n_atoms);
        let covs = std::slice::from_raw_parts(covs_row_major, n_atoms * dim * dim);
        let means_slice = if means.is_null() {
            None
        } else {
            Some(std::slice::from_raw_parts(means, n_atoms * dim))
        };

        let file = DatasetFile {
            dim,
            atoms: (0..n_atoms)
                .map(|i| bures::dataset::AtomRecord {
                    weight: weights[i],
                    mean: means_slice
                        .map(|m| m[i * dim..(i + 1) * dim].to_vec())
                        .unwrap_or_else(|| vec![0.0; dim]),
                    cov: (0..dim)
                        .map(|r| {
                            covs[i * dim * dim + r * dim..i * dim * dim + (r + 1) * dim].to_vec()
                        })
                        .collect(),
                })
                .collect(),
        };
        match file.into_distribution() {
            Ok(q) => {
                *out = Box::into_raw(Box::new(BuresDataset(q)));
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses a dataset from JSON text (same schema as the CLI dataset files).
#[no_mangle]
pub unsafe extern "C" fn bures_dataset_from_json(
    text: *const c_char,
    out: *mut *mut BuresDataset,
) -> BuresStatus {
    guard(|| {
        nonnull!(text);
        nonnull!(out);
        let text = match CStr::from_ptr(text).to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("dataset JSON is not valid UTF-8");
                return BuresStatus::ParseError;
            }
        };
        match bures::dataset::dataset_from_json(text) {
            Ok(q) => {
                *out = Box::into_raw(Box::new(BuresDataset(q)));
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes a dataset to JSON. Free the returned string with
/// `bures_string_free`.
#[no_mangle]
pub unsafe extern "C" fn bures_dataset_to_json(
    dataset: *const BuresDataset,
    out: *mut *mut c_char,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(out);
        let text = bures::dataset::dataset_to_json(&(*dataset).0);
        match CString::new(text) {
            Ok(s) => {
                *out = s.into_raw();
                BuresStatus::Ok
            }
            Err(_) => {
                set_error("serialized JSON contains a NUL byte");
                BuresStatus::ParseError
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn bures_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bures_dataset_free(dataset: *mut BuresDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bures_dataset_len(
    dataset: *const BuresDataset,
    out: *mut usize,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(out);
        *out = (*dataset).0.len();
        BuresStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn bures_dataset_dim(
    dataset: *const BuresDataset,
    out: *mut usize,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(out);
        *out = (*dataset).0.dim();
        BuresStatus::Ok
    })
}

/// Clones atom `index` out of the dataset as a standalone measure handle.
#[no_mangle]
pub unsafe extern "C" fn bures_dataset_atom(
    dataset: *const BuresDataset,
    index: usize,
    out: *mut *mut BuresMeasure,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(out);
        let q = &(*dataset).0;
        if index >= q.len() {
            set_error(&format!(
                "atom index {index} out of range ({} atoms)",
                q.len()
            ));
            return BuresStatus::InvalidArgument;
        }
        *out = Box::into_raw(Box::new(BuresMeasure(q.atom(index).clone())));
        BuresStatus::Ok
    })
}

/// Largest `zeta` for which every atom satisfies `det cov >= zeta`.
#[no_mangle]
pub unsafe extern "C" fn bures_dataset_zeta(
    dataset: *const BuresDataset,
    out: *mut f64,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(out);
        *out = (*dataset).0.zeta();
        BuresStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Geometry and functional evaluations
// ---------------------------------------------------------------------------

/// Squared 2-Wasserstein distance between two measures.
#[no_mangle]
pub unsafe extern "C" fn bures_w2_distance_sq(
    a: *const BuresMeasure,
    b: *const BuresMeasure,
    out: *mut f64,
) -> BuresStatus {
    guard(|| {
        nonnull!(a);
        nonnull!(b);
        nonnull!(out);
        match w2_distance_sq(&(*a).0, &(*b).0) {
            Ok(v) => {
                *out = v;
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Barycenter objective `G(b) = 1/2 sum_i w_i W2^2(b, mu_i)`.
#[no_mangle]
pub unsafe extern "C" fn bures_objective(
    dataset: *const BuresDataset,
    point: *const BuresMeasure,
    out: *mut f64,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(point);
        nonnull!(out);
        match solver::objective(&(*dataset).0, &(*point).0) {
            Ok(v) => {
                *out = v;
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Squared norm of the barycenter-functional gradient at `point`.
#[no_mangle]
pub unsafe extern "C" fn bures_grad_norm_sq(
    dataset: *const BuresDataset,
    point: *const BuresMeasure,
    out: *mut f64,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(point);
        nonnull!(out);
        match solver::grad_norm_sq(&(*dataset).0, &(*point).0) {
            Ok(v) => {
                *out = v;
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Residual of the barycenter fixed-point equation at `point`.
#[no_mangle]
pub unsafe extern "C" fn bures_fixed_point_residual(
    dataset: *const BuresDataset,
    point: *const BuresMeasure,
    out: *mut f64,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(point);
        nonnull!(out);
        match solver::fixed_point_residual(&(*dataset).0, &(*point).0) {
            Ok(v) => {
                *out = v;
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Unit-step gradient descent. `init` is nullable (defaults to the heaviest
/// atom). On success `*out` holds the final measure; `out_iterations` and
/// `out_converged` are optional.
#[no_mangle]
pub unsafe extern "C" fn bures_gd(
    dataset: *const BuresDataset,
    init: *const BuresMeasure,
    max_iters: usize,
    tol: f64,
    out: *mut *mut BuresMeasure,
    out_iterations: *mut usize,
    out_converged: *mut c_int,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(out);
        let q = &(*dataset).0;
        let init_measure = if init.is_null() {
            solver::default_init(q).clone()
        } else {
            (*init).0.clone()
        };
        match solver::gd(q, &init_measure, max_iters, tol, None) {
            Ok(result) => {
                if !out_iterations.is_null() {
                    *out_iterations = result.iterations;
                }
                if !out_converged.is_null() {
                    *out_converged = result.converged as c_int;
                }
                *out = Box::into_raw(Box::new(BuresMeasure(result.final_measure)));
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// SGD sampling atoms with replacement for `iters` iterations, deterministic
/// given `seed`. `schedule_spec` uses the schedule mini-grammar
/// (`paper_pl:c=...`, `exp:c=...`, `const:...`, `file:...`).
#[no_mangle]
pub unsafe extern "C" fn bures_sgd_with_replacement(
    dataset: *const BuresDataset,
    init: *const BuresMeasure,
    schedule_spec: *const c_char,
    iters: usize,
    seed: u64,
    out: *mut *mut BuresMeasure,
) -> BuresStatus {
    guard(|| {
        nonnull!(dataset);
        nonnull!(schedule_spec);
        nonnull!(out);
        let spec = match CStr::from_ptr(schedule_spec).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("schedule spec is not valid UTF-8");
                return BuresStatus::ParseError;
            }
        };
        let schedule = match StepSchedule::parse_spec(spec) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let q = &(*dataset).0;
        let init_measure = if init.is_null() {
            solver::default_init(q).clone()
        } else {
            (*init).0.clone()
        };
        match solver::sgd_with_replacement(q, &init_measure, &schedule, iters, seed, false, None) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(BuresMeasure(result.final_measure)));
                BuresStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
