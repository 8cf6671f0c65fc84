//! C ABI over the commeco library.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`CommecoStatus`]; on failure, [`commeco_last_error`] describes it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use commeco::episodes::{extract_all, Episode, InteractionSign};
use commeco::pipeline::{Pipeline, PipelineConfig, PipelineError, Stage, StageStatus};
use commeco::smap::{jacobian_sequence, loocv_grid_search, preprocess, JacobianSequence, PreprocessOptions, SmapGrid, SmapHyperparameters};

/// Status codes; the nonzero pipeline codes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommecoStatus {
    Ok = 0,
    Failure = 1,
    ConfigError = 2,
    DependencyError = 3,
    NumericalError = 4,
    InvalidArgument = 5,
    NullPointer = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CommecoStatus, msg: impl Into<String>) -> CommecoStatus {
    set_error(msg);
    status
}

fn from_core(e: commeco::Error) -> CommecoStatus {
    let status = if e.is_numerical() {
        CommecoStatus::NumericalError
    } else {
        CommecoStatus::InvalidArgument
    };
    fail(status, e.to_string())
}

fn from_pipeline(e: PipelineError) -> CommecoStatus {
    let status = match e {
        PipelineError::Config(_) => CommecoStatus::ConfigError,
        PipelineError::Dependency(_) => CommecoStatus::DependencyError,
        PipelineError::Numerical(_) => CommecoStatus::NumericalError,
        PipelineError::Other(_) => CommecoStatus::Failure,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into [`CommecoStatus::Panic`].
fn guard(f: impl FnOnce() -> CommecoStatus) -> CommecoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CommecoStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, CommecoStatus> {
    if p.is_null() {
        return Err(fail(CommecoStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CommecoStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn commeco_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn commeco_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque S-Map Jacobian sequence.
pub struct CommecoJacobians(JacobianSequence);

/// Fits S-Map Jacobians to `n` series of length `t`, stored row-major in
/// `series` (`series[c * t + w]`; NaN marks a missing week). With
/// `theta < 0` the hyperparameters are chosen by leave-one-out
/// cross-validation over the default grid; otherwise `(theta, alpha, lambda)`
/// are used as given.
///
/// # Safety
/// `series` must point to `n * t` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn commeco_smap_fit(
    series: *const f64,
    n: usize,
    t: usize,
    theta: f64,
    alpha: f64,
    lambda: f64,
    out: *mut *mut CommecoJacobians,
) -> CommecoStatus {
    guard(|| {
        if series.is_null() || out.is_null() {
            return fail(CommecoStatus::NullPointer, "series or out is null");
        }
        if n == 0 || t == 0 {
            return fail(CommecoStatus::InvalidArgument, "n and t must be positive");
        }
        let data = std::slice::from_raw_parts(series, n * t);
        let cols: Vec<Vec<Option<f64>>> = data
            .chunks(t)
            .map(|c| c.iter().map(|&v| (!v.is_nan()).then_some(v)).collect())
            .collect();
        let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let fitted = preprocess("ffi", &names, &cols, 0, &PreprocessOptions::default()).and_then(|traj| {
            let hp = if theta < 0.0 {
                loocv_grid_search(&traj, &SmapGrid::default())?.selected_hyperparameters()
            } else {
                SmapHyperparameters::new(theta, alpha, lambda)?
            };
            jacobian_sequence(&traj, &hp)
        });
        match fitted {
            Ok(seq) => {
                *out = Box::into_raw(Box::new(CommecoJacobians(seq)));
                CommecoStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `j` must be null or a handle from [`commeco_smap_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn commeco_jacobians_free(j: *mut CommecoJacobians) {
    if !j.is_null() {
        drop(Box::from_raw(j));
    }
}

/// Number of communities.
///
/// # Safety
/// `j` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn commeco_jacobians_dim(j: *const CommecoJacobians) -> usize {
    j.as_ref().map_or(0, |j| j.0.dim())
}

/// Number of fitted steps.
///
/// # Safety
/// `j` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn commeco_jacobians_len(j: *const CommecoJacobians) -> usize {
    j.as_ref().map_or(0, |j| j.0.steps.len())
}

/// Week of step `step` and the effect of `source` on `target` there.
///
/// # Safety
/// `j` must be a live handle; `week` and `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn commeco_jacobians_get(
    j: *const CommecoJacobians,
    step: usize,
    target: usize,
    source: usize,
    week: *mut usize,
    value: *mut f64,
) -> CommecoStatus {
    guard(|| {
        let (Some(j), false, false) = (j.as_ref(), week.is_null(), value.is_null()) else {
            return fail(CommecoStatus::NullPointer, "null handle or output pointer");
        };
        let n = j.0.dim();
        let Some(s) = j.0.steps.get(step).filter(|_| target < n && source < n) else {
            return fail(CommecoStatus::InvalidArgument, "step, target or source out of range");
        };
        *week = s.week;
        *value = s.matrix[target][source];
        CommecoStatus::Ok
    })
}

/// One sign episode; `sign` is +1 for mutualism and -1 for competition.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommecoEpisode {
    pub target: usize,
    pub source: usize,
    pub start_week: usize,
    pub duration: usize,
    pub sign: i32,
    pub mean_strength: f64,
    pub mean_value: f64,
}

/// Opaque list of episodes.
pub struct CommecoEpisodes(Vec<CommecoEpisode>);

fn to_c(seq: &JacobianSequence, e: &Episode) -> CommecoEpisode {
    let idx = |name: &str| seq.index_of(name).unwrap_or(usize::MAX);
    CommecoEpisode {
        target: idx(&e.target),
        source: idx(&e.source),
        start_week: e.start_week,
        duration: e.duration,
        sign: match e.sign {
            InteractionSign::Mutualism => 1,
            InteractionSign::Competition => -1,
        },
        mean_strength: e.mean_strength,
        mean_value: e.mean_value,
    }
}

/// Extracts every off-diagonal sign episode.
///
/// # Safety
/// `j` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn commeco_episodes_extract(
    j: *const CommecoJacobians,
    out: *mut *mut CommecoEpisodes,
) -> CommecoStatus {
    guard(|| {
        let (Some(j), false) = (j.as_ref(), out.is_null()) else {
            return fail(CommecoStatus::NullPointer, "null handle or output pointer");
        };
        let list = extract_all(&j.0).iter().map(|e| to_c(&j.0, e)).collect();
        *out = Box::into_raw(Box::new(CommecoEpisodes(list)));
        CommecoStatus::Ok
    })
}

/// # Safety
/// `e` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn commeco_episodes_len(e: *const CommecoEpisodes) -> usize {
    e.as_ref().map_or(0, |e| e.0.len())
}

/// Copies episode `index` into `out`.
///
/// # Safety
/// `e` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn commeco_episodes_get(
    e: *const CommecoEpisodes,
    index: usize,
    out: *mut CommecoEpisode,
) -> CommecoStatus {
    guard(|| {
        let (Some(e), false) = (e.as_ref(), out.is_null()) else {
            return fail(CommecoStatus::NullPointer, "null handle or output pointer");
        };
        match e.0.get(index) {
            Some(ep) => {
                *out = *ep;
                CommecoStatus::Ok
            }
            None => fail(CommecoStatus::InvalidArgument, format!("episode index {index} out of range")),
        }
    })
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn commeco_episodes_free(e: *mut CommecoEpisodes) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Opaque pipeline bound to one configuration file.
pub struct CommecoPipeline(Pipeline);

/// Loads and validates a TOML configuration.
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn commeco_pipeline_open(config_path: *const c_char, out: *mut *mut CommecoPipeline) -> CommecoStatus {
    guard(|| {
        if out.is_null() {
            return fail(CommecoStatus::NullPointer, "out is null");
        }
        let path = match c_str(config_path, "config_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match PipelineConfig::load(Path::new(path)).and_then(Pipeline::new) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(CommecoPipeline(p)));
                CommecoStatus::Ok
            }
            Err(e) => from_pipeline(e),
        }
    })
}

/// Runs one stage by name (`"ingest"`, `"smap"`, ...). `up_to_date` (if not
/// null) is set to 1 when the stage had nothing to do.
///
/// # Safety
/// `p` must be a live handle and `stage` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn commeco_pipeline_run(
    p: *mut CommecoPipeline,
    stage: *const c_char,
    force: bool,
    up_to_date: *mut i32,
) -> CommecoStatus {
    guard(|| {
        let Some(p) = p.as_mut() else {
            return fail(CommecoStatus::NullPointer, "pipeline handle is null");
        };
        let name = match c_str(stage, "stage") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let Some(stage) = Stage::ALL.into_iter().find(|s| s.name() == name) else {
            return fail(CommecoStatus::InvalidArgument, format!("unknown stage `{name}`"));
        };
        p.0.force = force;
        match p.0.run(stage) {
            Ok(status) => {
                if !up_to_date.is_null() {
                    *up_to_date = i32::from(status == StageStatus::UpToDate);
                }
                CommecoStatus::Ok
            }
            Err(e) => from_pipeline(e),
        }
    })
}

/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn commeco_pipeline_free(p: *mut CommecoPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}
