//! C ABI over the `swellcp` library.
//!
//! Models are loaded from the JSON files written by the `swellcp` CLI and
//! handed out as opaque pointers. Every fallible call returns a
//! [`SwellcpStatus`]; on failure a message is available from
//! [`swellcp_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary and are reported as
//! `SWELLCP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use swellcp::conformal::{self, ConformalCalibrator};
use swellcp::data::{Features, IrradiationType, N_CONTINUOUS, N_FEATURES};
use swellcp::model::ModelFile;
use swellcp::{Error, TargetSpace, TargetTransform};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwellcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Schema = 4,
    Config = 5,
    State = 6,
    Domain = 7,
    Panic = 8,
}

/// Physical-scale interval plus the model-space values it came from.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwellcpInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Model-space (log) prediction and bounds. Equal to the physical values
    /// for raw-space models.
    pub log_point: f64,
    pub log_lower: f64,
    pub log_upper: f64,
    pub alpha: f64,
    /// Nonzero when the conformal rank exceeds the calibration size.
    pub unbounded: i32,
}

/// Opaque model handle.
pub struct SwellcpModel {
    inner: ModelFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SwellcpStatus, msg: impl Into<String>) -> SwellcpStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> SwellcpStatus {
    let status = match &e {
        Error::Schema(_) => SwellcpStatus::Schema,
        Error::Config(_) => SwellcpStatus::Config,
        Error::State(_) => SwellcpStatus::State,
        Error::Domain(_) => SwellcpStatus::Domain,
        Error::Io { .. } | Error::Json { .. } | Error::Csv(_) => SwellcpStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard<F>(f: F) -> SwellcpStatus
where
    F: FnOnce() -> Result<(), SwellcpStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwellcpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(SwellcpStatus::Panic, "internal panic"),
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), SwellcpStatus> {
    if p.is_null() {
        Err(fail(SwellcpStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], SwellcpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `model` must be null or a live handle from [`swellcp_model_load`].
unsafe fn model_ref<'a>(model: *const SwellcpModel) -> Result<&'a ModelFile, SwellcpStatus> {
    non_null(model, "model")?;
    Ok(&(*model).inner)
}

fn check_width(n_features: usize) -> Result<(), SwellcpStatus> {
    if n_features == N_FEATURES {
        Ok(())
    } else {
        Err(fail(
            SwellcpStatus::InvalidArgument,
            format!("expected {N_FEATURES} encoded features, got {n_features}"),
        ))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn swellcp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failing call on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn swellcp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Number of encoded features a model row must have.
#[no_mangle]
pub extern "C" fn swellcp_n_features() -> usize {
    N_FEATURES
}

/// Load a model file. On success `*out` owns a handle to release with
/// [`swellcp_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_model_load(
    path: *const c_char,
    out: *mut *mut SwellcpModel,
) -> SwellcpStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(SwellcpStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let inner = ModelFile::load(Path::new(path)).map_err(from_error)?;
        *out = Box::into_raw(Box::new(SwellcpModel { inner }));
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn swellcp_model_free(model: *mut SwellcpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_model_n_trees(
    model: *const SwellcpModel,
    out: *mut usize,
) -> SwellcpStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = m.forest.n_trees();
        Ok(())
    })
}

/// Conformal threshold and miscoverage level of a calibrated model.
/// `*q_out` is +infinity when the interval is unbounded.
///
/// # Safety
/// `model` must be a live handle; `q_out` and `alpha_out` writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_model_calibration(
    model: *const SwellcpModel,
    q_out: *mut f64,
    alpha_out: *mut f64,
) -> SwellcpStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(q_out, "q_out")?;
        non_null(alpha_out, "alpha_out")?;
        let cal = m.calibrator().map_err(from_error)?;
        *q_out = cal.q();
        *alpha_out = cal.alpha();
        Ok(())
    })
}

/// Encode 17 continuous inputs plus an irradiation class index (0 Ni ion,
/// 1 Fe ion, 2 neutron, 3 proton, 4 electron) into the 22-column model row.
///
/// # Safety
/// `continuous` must hold 17 values and `out` room for 22.
#[no_mangle]
pub unsafe extern "C" fn swellcp_encode_features(
    continuous: *const f64,
    irradiation_class: u32,
    out: *mut f64,
) -> SwellcpStatus {
    guard(|| {
        let c = slice(continuous, N_CONTINUOUS, "continuous")?;
        non_null(out, "out")?;
        let irradiation =
            IrradiationType::from_index(irradiation_class as usize).ok_or_else(|| {
                fail(
                    SwellcpStatus::InvalidArgument,
                    format!("irradiation class {irradiation_class} out of range"),
                )
            })?;
        if let Some(v) = c.iter().find(|v| !v.is_finite()) {
            return Err(fail(
                SwellcpStatus::Schema,
                format!("non-finite feature {v}"),
            ));
        }
        let mut continuous = [0.0; N_CONTINUOUS];
        continuous.copy_from_slice(c);
        let row = Features {
            continuous,
            irradiation,
        }
        .encode();
        std::slice::from_raw_parts_mut(out, N_FEATURES).copy_from_slice(&row);
        Ok(())
    })
}

/// Ensemble mean and population standard deviation across trees, in the
/// model's target space.
///
/// # Safety
/// `x` must hold `n_features` values; `mean_out` and `std_out` writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_predict_mean_std(
    model: *const SwellcpModel,
    x: *const f64,
    n_features: usize,
    mean_out: *mut f64,
    std_out: *mut f64,
) -> SwellcpStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_width(n_features)?;
        let x = slice(x, n_features, "x")?;
        non_null(mean_out, "mean_out")?;
        non_null(std_out, "std_out")?;
        let (mean, std) = m.forest.predict_mean_std(x);
        *mean_out = mean;
        *std_out = std;
        Ok(())
    })
}

/// Conformal prediction interval for one encoded row.
///
/// # Safety
/// `x` must hold `n_features` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_predict_interval(
    model: *const SwellcpModel,
    x: *const f64,
    n_features: usize,
    out: *mut SwellcpInterval,
) -> SwellcpStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_width(n_features)?;
        let x = slice(x, n_features, "x")?;
        non_null(out, "out")?;
        let cal = m.calibrator().map_err(from_error)?;
        let physical =
            conformal::predict_interval(&m.forest, cal, &m.transform, x).map_err(from_error)?;
        let model_space = cal.interval_log(m.forest.predict_mean(x));
        let (log_point, log_lower, log_upper) = match m.forest.target_space {
            TargetSpace::Log => (model_space.point, model_space.lower, model_space.upper),
            TargetSpace::Raw => (physical.point, physical.lower, physical.upper),
        };
        *out = SwellcpInterval {
            point: physical.point,
            lower: physical.lower,
            upper: physical.upper,
            log_point,
            log_lower,
            log_upper,
            alpha: cal.alpha(),
            unbounded: physical.is_unbounded() as i32,
        };
        Ok(())
    })
}

/// Order-statistic rank `ceil((n + 1)(1 - alpha))`; may exceed `n_cal`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_conformal_rank(
    n_cal: usize,
    alpha: f64,
    out: *mut usize,
) -> SwellcpStatus {
    guard(|| {
        non_null(out, "out")?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(fail(
                SwellcpStatus::Config,
                format!("alpha must lie in (0, 1), got {alpha}"),
            ));
        }
        *out = conformal::conformal_rank(n_cal, alpha);
        Ok(())
    })
}

/// Conformal threshold over `n` nonconformity scores; +infinity when the
/// rank exceeds `n`.
///
/// # Safety
/// `scores` must hold `n` values and `q_out` be writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_conformal_quantile(
    scores: *const f64,
    n: usize,
    alpha: f64,
    q_out: *mut f64,
) -> SwellcpStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        non_null(q_out, "q_out")?;
        let cal = ConformalCalibrator::calibrate(s.to_vec(), alpha).map_err(from_error)?;
        *q_out = cal.q();
        Ok(())
    })
}

/// `ln(y + offset)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_transform_forward(
    offset: f64,
    y: f64,
    out: *mut f64,
) -> SwellcpStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = TargetTransform::new(offset).map_err(from_error)?;
        *out = t.forward(y).map_err(from_error)?;
        Ok(())
    })
}

/// `exp(y_log) - offset`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swellcp_transform_inverse(
    offset: f64,
    y_log: f64,
    out: *mut f64,
) -> SwellcpStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = TargetTransform::new(offset).map_err(from_error)?;
        *out = t.inverse(y_log);
        Ok(())
    })
}
