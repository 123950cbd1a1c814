//! C ABI over the didlab engine.
//!
//! Panels and event studies cross the boundary as opaque handles that the
//! caller releases with the matching `_free` function. Every function
//! returns a [`DidlabStatus`]; on failure a message is available from
//! [`didlab_last_error`] on the same thread until the next failing call.
//! Panics are caught and reported as `DIDLAB_STATUS_PANIC`.
//!
//! The header `include/didlab.h` is generated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use didlab::drdid::{event_study, pct_change, EstimationSpec, EventStudyResult};
use didlab::numerics::chi_square_sf;
use didlab::panel::{
    build_profile_table, prepare_panel, read_households, read_panel, read_purchases, write_panel, Outcome, PrepSettings,
    PreparedPanel, PRETAX_PROFILE_CUTOFF_YEAR,
};
use didlab::{Error, Quarter};

/// Result code of every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DidlabStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    InvalidInput = 2,
    Io = 3,
    Schema = 4,
    InsufficientData = 5,
    Overlap = 6,
    Numeric = 7,
    /// Index out of range or name not found.
    Unknown = 8,
    Panic = 99,
}

/// Values accepted in [`DidlabEstimateOptions::outcome`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DidlabOutcome {
    Weight = 0,
    Amount = 1,
    Expenditure = 2,
    PricePer100 = 3,
    AvgPackageSize = 4,
}

/// A prepared household-by-quarter panel for one product.
pub struct DidlabPanel(PreparedPanel);

/// Estimated event study with its windows and pre-trend test.
pub struct DidlabEventStudy(EventStudyResult);

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DidlabEstimateOptions {
    /// One of the `DidlabOutcome` values.
    pub outcome: u32,
    /// Doubly robust with all household covariates when true, plain
    /// difference in means otherwise.
    pub conditional: bool,
    /// Multiplier-bootstrap draws for simultaneous bands; 0 disables them.
    pub bootstrap_reps: u32,
    pub level: f64,
    pub seed: u64,
    pub reference_year: i32,
    pub reference_quarter: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DidlabAttPoint {
    pub year: i32,
    pub quarter: u32,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DidlabWindow {
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    /// NaN when the baseline is unavailable.
    pub pct_change: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DidlabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let status = match &e {
            Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::UnknownLevel { .. }
            | Error::MissingQuarter { .. } => DidlabStatus::InvalidInput,
            Error::Io { .. } => DidlabStatus::Io,
            Error::Schema { .. } | Error::Csv(_) => DidlabStatus::Schema,
            Error::InsufficientData(_) => DidlabStatus::InsufficientData,
            Error::OverlapViolation { .. } => DidlabStatus::Overlap,
            Error::DegenerateLabels | Error::NotConverged { .. } | Error::UndefinedPercent => DidlabStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DidlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DidlabStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            DidlabStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DidlabStatus::Null, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(DidlabStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn didlab_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn didlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Prepare the panel of `product` from a purchases file and an annual
/// household file, with default cleaning settings.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_panel_prepare(
    purchases_csv: *const c_char,
    households_csv: *const c_char,
    product: *const c_char,
    out: *mut *mut DidlabPanel,
) -> DidlabStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let purchases = unsafe { str_arg(purchases_csv, "purchases_csv") }?;
        let households = unsafe { str_arg(households_csv, "households_csv") }?;
        let product = unsafe { str_arg(product, "product") }?;
        let records = read_purchases(Path::new(purchases))?;
        let table = build_profile_table(read_households(Path::new(households))?, PRETAX_PROFILE_CUTOFF_YEAR);
        let (panel, _) = prepare_panel(&records, &table, product, &PrepSettings::default())?;
        *out = Box::into_raw(Box::new(DidlabPanel(panel)));
        Ok(())
    })
}

/// Load a panel written by `didlab prepare` (or [`didlab_panel_save`]).
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_panel_load(dir: *const c_char, product: *const c_char, out: *mut *mut DidlabPanel) -> DidlabStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let dir = unsafe { str_arg(dir, "dir") }?;
        let product = unsafe { str_arg(product, "product") }?;
        let panel = read_panel(Path::new(dir), product)?;
        *out = Box::into_raw(Box::new(DidlabPanel(panel)));
        Ok(())
    })
}

/// Write the panel file and its metadata into `dir`. Household profiles are
/// not written; `profiles.csv` must be provided separately for reloading.
///
/// # Safety
/// `panel` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn didlab_panel_save(panel: *const DidlabPanel, dir: *const c_char) -> DidlabStatus {
    guard(|| {
        let panel = unsafe { ref_arg(panel, "panel") }?;
        let dir = unsafe { str_arg(dir, "dir") }?;
        write_panel(Path::new(dir), &panel.0)?;
        Ok(())
    })
}

/// # Safety
/// `panel` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_panel_n_households(panel: *const DidlabPanel, out: *mut usize) -> DidlabStatus {
    guard(|| {
        let panel = unsafe { ref_arg(panel, "panel") }?;
        *unsafe { out_arg(out, "out") }? = panel.0.n_households();
        Ok(())
    })
}

/// Release a panel. NULL is ignored.
///
/// # Safety
/// `panel` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn didlab_panel_free(panel: *mut DidlabPanel) {
    if !panel.is_null() {
        drop(unsafe { Box::from_raw(panel) });
    }
}

/// Defaults: weight, conditional, 1000 bootstrap draws, 95% level, seed 0,
/// reference quarter 2011Q1.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_estimate_options_default(out: *mut DidlabEstimateOptions) -> DidlabStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        let spec = EstimationSpec::new("", Outcome::Weight);
        *out = DidlabEstimateOptions {
            outcome: DidlabOutcome::Weight as u32,
            conditional: spec.conditional,
            bootstrap_reps: spec.bootstrap_reps as u32,
            level: spec.level,
            seed: spec.seed,
            reference_year: spec.reference.year(),
            reference_quarter: u32::from(spec.reference.q()),
        };
        Ok(())
    })
}

fn spec_from(panel: &PreparedPanel, o: &DidlabEstimateOptions) -> Result<EstimationSpec, Failure> {
    let outcome = *Outcome::ALL
        .get(o.outcome as usize)
        .ok_or_else(|| Failure(DidlabStatus::InvalidInput, format!("unknown outcome code {}", o.outcome)))?;
    let q = u8::try_from(o.reference_quarter)
        .map_err(|_| Failure(DidlabStatus::InvalidInput, format!("quarter {} out of range", o.reference_quarter)))?;
    let mut spec = EstimationSpec::new(panel.product.clone(), outcome);
    spec.reference = Quarter::new(o.reference_year, q)?;
    spec.excluded.retain(|&x| x != spec.reference);
    spec.conditional = o.conditional;
    spec.bootstrap_reps = o.bootstrap_reps as usize;
    spec.level = o.level;
    spec.seed = o.seed;
    Ok(spec)
}

/// Estimate the event study of one outcome on a panel.
///
/// # Safety
/// `panel` must come from this library; `options` must be readable and
/// `out` writable. A NULL `options` uses the defaults.
#[no_mangle]
pub unsafe extern "C" fn didlab_estimate(
    panel: *const DidlabPanel,
    options: *const DidlabEstimateOptions,
    out: *mut *mut DidlabEventStudy,
) -> DidlabStatus {
    guard(|| {
        let out = unsafe { out_arg(out, "out") }?;
        *out = ptr::null_mut();
        let panel = unsafe { ref_arg(panel, "panel") }?;
        let options = match unsafe { options.as_ref() } {
            Some(o) => *o,
            None => {
                let mut d = std::mem::MaybeUninit::uninit();
                unsafe { didlab_estimate_options_default(d.as_mut_ptr()) };
                unsafe { d.assume_init() }
            }
        };
        let spec = spec_from(&panel.0, &options)?;
        let result = event_study(&panel.0, &spec)?;
        *out = Box::into_raw(Box::new(DidlabEventStudy(result)));
        Ok(())
    })
}

/// # Safety
/// `es` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_event_study_n_points(es: *const DidlabEventStudy, out: *mut usize) -> DidlabStatus {
    guard(|| {
        let es = unsafe { ref_arg(es, "event study") }?;
        *unsafe { out_arg(out, "out") }? = es.0.points.len();
        Ok(())
    })
}

/// Point `index` in calendar order.
///
/// # Safety
/// `es` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_event_study_point(es: *const DidlabEventStudy, index: usize, out: *mut DidlabAttPoint) -> DidlabStatus {
    guard(|| {
        let es = unsafe { ref_arg(es, "event study") }?;
        let out = unsafe { out_arg(out, "out") }?;
        let p = es.0.points.get(index).ok_or_else(|| {
            Failure(DidlabStatus::Unknown, format!("point {index} out of range ({} points)", es.0.points.len()))
        })?;
        *out = DidlabAttPoint {
            year: p.quarter.year(),
            quarter: u32::from(p.quarter.q()),
            estimate: p.estimate,
            se: p.se,
            p_value: p.p_value,
            ci_lo: p.pointwise_ci.0,
            ci_hi: p.pointwise_ci.1,
            band_lo: p.simultaneous_ci.0,
            band_hi: p.simultaneous_ci.1,
            n_treated: p.n_treated,
            n_control: p.n_control,
        };
        Ok(())
    })
}

/// Window average by name (`"tax"` or `"post"`).
///
/// # Safety
/// `es` must come from this library; `name` must be NUL-terminated and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_event_study_window(
    es: *const DidlabEventStudy,
    name: *const c_char,
    out: *mut DidlabWindow,
) -> DidlabStatus {
    guard(|| {
        let es = unsafe { ref_arg(es, "event study") }?;
        let name = unsafe { str_arg(name, "name") }?;
        let out = unsafe { out_arg(out, "out") }?;
        let w = es.0.window(name).ok_or_else(|| Failure(DidlabStatus::Unknown, format!("no window named {name:?}")))?;
        *out = DidlabWindow {
            estimate: w.estimate,
            se: w.se,
            p_value: w.p_value,
            pct_change: w.pct_change.unwrap_or(f64::NAN),
            n_treated: w.n_treated,
            n_control: w.n_control,
        };
        Ok(())
    })
}

/// p-value of the joint pre-trend test; `DIDLAB_STATUS_INSUFFICIENT_DATA`
/// when it could not be computed.
///
/// # Safety
/// `es` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_event_study_pretrend_p(es: *const DidlabEventStudy, out: *mut f64) -> DidlabStatus {
    guard(|| {
        let es = unsafe { ref_arg(es, "event study") }?;
        let out = unsafe { out_arg(out, "out") }?;
        *out = es.0.pretrend_p().ok_or_else(|| Error::insufficient("no pre-trend test"))?;
        Ok(())
    })
}

/// Release an event study. NULL is ignored.
///
/// # Safety
/// `es` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn didlab_event_study_free(es: *mut DidlabEventStudy) {
    if !es.is_null() {
        drop(unsafe { Box::from_raw(es) });
    }
}

/// `100 * estimate / baseline`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_pct_change(estimate: f64, baseline: f64, out: *mut f64) -> DidlabStatus {
    guard(|| {
        *unsafe { out_arg(out, "out") }? = pct_change(estimate, baseline)?;
        Ok(())
    })
}

/// Upper tail of the chi-square distribution.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn didlab_chi_square_sf(statistic: f64, dof: usize, out: *mut f64) -> DidlabStatus {
    guard(|| {
        *unsafe { out_arg(out, "out") }? = chi_square_sf(statistic, dof)?;
        Ok(())
    })
}
