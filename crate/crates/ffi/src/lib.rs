//! C ABI over the transport solver and the experiment pipelines.
//!
//! Every fallible function returns a [`PcStatus`]; on failure the message is
//! available from [`pc_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use popcoupling::cli::{self, ExperimentConfig};
use popcoupling::measures::EmpiricalMeasure;
use popcoupling::otsolver::{transport_cost, CostFunction, TransportPlan};
use popcoupling::Error;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidMeasure = 3,
    SpaceMismatch = 4,
    CapExceeded = 5,
    Simulation = 6,
    Numerical = 7,
    Config = 8,
    Io = 9,
    Panic = 10,
}

/// Pair cost family; `parameter` is the truncation level `a`, or `p` for `Power`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcCostKind {
    TruncAbs = 0,
    TruncAbsState = 1,
    TruncSum = 2,
    TruncWeighted = 3,
    Power = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PcCost {
    pub kind: PcCostKind,
    pub parameter: f64,
}

/// Weighted atoms on a state space.
pub struct PcMeasure(EmpiricalMeasure);

/// Optimal plan with its cost.
pub struct PcPlan(TransportPlan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PcStatus {
    match e {
        Error::InvalidParameter(_) => PcStatus::InvalidArgument,
        Error::InvalidMeasure(_) => PcStatus::InvalidMeasure,
        Error::SpaceMismatch(_) => PcStatus::SpaceMismatch,
        Error::CapExceeded { .. } => PcStatus::CapExceeded,
        Error::EnvelopeViolation { .. } => PcStatus::Simulation,
        Error::Nonnegativity { .. } | Error::Extrapolation { .. } | Error::Overflow(_) => PcStatus::Numerical,
        Error::Config(_) | Error::Json(_) => PcStatus::Config,
        Error::Io(_) | Error::Csv(_) => PcStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PcStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PcStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            PcStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            PcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg(format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a measure from `n_atoms` rows of flat coordinates.
///
/// `space` is a descriptor such as `"age"`, `"age_state:3"` or `"trait:2"`.
/// `weights` may be NULL for equal weights.
///
/// # Safety
/// `coords` must hold `n_atoms * coordinate length` doubles, `weights` (if
/// non-NULL) `n_atoms` doubles, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_measure_new(
    space: *const c_char,
    coords: *const f64,
    n_atoms: usize,
    weights: *const f64,
    out: *mut *mut PcMeasure,
) -> PcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if coords.is_null() && n_atoms > 0 {
            return Err(Failure::Null("coords"));
        }
        let space = cli::parse_space(str_arg(space, "space")?)?;
        let k = space.coord_len();
        let flat = if n_atoms == 0 { &[][..] } else { std::slice::from_raw_parts(coords, n_atoms * k) };
        let atoms = flat.chunks(k).map(|c| space.point(c)).collect::<Result<Vec<_>, _>>()?;
        let m = if weights.is_null() {
            EmpiricalMeasure::uniform(space, atoms)?
        } else {
            EmpiricalMeasure::new(space, atoms, std::slice::from_raw_parts(weights, n_atoms).to_vec())?
        };
        *out = Box::into_raw(Box::new(PcMeasure(m)));
        Ok(())
    })
}

/// Number of atoms, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle from [`pc_measure_new`].
#[no_mangle]
pub unsafe extern "C" fn pc_measure_len(m: *const PcMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// # Safety
/// `m` must be NULL or a handle from [`pc_measure_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_measure_free(m: *mut PcMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

fn cost_of(c: PcCost) -> Result<CostFunction, Error> {
    let a = c.parameter;
    let cost = match c.kind {
        PcCostKind::TruncAbs => CostFunction::TruncAbs { a },
        PcCostKind::TruncAbsState => CostFunction::TruncAbsState { a },
        PcCostKind::TruncSum => CostFunction::TruncSum { a },
        PcCostKind::TruncWeighted => CostFunction::TruncWeighted { a },
        PcCostKind::Power => CostFunction::Power { p: c.parameter },
    };
    cost.validate()?;
    Ok(cost)
}

/// Exact transport cost between `mu` and `nu`. When `out_plan` is non-NULL it
/// receives a plan handle to release with [`pc_plan_free`].
///
/// # Safety
/// `mu` and `nu` must be live measure handles; `out_cost` must be writable;
/// `out_plan` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn pc_transport_cost(
    mu: *const PcMeasure,
    nu: *const PcMeasure,
    cost: PcCost,
    out_cost: *mut f64,
    out_plan: *mut *mut PcPlan,
) -> PcStatus {
    guard(|| {
        let mu = mu.as_ref().ok_or(Failure::Null("mu"))?;
        let nu = nu.as_ref().ok_or(Failure::Null("nu"))?;
        if out_cost.is_null() {
            return Err(Failure::Null("out_cost"));
        }
        let plan = transport_cost(&mu.0, &nu.0, cost_of(cost)?)?;
        *out_cost = plan.cost;
        if !out_plan.is_null() {
            *out_plan = Box::into_raw(Box::new(PcPlan(plan)));
        }
        Ok(())
    })
}

/// Number of plan entries, or 0 for NULL.
///
/// # Safety
/// `plan` must be NULL or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn pc_plan_len(plan: *const PcPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.pairs.len())
}

/// Entry `index` of the plan: source atom, target atom and mass.
///
/// # Safety
/// `plan` must be a live plan handle and the out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn pc_plan_entry(
    plan: *const PcPlan,
    index: usize,
    src: *mut usize,
    dst: *mut usize,
    mass: *mut f64,
) -> PcStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or(Failure::Null("plan"))?;
        if src.is_null() || dst.is_null() || mass.is_null() {
            return Err(Failure::Null("entry outputs"));
        }
        let &(i, j, m) = plan
            .0
            .pairs
            .get(index)
            .ok_or_else(|| Failure::Arg(format!("plan index {index} out of range")))?;
        *src = i;
        *dst = j;
        *mass = m;
        Ok(())
    })
}

/// # Safety
/// `plan` must be NULL or a plan handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_plan_free(plan: *mut PcPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Runs `validate-a`, `contract`, `sweep` or `dual-check` on a JSON
/// configuration. On success `*out_json` receives the report (release with
/// [`pc_string_free`]) and `*out_passed` the verdict.
///
/// # Safety
/// `command` and `config_json` must be NUL-terminated strings; the out
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_run_experiment(
    command: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
    out_passed: *mut bool,
) -> PcStatus {
    guard(|| {
        if out_json.is_null() || out_passed.is_null() {
            return Err(Failure::Null("outputs"));
        }
        let command = str_arg(command, "command")?;
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        let (value, passed) = match command {
            "validate-a" => {
                let r = cli::run_validate_a(&cfg)?;
                (serde_json::to_string(&r), r.passed)
            }
            "contract" => {
                let r = cli::run_contract(&cfg)?;
                (serde_json::to_string(&r), r.passed)
            }
            "sweep" => {
                let r = cli::run_sweep(&cfg)?;
                (serde_json::to_string(&r), r.passed)
            }
            "dual-check" => {
                let r = cli::run_dual_check(&cfg)?;
                (serde_json::to_string(&r), r.check.passed)
            }
            other => return Err(Failure::Arg(format!("unknown command {other}"))),
        };
        let text = value.map_err(Error::from)?;
        *out_json = CString::new(text).map_err(|e| Failure::Arg(e.to_string()))?.into_raw();
        *out_passed = passed;
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
