//! C ABI over the signflow toolkit.
//!
//! Every function returns an [`SfStatus`]; on failure the message is kept in a
//! thread-local slot readable through [`sf_last_error`]. Handles are opaque
//! and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use signflow::config::{Command, Scenario, ScenarioConfig};
use signflow::schedule::ControlSchedule;
use signflow::spectral::eigenpairs;
use signflow::state::StateProfile;
use signflow::steering::{steer_full, SteeringRun};
use signflow::synthesis::pattern_tol;
use signflow::zeros::detect_sign_changes;
use signflow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Numerical = 4,
    SteeringFailed = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Parsed and validated scenario.
pub struct SfScenario {
    config: ScenarioConfig,
}

/// A discrete state on the scenario grid.
pub struct SfState {
    inner: StateProfile,
}

/// Outcome of a steering run.
pub struct SfSteering {
    run: SteeringRun,
    eta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::Config(_)
        | Error::InvalidCoefficient(_)
        | Error::InvalidBoundary(_)
        | Error::InvalidPairing { .. }
        | Error::UnderResolvedGrid(_)
        | Error::InvalidNonlinearity(_)
        | Error::InvalidPrescription(_)
        | Error::ShapeMismatch { .. }
        | Error::Domain(_) => SfStatus::Config,
        Error::SteeringFailed(_) | Error::Unachievable { .. } | Error::SignPatternMismatch(_) => {
            SfStatus::SteeringFailed
        }
        _ => SfStatus::Numerical,
    }
}

fn guard<F: FnOnce() -> Result<(), (SfStatus, String)>>(f: F) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SfStatus::Panic
        }
    }
}

fn lift<T>(r: signflow::Result<T>) -> Result<T, (SfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SfStatus, String) {
    (SfStatus::NullPointer, format!("{what} is null"))
}

fn prepare(s: &SfScenario, cmd: Command) -> Result<Scenario, (SfStatus, String)> {
    lift(s.config.prepare(cmd))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a scenario from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SfScenario,
) -> SfStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (SfStatus::InvalidUtf8, e.to_string()))?;
        let config = lift(ScenarioConfig::from_json(text))?;
        *out = Box::into_raw(Box::new(SfScenario { config }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`sf_scenario_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_free(s: *mut SfScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Writes the first `len` eigenvalues λ_p ≥ 0 of the scenario operator.
///
/// # Safety
/// `s` must be a live scenario and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_eigenvalues(
    s: *const SfScenario,
    out: *mut f64,
    len: usize,
) -> SfStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = prepare(s, Command::Eigen)?;
        let es = lift(eigenpairs(&sc.solver.op, len))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&es.lambdas);
        Ok(())
    })
}

/// Evolves the scenario's initial profile to `t_final` under its constant α.
///
/// # Safety
/// `s` must be a live scenario and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_evolve(s: *const SfScenario, out: *mut *mut SfState) -> SfStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = prepare(s, Command::Evolve)?;
        let u0 = sc.initial.as_ref().expect("validated");
        let p = &sc.config.solver;
        let sch = lift(ControlSchedule::constant(u0.n(), 0.0, p.t_final, p.alpha))?;
        let traj = lift(
            sc.solver
                .evolve(u0, &sch, &sc.nonlinearity, p.dt, usize::MAX),
        )?;
        let inner = traj.last().cloned().unwrap_or_else(|| u0.clone());
        *out = Box::into_raw(Box::new(SfState { inner }));
        Ok(())
    })
}

/// # Safety
/// `st` must be a live state or null.
#[no_mangle]
pub unsafe extern "C" fn sf_state_len(st: *const SfState) -> usize {
    st.as_ref().map_or(0, |s| s.inner.n())
}

/// # Safety
/// `st` must be a live state or null.
#[no_mangle]
pub unsafe extern "C" fn sf_state_time(st: *const SfState) -> f64 {
    st.as_ref().map_or(f64::NAN, |s| s.inner.time)
}

/// Copies the cell values into `buf`, which must hold at least
/// [`sf_state_len`] doubles.
///
/// # Safety
/// `st` must be a live state and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_state_values(
    st: *const SfState,
    buf: *mut f64,
    len: usize,
) -> SfStatus {
    guard(|| {
        let st = st.as_ref().ok_or_else(|| null("state"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let n = st.inner.n();
        if len < n {
            return Err((
                SfStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {n}"),
            ));
        }
        std::slice::from_raw_parts_mut(buf, n).copy_from_slice(&st.inner.values);
        Ok(())
    })
}

/// # Safety
/// `st` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sf_state_free(st: *mut SfState) {
    if !st.is_null() {
        drop(Box::from_raw(st));
    }
}

/// Counts the sign changes of cell values on a uniform grid of (-1, 1).
///
/// # Safety
/// `values` must hold `n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_count_sign_changes(
    values: *const f64,
    n: usize,
    out: *mut usize,
) -> SfStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let g = lift(signflow::build_grid(n))?;
        let u = lift(StateProfile::new(
            &g,
            std::slice::from_raw_parts(values, n).to_vec(),
            0.0,
        ))?;
        *out = detect_sign_changes(&u, pattern_tol(&u)).len();
        Ok(())
    })
}

/// Runs the full steering pipeline. A run that completes but misses its
/// targets still returns a handle; check [`sf_steering_success`].
///
/// # Safety
/// `s` must be a live scenario and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_steer(s: *const SfScenario, out: *mut *mut SfSteering) -> SfStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = prepare(s, Command::Steer)?;
        let (u0, us) = (
            sc.initial.as_ref().expect("validated"),
            sc.target.as_ref().expect("validated"),
        );
        let (cfg, eta) = lift(sc.steering_setup())?;
        let run = lift(steer_full(
            u0,
            us,
            eta,
            cfg,
            &sc.solver,
            &sc.coefficient,
            &sc.nonlinearity,
        ))?;
        *out = Box::into_raw(Box::new(SfSteering { run, eta }));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live steering handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_steering_success(h: *const SfSteering) -> bool {
    h.as_ref().is_some_and(|h| h.run.success)
}

/// # Safety
/// `h` must be a live steering handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_steering_final_error(h: *const SfSteering) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.run.final_error)
}

/// # Safety
/// `h` must be a live steering handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_steering_intervals(h: *const SfSteering) -> usize {
    h.as_ref().map_or(0, |h| h.run.family.taus.len())
}

/// Run summary as a JSON string; release it with [`sf_string_free`].
///
/// # Safety
/// `h` must be a live steering handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_steering_summary_json(h: *const SfSteering) -> *mut c_char {
    let Some(h) = h.as_ref() else {
        return ptr::null_mut();
    };
    match serde_json::to_string(&h.run.summary(h.eta))
        .ok()
        .and_then(|s| CString::new(s).ok())
    {
        Some(c) => c.into_raw(),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `h` must come from [`sf_steer`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sf_steering_free(h: *mut SfSteering) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
