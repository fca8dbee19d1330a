//! C interface to the consensus engine.
//!
//! Simulations are opaque handles created from a scenario (JSON text or a
//! file) and released with `wbc_simulation_free`. Every fallible call
//! returns a `WbcStatus`; on failure the message is available from
//! `wbc_last_error` on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as `WBC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::{DMatrix, DVector};
use wasserstein_consensus::config::ScenarioConfig;
use wasserstein_consensus::consensus::{metrics, run_with, step_with_metrics, ConsensusState, MetricsRecord, RunStatus};
use wasserstein_consensus::measures::GaussianMeasure;
use wasserstein_consensus::network::GraphSchedule;
use wasserstein_consensus::transport::w2_gaussian;
use wasserstein_consensus::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WbcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Schedule = 5,
    NoConvergence = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

fn status_of(e: &Error) -> WbcStatus {
    match e {
        Error::Round { source, .. } => status_of(source),
        Error::Config { .. } | Error::Json(_) => WbcStatus::Config,
        Error::Schedule(_) => WbcStatus::Schedule,
        Error::NoConvergence { .. } => WbcStatus::NoConvergence,
        Error::Io(_) | Error::Csv(_) => WbcStatus::Io,
        _ => WbcStatus::InvalidArgument,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure {
    status: WbcStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            status: status_of(&e),
            message: e.to_string(),
        }
    }
}

fn fail(status: WbcStatus, msg: impl Into<String>) -> Failure {
    Failure {
        status,
        message: msg.into(),
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WbcStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.message);
            e.status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            WbcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(WbcStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(WbcStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(WbcStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// A running scenario.
pub struct WbcSimulation {
    config: ScenarioConfig,
    schedule: GraphSchedule,
    state: ConsensusState,
    record: MetricsRecord,
}

impl WbcSimulation {
    fn new(config: ScenarioConfig) -> Result<Self, Failure> {
        let state = config.build_initial()?;
        let schedule = config.build_schedule()?;
        let record = metrics(&state, &config.solver, vec![0.0; state.n()], Default::default())?;
        Ok(Self {
            config,
            schedule,
            state,
            record,
        })
    }

    fn ensure_round(&mut self, t: usize) -> Result<(), Failure> {
        if t >= self.schedule.horizon() && self.schedule.generator().is_some() {
            self.schedule = self.schedule.extended((2 * t).max(t + 1))?;
        }
        Ok(())
    }
}

/// Per-round summary of a simulation's current state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WbcMetrics {
    pub t: usize,
    pub v2_max: f64,
    pub diameter: f64,
    pub max_jensen_residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WbcRunSummary {
    pub converged: bool,
    pub rounds: usize,
    pub final_diameter: f64,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wbc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn wbc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a simulation from scenario JSON. Relative paths resolve against
/// the working directory.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_from_json(json: *const c_char, out: *mut *mut WbcSimulation) -> WbcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(WbcStatus::NullPointer, "out is null"));
        }
        let text = str_arg(json, "json")?;
        let cfg = ScenarioConfig::parse(text)?;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(WbcSimulation::new(cfg)?));
        Ok(())
    })
}

/// Creates a simulation from a scenario file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_from_file(path: *const c_char, out: *mut *mut WbcSimulation) -> WbcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(WbcStatus::NullPointer, "out is null"));
        }
        let path = str_arg(path, "path")?;
        let cfg = ScenarioConfig::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(WbcSimulation::new(cfg)?));
        Ok(())
    })
}

/// Releases a simulation. NULL is ignored.
///
/// # Safety
/// `sim` must come from a `wbc_simulation_from_*` call and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_free(sim: *mut WbcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

unsafe fn sim_mut<'a>(sim: *mut WbcSimulation) -> Result<&'a mut WbcSimulation, Failure> {
    sim.as_mut().ok_or_else(|| fail(WbcStatus::NullPointer, "simulation is null"))
}

/// Number of agents, or 0 for NULL.
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_agent_count(sim: *const WbcSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.state.n())
}

/// Metrics of the current state.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_metrics(sim: *mut WbcSimulation, out: *mut WbcMetrics) -> WbcStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        let out = out.as_mut().ok_or_else(|| fail(WbcStatus::NullPointer, "out is null"))?;
        *out = WbcMetrics {
            t: s.record.t,
            v2_max: s.record.v2_max,
            diameter: s.record.diameter,
            max_jensen_residual: s.record.max_jensen_residual(),
        };
        Ok(())
    })
}

/// Copies the per-agent second moments into `buf` (`len` ≥ agent count).
///
/// # Safety
/// `sim` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_v2(sim: *mut WbcSimulation, buf: *mut f64, len: usize) -> WbcStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        if buf.is_null() {
            return Err(fail(WbcStatus::NullPointer, "buf is null"));
        }
        let v2 = &s.record.v2;
        if len < v2.len() {
            return Err(fail(
                WbcStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", v2.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, v2.len()).copy_from_slice(v2);
        Ok(())
    })
}

/// Advances one synchronous round.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_step(sim: *mut WbcSimulation) -> WbcStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        s.ensure_round(s.state.t)?;
        let (next, record) = step_with_metrics(&s.state, &s.schedule, &s.config.solver, s.config.seed)?;
        s.state = next;
        s.record = record;
        Ok(())
    })
}

/// Runs from the current state until the scenario's stop criteria hold
/// (`max_rounds` counts from the current round).
///
/// # Safety
/// `sim` must be a live handle; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_run(sim: *mut WbcSimulation, out: *mut WbcRunSummary) -> WbcStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        s.ensure_round(s.state.t + s.config.stop.max_rounds)?;
        let mut last = None;
        let result = run_with(
            &s.state,
            &s.schedule,
            &s.config.solver,
            &s.config.stop,
            s.config.seed,
            |state, record| {
                last = Some((state.clone(), record.clone()));
                Ok(())
            },
        );
        if let Some((state, record)) = last {
            // The first record restates the current state without Jensen data.
            if state.t > s.state.t {
                s.state = state;
                s.record = record;
            }
        }
        let summary = result?;
        if let Some(out) = out.as_mut() {
            *out = WbcRunSummary {
                converged: summary.status == RunStatus::Converged,
                rounds: summary.rounds,
                final_diameter: summary.final_diameter,
            };
        }
        Ok(())
    })
}

/// Current state as JSON; free with `wbc_string_free`. NULL on failure.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wbc_simulation_state_json(sim: *mut WbcSimulation) -> *mut c_char {
    let mut out = ptr::null_mut();
    guard(|| {
        let s = sim_mut(sim)?;
        let text = serde_json::to_string(&s.state).map_err(Error::from)?;
        out = CString::new(text)
            .map_err(|_| fail(WbcStatus::InvalidArgument, "state JSON contains NUL"))?
            .into_raw();
        Ok(())
    });
    out
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wbc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// W₂ between two Gaussians on R^d. Covariances are row-major d×d.
///
/// # Safety
/// Means must hold `d` doubles, covariances `d*d`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wbc_w2_gaussian(
    d: usize,
    mean_a: *const f64,
    cov_a: *const f64,
    mean_b: *const f64,
    cov_b: *const f64,
    out: *mut f64,
) -> WbcStatus {
    guard(|| {
        if d == 0 {
            return Err(fail(WbcStatus::InvalidArgument, "dimension must be positive"));
        }
        let out = out.as_mut().ok_or_else(|| fail(WbcStatus::NullPointer, "out is null"))?;
        let make = |m: *const f64, c: *const f64, name: &str| -> Result<GaussianMeasure, Failure> {
            let m = slice_arg(m, d, name)?;
            let c = slice_arg(c, d * d, name)?;
            Ok(GaussianMeasure::new(DVector::from_column_slice(m), DMatrix::from_row_slice(d, d, c))?)
        };
        let a = make(mean_a, cov_a, "first measure")?;
        let b = make(mean_b, cov_b, "second measure")?;
        *out = w2_gaussian(&a, &b)?;
        Ok(())
    })
}
