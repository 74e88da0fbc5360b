//! C ABI over the planning/tracking pipeline: solve a plan from a config
//! string, query the trajectory and its distribution, run tracking
//! controllers under disturbances.
//!
//! All functions are `extern "C"`, exchange only C-compatible scalars and
//! caller-owned buffers, and report failures through [`TdStatus`] plus a
//! thread-local message retrievable with [`td_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use trajdist::costs::eval_goal_cost;
use trajdist::error::Error;
use trajdist::harness::config::Config;
use trajdist::harness::disturbance::{
    default_magnitude, make_disturbance, DisturbanceKind, DisturbanceLevel, DisturbanceSpec,
};
use trajdist::harness::experiment::{sample_state_trajectories, PlanSetup};
use trajdist::tracking::{run_closed_loop, ControllerKind};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdStatus {
    Ok = 0,
    InvalidArgument = 1,
    ConfigError = 2,
    SolverFailure = 3,
    NumericError = 4,
    IoError = 5,
    Panic = 6,
}

/// Tracking controller selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdController {
    IlqrFeed = 0,
    MpcMean = 1,
    MpcMarg = 2,
    MpcCond = 3,
}

/// Disturbance type selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdDisturbanceKind {
    Impulse = 0,
    TimeVarying = 1,
}

/// Disturbance level selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TdDisturbanceLevel {
    Small = 0,
    Medium = 1,
    Large = 2,
}

/// Opaque handle to a solved plan and its trajectory distribution.
pub struct TdPlan {
    setup: PlanSetup,
    warm_start: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> TdStatus {
    match err {
        Error::Config(_) => TdStatus::ConfigError,
        Error::Io { .. } => TdStatus::IoError,
        Error::SolverFailure(_) | Error::Distribution(_) | Error::Controller { .. } => TdStatus::SolverFailure,
        Error::NonFinite { .. } | Error::InvalidCovariance(_) => TdStatus::NumericError,
        Error::Dimension { .. } | Error::Contract(_) => TdStatus::InvalidArgument,
    }
}

fn guard<F: FnOnce() -> TdStatus>(f: F) -> TdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TdStatus::Panic
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn td_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Solves the long-horizon problem described by a TOML config string and
/// returns an owned plan handle through `out_plan`.
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated UTF-8 string and `out_plan`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn td_plan_solve(config_toml: *const c_char, out_plan: *mut *mut TdPlan) -> TdStatus {
    guard(|| {
        if config_toml.is_null() || out_plan.is_null() {
            set_error("null pointer argument");
            return TdStatus::InvalidArgument;
        }
        let text = match unsafe { CStr::from_ptr(config_toml) }.to_str() {
            Ok(text) => text,
            Err(_) => {
                set_error("config string is not valid UTF-8");
                return TdStatus::InvalidArgument;
            }
        };
        let resolved = match Config::parse(text).and_then(|c| c.resolve()) {
            Ok(resolved) => resolved,
            Err(err) => {
                set_error(&err.to_string());
                return status_of(&err);
            }
        };
        let warm_start = resolved.mpc_warm_start;
        match PlanSetup::prepare(resolved.task) {
            Ok(setup) => {
                let plan = Box::new(TdPlan { setup, warm_start });
                unsafe { *out_plan = Box::into_raw(plan) };
                TdStatus::Ok
            }
            Err(err) => {
                set_error(&err.to_string());
                status_of(&err)
            }
        }
    })
}

/// Releases a plan handle.
///
/// # Safety
/// `plan` must be a pointer returned by [`td_plan_solve`] that has not been
/// freed yet; `NULL` is ignored.
#[no_mangle]
pub unsafe extern "C" fn td_plan_free(plan: *mut TdPlan) {
    if !plan.is_null() {
        drop(unsafe { Box::from_raw(plan) });
    }
}

macro_rules! plan_ref {
    ($plan:expr) => {
        match unsafe { $plan.as_ref() } {
            Some(p) => p,
            None => {
                set_error("null plan handle");
                return TdStatus::InvalidArgument;
            }
        }
    };
}

/// State dimension of the planned system.
///
/// # Safety
/// `plan` must be a live handle from [`td_plan_solve`].
#[no_mangle]
pub unsafe extern "C" fn td_plan_state_dim(plan: *const TdPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.setup.task.model.nx())
}

/// Control dimension of the planned system.
///
/// # Safety
/// `plan` must be a live handle from [`td_plan_solve`].
#[no_mangle]
pub unsafe extern "C" fn td_plan_control_dim(plan: *const TdPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.setup.task.model.nu())
}

/// Number of control intervals of the plan.
///
/// # Safety
/// `plan` must be a live handle from [`td_plan_solve`].
#[no_mangle]
pub unsafe extern "C" fn td_plan_horizon(plan: *const TdPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.setup.task.grid.steps())
}

/// Discretization interval in seconds.
///
/// # Safety
/// `plan` must be a live handle from [`td_plan_solve`].
#[no_mangle]
pub unsafe extern "C" fn td_plan_dt(plan: *const TdPlan) -> f64 {
    unsafe { plan.as_ref() }.map_or(f64::NAN, |p| p.setup.task.grid.dt())
}

/// Cost of the planned trajectory.
///
/// # Safety
/// `plan` must be a live handle from [`td_plan_solve`].
#[no_mangle]
pub unsafe extern "C" fn td_plan_cost(plan: *const TdPlan) -> f64 {
    unsafe { plan.as_ref() }.map_or(f64::NAN, |p| p.setup.plan.final_cost)
}

/// Number of accepted solver iterations.
///
/// # Safety
/// `plan` must be a live handle from [`td_plan_solve`].
#[no_mangle]
pub unsafe extern "C" fn td_plan_iterations(plan: *const TdPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.setup.plan.iterations)
}

/// 1 when the solver met its gradient criterion, 0 otherwise.
///
/// # Safety
/// `plan` must be a live handle from [`td_plan_solve`].
#[no_mangle]
pub unsafe extern "C" fn td_plan_converged(plan: *const TdPlan) -> i32 {
    unsafe { plan.as_ref() }.map_or(0, |p| p.setup.plan.converged as i32)
}

/// Copies the planned state at step `t` (0..=horizon) into `out`
/// (`state_dim` doubles).
///
/// # Safety
/// `plan` must be a live handle; `out` must point to at least `state_dim`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn td_plan_state(plan: *const TdPlan, t: usize, out: *mut f64) -> TdStatus {
    guard(|| {
        let p = plan_ref!(plan);
        if out.is_null() {
            set_error("null output buffer");
            return TdStatus::InvalidArgument;
        }
        let states = &p.setup.plan.trajectory.states;
        if t >= states.len() {
            set_error("step index out of range");
            return TdStatus::InvalidArgument;
        }
        let x = &states[t];
        unsafe { std::ptr::copy_nonoverlapping(x.as_ptr(), out, x.len()) };
        TdStatus::Ok
    })
}

/// Copies the planned control at step `t` (0..horizon) into `out`
/// (`control_dim` doubles).
///
/// # Safety
/// `plan` must be a live handle; `out` must point to at least `control_dim`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn td_plan_control(plan: *const TdPlan, t: usize, out: *mut f64) -> TdStatus {
    guard(|| {
        let p = plan_ref!(plan);
        if out.is_null() {
            set_error("null output buffer");
            return TdStatus::InvalidArgument;
        }
        let controls = &p.setup.plan.trajectory.controls;
        if t >= controls.len() {
            set_error("step index out of range");
            return TdStatus::InvalidArgument;
        }
        let u = &controls[t];
        unsafe { std::ptr::copy_nonoverlapping(u.as_ptr(), out, u.len()) };
        TdStatus::Ok
    })
}

/// Copies the per-dimension marginal standard deviation of the state at step
/// `t` into `out` (`state_dim` doubles).
///
/// # Safety
/// `plan` must be a live handle; `out` must point to at least `state_dim`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn td_plan_marginal_std(plan: *const TdPlan, t: usize, out: *mut f64) -> TdStatus {
    guard(|| {
        let p = plan_ref!(plan);
        if out.is_null() {
            set_error("null output buffer");
            return TdStatus::InvalidArgument;
        }
        match p.setup.dist.marginal(t) {
            Ok(marg) => {
                let nx = p.setup.task.model.nx();
                for i in 0..nx {
                    unsafe { *out.add(i) = marg.cov()[(i, i)].max(0.0).sqrt() };
                }
                TdStatus::Ok
            }
            Err(err) => {
                set_error(&err.to_string());
                status_of(&err)
            }
        }
    })
}

/// Draws `count` state-trajectory samples from the planned distribution into
/// `out`, laid out as `count x (horizon+1) x state_dim` doubles, sample-major.
///
/// # Safety
/// `plan` must be a live handle; `out` must point to at least
/// `count·(horizon+1)·state_dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn td_plan_sample(plan: *const TdPlan, count: usize, seed: u64, out: *mut f64) -> TdStatus {
    guard(|| {
        let p = plan_ref!(plan);
        if out.is_null() || count == 0 {
            set_error("null output buffer or zero count");
            return TdStatus::InvalidArgument;
        }
        match sample_state_trajectories(&p.setup, count, seed) {
            Ok(samples) => {
                let nx = p.setup.task.model.nx();
                let steps = p.setup.task.grid.steps() + 1;
                for (s, traj) in samples.iter().enumerate() {
                    for (t, x) in traj.iter().enumerate() {
                        let base = (s * steps + t) * nx;
                        unsafe { std::ptr::copy_nonoverlapping(x.as_ptr(), out.add(base), nx) };
                    }
                }
                TdStatus::Ok
            }
            Err(err) => {
                set_error(&err.to_string());
                status_of(&err)
            }
        }
    })
}

/// Runs one closed-loop tracking episode under a seeded disturbance.
///
/// `magnitude <= 0` selects the built-in level default for the system. On
/// success `out_cost` receives the realized cost (NaN for diverged runs) and
/// `out_diverged` 0/1.
///
/// # Safety
/// `plan` must be a live handle; `out_cost` and `out_diverged` must be valid
/// pointers.
#[no_mangle]
pub unsafe extern "C" fn td_track_run(
    plan: *const TdPlan,
    controller: TdController,
    kind: TdDisturbanceKind,
    level: TdDisturbanceLevel,
    magnitude: f64,
    seed: u64,
    out_cost: *mut f64,
    out_diverged: *mut i32,
) -> TdStatus {
    guard(|| {
        let p = plan_ref!(plan);
        if out_cost.is_null() || out_diverged.is_null() {
            set_error("null output pointer");
            return TdStatus::InvalidArgument;
        }
        let controller = match controller {
            TdController::IlqrFeed => ControllerKind::IlqrFeed,
            TdController::MpcMean => ControllerKind::MpcMean,
            TdController::MpcMarg => ControllerKind::MpcMarg,
            TdController::MpcCond => ControllerKind::MpcCond,
        };
        let kind = match kind {
            TdDisturbanceKind::Impulse => DisturbanceKind::Impulse,
            TdDisturbanceKind::TimeVarying => DisturbanceKind::TimeVarying,
        };
        let level = match level {
            TdDisturbanceLevel::Small => DisturbanceLevel::Small,
            TdDisturbanceLevel::Medium => DisturbanceLevel::Medium,
            TdDisturbanceLevel::Large => DisturbanceLevel::Large,
        };
        let magnitude = if magnitude > 0.0 {
            magnitude
        } else {
            default_magnitude(p.setup.task.model.name(), kind, level)
        };
        let run = || -> Result<(f64, bool), Error> {
            let spec = DisturbanceSpec::new(kind, level, magnitude)?;
            let perturbations = make_disturbance(
                &spec,
                p.setup.task.model.velocity_indices().len(),
                p.setup.task.grid.steps(),
                seed,
            )?;
            let cfg = p.setup.tracker_config(p.warm_start);
            let outcome = run_closed_loop(
                &p.setup.plan,
                &p.setup.dist,
                controller,
                &p.setup.task.model,
                &cfg,
                &perturbations,
            )?;
            let cost = if outcome.diverged {
                f64::NAN
            } else {
                eval_goal_cost(&p.setup.task.cost, &p.setup.task.model, &outcome.trajectory)?
            };
            Ok((cost, outcome.diverged))
        };
        match run() {
            Ok((cost, diverged)) => {
                unsafe {
                    *out_cost = cost;
                    *out_diverged = diverged as i32;
                }
                TdStatus::Ok
            }
            Err(err) => {
                set_error(&err.to_string());
                status_of(&err)
            }
        }
    })
}
