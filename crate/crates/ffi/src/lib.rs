//! C ABI over the orbitforge core.
//!
//! Every function returns an [`OfStatus`]. On anything but `OF_STATUS_OK` the
//! message is available from [`of_last_error`] until the next call on the same
//! thread. Handles are opaque and must be released with their `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use orbitforge::numerics::Vector;
use orbitforge::plants::im::{self, ImParams};
use orbitforge::plants::pendulum::{self, PendulumParams};
use orbitforge::scenario::{self, Scenario, ScenarioConfig};
use orbitforge::sim::Trajectory;
use orbitforge::verify::{self, VerifyOptions};
use orbitforge::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfStatus {
    Ok = 0,
    AnalysisFailed = 1,
    ConfigError = 2,
    NullPointer = 3,
    InvalidArgument = 4,
    NumericalError = 5,
    Panic = 6,
}

/// Induction motor parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OfImParams {
    pub r: f64,
    pub beta_star: f64,
    pub omega_star: f64,
    pub k: f64,
}

/// Pendulum parameters. `global == 0` selects the local design with gain
/// `gamma1`; otherwise the piecewise design with `gamma1` inside and `gamma2`
/// outside.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OfPendulumParams {
    pub global: i32,
    pub gamma1: f64,
    pub gamma2: f64,
    pub theta_star: f64,
}

/// A loaded scenario config.
pub struct OfScenario {
    inner: Scenario,
}

/// Simulation output.
pub struct OfTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> OfStatus {
    match err {
        Error::Config(_) | Error::Io { .. } => OfStatus::ConfigError,
        Error::InvalidParameter { .. } | Error::InvalidSettings(_) | Error::Dimension(_) => OfStatus::InvalidArgument,
        _ => OfStatus::NumericalError,
    }
}

struct Fail(OfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<OfStatus, Fail>) -> OfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => {
            if s == OfStatus::Ok {
                set_error("");
            }
            s
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside orbitforge");
            OfStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(OfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(OfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn im_params(p: &OfImParams) -> ImParams {
    ImParams {
        r: p.r,
        beta_star: p.beta_star,
        omega_star: p.omega_star,
        k: p.k,
    }
}

fn pendulum_params(p: &OfPendulumParams) -> PendulumParams {
    if p.global == 0 {
        PendulumParams::local(p.gamma1, p.theta_star)
    } else {
        PendulumParams::almost_global(p.gamma1, p.gamma2, p.theta_star)
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next orbitforge call on this thread.
#[no_mangle]
pub extern "C" fn of_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Runs the verification suite of a built-in design. `violations` receives
/// the total violation count. Returns `OF_STATUS_ANALYSIS_FAILED` when any
/// check fails.
///
/// # Safety
/// `design` must be a NUL-terminated string and `violations` writable.
#[no_mangle]
pub unsafe extern "C" fn of_verify(design: *const c_char, grid: usize, seed: u64, violations: *mut usize) -> OfStatus {
    guard(|| {
        let name = text(design, "design")?;
        let count = out(violations, "violations")?;
        let opts = VerifyOptions {
            grid,
            seed,
            ..VerifyOptions::default()
        };
        let report = verify::verify_builtin(name, &opts)?;
        *count = report.violation_count;
        if report.passed {
            Ok(OfStatus::Ok)
        } else {
            Err(Fail(OfStatus::AnalysisFailed, format!("{name}: {} violations", report.violation_count)))
        }
    })
}

/// Fixed-frame motor control `u = u(x)`; `x` has 3 entries, `u` 2.
///
/// # Safety
/// `params`, `x` and `u` must point to valid memory of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn of_im_control(params: *const OfImParams, x: *const f64, u: *mut f64) -> OfStatus {
    guard(|| {
        let p = im_params(params.as_ref().ok_or_else(|| null("params"))?);
        let x = Vector::from_column_slice(slice(x, 3, "x")?);
        if u.is_null() {
            return Err(null("u"));
        }
        if x[0].hypot(x[1]) == 0.0 {
            return Err(Fail(OfStatus::InvalidArgument, "control undefined at zero flux".into()));
        }
        let v = im::im_control(&p, &x);
        std::slice::from_raw_parts_mut(u, 2).copy_from_slice(v.as_slice());
        Ok(OfStatus::Ok)
    })
}

/// Pendulum control `u = u(θ, ω)`.
///
/// # Safety
/// `params` and `x` (2 entries) must be readable, `u` writable.
#[no_mangle]
pub unsafe extern "C" fn of_pendulum_control(params: *const OfPendulumParams, x: *const f64, u: *mut f64) -> OfStatus {
    guard(|| {
        let p = pendulum_params(params.as_ref().ok_or_else(|| null("params"))?);
        p.validate()?;
        let x = Vector::from_column_slice(slice(x, 2, "x")?);
        *out(u, "u")? = pendulum::pendulum_control(&p, &x);
        Ok(OfStatus::Ok)
    })
}

/// Infinity norm of the difference between the fixed-frame law and the
/// rotated field-oriented law at state `x` (3 entries) and frame angle `theta`.
///
/// # Safety
/// `params` and `x` must be readable, `residual` writable.
#[no_mangle]
pub unsafe extern "C" fn of_foc_equivalence_residual(
    params: *const OfImParams,
    x: *const f64,
    theta: f64,
    residual: *mut f64,
) -> OfStatus {
    guard(|| {
        let p = im_params(params.as_ref().ok_or_else(|| null("params"))?);
        let x = Vector::from_column_slice(slice(x, 3, "x")?);
        *out(residual, "residual")? = im::foc_equivalence_residual(&p, &x, theta).amax();
        Ok(OfStatus::Ok)
    })
}

/// Loads and runs a config file, writing outputs to `out_dir` (or the
/// config's own output directory when null). Status mirrors the CLI exit code.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_dir` may be null.
#[no_mangle]
pub unsafe extern "C" fn of_run_config(path: *const c_char, out_dir: *const c_char) -> OfStatus {
    guard(|| {
        let path = PathBuf::from(text(path, "path")?);
        let (cfg, _) = ScenarioConfig::load(&path)?;
        let dir = match out_dir.is_null() {
            true => cfg
                .output
                .dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name)),
            false => PathBuf::from(text(out_dir, "out_dir")?),
        };
        let sc = Scenario::build(cfg, path.parent().unwrap_or(Path::new("")))?;
        let outcome = scenario::run_scenario(&sc)?;
        outcome.write(&dir)?;
        if outcome.passed() {
            Ok(OfStatus::Ok)
        } else {
            Err(Fail(OfStatus::AnalysisFailed, format!("{}: analyses failed", sc.config.name)))
        }
    })
}

/// Loads a scenario config into `*scenario`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `scenario` writable.
#[no_mangle]
pub unsafe extern "C" fn of_scenario_load(path: *const c_char, scenario: *mut *mut OfScenario) -> OfStatus {
    guard(|| {
        let slot = out(scenario, "scenario")?;
        *slot = std::ptr::null_mut();
        let path = PathBuf::from(text(path, "path")?);
        let (cfg, _) = ScenarioConfig::load(&path)?;
        let inner = Scenario::build(cfg, path.parent().unwrap_or(Path::new("")))?;
        *slot = Box::into_raw(Box::new(OfScenario { inner }));
        Ok(OfStatus::Ok)
    })
}

/// # Safety
/// `scenario` must come from [`of_scenario_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn of_scenario_free(scenario: *mut OfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulates a loaded scenario into `*trajectory`.
///
/// # Safety
/// `scenario` must be a live handle and `trajectory` writable.
#[no_mangle]
pub unsafe extern "C" fn of_scenario_simulate(scenario: *const OfScenario, trajectory: *mut *mut OfTrajectory) -> OfStatus {
    guard(|| {
        let slot = out(trajectory, "trajectory")?;
        *slot = std::ptr::null_mut();
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let inner = sc.inner.simulate()?;
        *slot = Box::into_raw(Box::new(OfTrajectory { inner }));
        Ok(OfStatus::Ok)
    })
}

/// # Safety
/// `trajectory` must come from [`of_scenario_simulate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn of_trajectory_free(trajectory: *mut OfTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of samples and state dimension.
///
/// # Safety
/// `trajectory` must be a live handle; `len` and `dim` writable.
#[no_mangle]
pub unsafe extern "C" fn of_trajectory_shape(trajectory: *const OfTrajectory, len: *mut usize, dim: *mut usize) -> OfStatus {
    guard(|| {
        let t = &trajectory.as_ref().ok_or_else(|| null("trajectory"))?.inner;
        *out(len, "len")? = t.len();
        *out(dim, "dim")? = t.n;
        Ok(OfStatus::Ok)
    })
}

/// Copies sample `index`: time into `*t`, state into `x` (capacity `dim`),
/// and the distance to the orbit into `*dist`.
///
/// # Safety
/// `trajectory` must be a live handle; `x` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn of_trajectory_sample(
    trajectory: *const OfTrajectory,
    index: usize,
    t: *mut f64,
    x: *mut f64,
    dim: usize,
    dist: *mut f64,
) -> OfStatus {
    guard(|| {
        let tr = &trajectory.as_ref().ok_or_else(|| null("trajectory"))?.inner;
        if index >= tr.len() {
            return Err(Fail(OfStatus::InvalidArgument, format!("index {index} out of range (len {})", tr.len())));
        }
        if dim != tr.n {
            return Err(Fail(OfStatus::InvalidArgument, format!("dim {dim} does not match state dimension {}", tr.n)));
        }
        if x.is_null() {
            return Err(null("x"));
        }
        *out(t, "t")? = tr.t[index];
        *out(dist, "dist")? = tr.dist[index];
        std::slice::from_raw_parts_mut(x, dim).copy_from_slice(tr.x[index].as_slice());
        Ok(OfStatus::Ok)
    })
}
