//! C ABI for stochflow.
//!
//! Grids, fields and velocity histories cross the boundary as opaque
//! pointers created by `stochflow_*_new`/solver calls and released with
//! the matching `*_free`. Every fallible call returns a [`StochflowStatus`]
//! and writes its result through an out-pointer; the message of the last
//! failure on the calling thread is available from
//! [`stochflow_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stochflow::diffusive::{solve_diffusive, DiffusiveConfig};
use stochflow::interp::Interpolation;
use stochflow::reference::{reference_solve, shear_mode, taylor_green, ReferenceConfig};
use stochflow::snapshot::Snapshot;
use stochflow::spectral::leray_project;
use stochflow::stochastic::{solve, solve_windowed, StochasticConfig};
use stochflow::{Error, Field, TorusGrid, VelocityHistory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoConvergence = 3,
    RemapRequired = 4,
    NotInvertible = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
    Other = 9,
}

impl From<&Error> for StochflowStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidGrid(_)
            | Error::Shape(_)
            | Error::InvalidParameter { .. }
            | Error::Config(_)
            | Error::ConfigParse { .. }
            | Error::Unsupported(_)
            | Error::Degenerate(_) => Self::InvalidArgument,
            Error::NoConvergence { .. } => Self::NoConvergence,
            Error::RemapRequired { .. } | Error::BallExit { .. } => Self::RemapRequired,
            Error::NotInvertible { .. } => Self::NotInvertible,
            Error::SingularMatrix { .. } | Error::NonFinite(_) | Error::Cfl { .. } | Error::PathFailures { .. } => {
                Self::Numerical
            }
            Error::Io(_) | Error::Format(_) => Self::Io,
        }
    }
}

/// Periodic grid handle.
pub struct StochflowGrid(TorusGrid);

/// Field handle (scalar, vector or matrix valued).
pub struct StochflowField(Field);

/// Time-sliced velocity handle.
pub struct StochflowHistory(VelocityHistory);

/// Solver parameters. `interp` is 0 for Lagrange and 1 for trigonometric
/// interpolation; `windowed` is non-zero to restart the stochastic solver
/// before the displacement leaves its ball.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StochflowParams {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub samples: u64,
    pub seed: u64,
    pub picard_tol: f64,
    pub picard_max: u32,
    pub remap_threshold: f64,
    pub interp: u32,
    pub windowed: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Result<(), StochflowStatus>) -> StochflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StochflowStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            StochflowStatus::Panic
        }
    }
}

fn fail(e: Error) -> StochflowStatus {
    let s = StochflowStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> StochflowStatus {
    set_error(format!("{what} is null"));
    StochflowStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, StochflowStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), StochflowStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<String, StochflowStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| {
        set_error("path is not UTF-8".into());
        StochflowStatus::InvalidArgument
    })
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn stochflow_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stochflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Default solver parameters.
#[no_mangle]
pub extern "C" fn stochflow_params_default() -> StochflowParams {
    let s = StochasticConfig::default();
    StochflowParams {
        nu: s.nu,
        dt: s.dt,
        t_final: s.t_final,
        samples: s.samples as u64,
        seed: s.seed,
        picard_tol: s.picard_tol,
        picard_max: s.picard_max as u32,
        remap_threshold: s.remap_threshold,
        interp: 0,
        windowed: 0,
    }
}

/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn stochflow_grid_new(
    dim: u32,
    n: u32,
    length: f64,
    out: *mut *mut StochflowGrid,
) -> StochflowStatus {
    guard(|| {
        let g = TorusGrid::new(dim as usize, n as usize, length).map_err(fail)?;
        put(out, StochflowGrid(g))
    })
}

/// # Safety
/// `grid` must be null or a handle from [`stochflow_grid_new`].
#[no_mangle]
pub unsafe extern "C" fn stochflow_grid_free(grid: *mut StochflowGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of values of a field of `rank` on `grid` (`nodes · dim^rank`).
///
/// # Safety
/// `grid` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn stochflow_grid_values(grid: *const StochflowGrid, rank: u32) -> usize {
    grid.as_ref().map_or(0, |g| g.0.nodes() * g.0.components(rank as usize))
}

/// Builds a field from node-major interleaved values.
///
/// # Safety
/// `values` must point to `len` doubles; `grid` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_field_from_values(
    grid: *const StochflowGrid,
    rank: u32,
    values: *const f64,
    len: usize,
    out: *mut *mut StochflowField,
) -> StochflowStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, len);
        let f = Field::from_interleaved(g.0, rank as usize, v).map_err(fail)?;
        put(out, StochflowField(f))
    })
}

/// Writes node-major interleaved values into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn stochflow_field_values(
    field: *const StochflowField,
    buf: *mut f64,
    len: usize,
) -> StochflowStatus {
    guard(|| {
        let f = deref(field, "field")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = f.0.to_interleaved();
        if len < v.len() {
            return Err(fail(Error::Shape(format!("buffer of {len} for {} values", v.len()))));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a field handle.
#[no_mangle]
pub unsafe extern "C" fn stochflow_field_free(field: *mut StochflowField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Taylor-Green vortex of the given amplitude (2D, length 2π).
///
/// # Safety
/// `grid` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_taylor_green(
    grid: *const StochflowGrid,
    amplitude: f64,
    out: *mut *mut StochflowField,
) -> StochflowStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let ex = taylor_green(g.0).map_err(fail)?.with_amplitude(amplitude);
        put(out, StochflowField(ex.initial_data()))
    })
}

/// Shear mode `(sin(2πk y / L), 0, ...)`.
///
/// # Safety
/// `grid` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_shear_mode(
    grid: *const StochflowGrid,
    k: i64,
    out: *mut *mut StochflowField,
) -> StochflowStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        put(out, StochflowField(shear_mode(g.0, k).map_err(fail)?.initial_data()))
    })
}

/// Leray projection of a vector field.
///
/// # Safety
/// `field` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_leray_project(
    field: *const StochflowField,
    out: *mut *mut StochflowField,
) -> StochflowStatus {
    guard(|| {
        let f = deref(field, "field")?;
        put(out, StochflowField(leray_project(&f.0).map_err(fail)?))
    })
}

/// Saves a field as a snapshot file.
///
/// # Safety
/// `field` must be valid and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn stochflow_field_save(
    field: *const StochflowField,
    time: f64,
    path: *const c_char,
) -> StochflowStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let p = path_arg(path)?;
        Snapshot::new(f.0.clone(), time).save(p).map_err(fail)
    })
}

/// Loads a snapshot file; its time is written to `time` when non-null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_field_load(
    path: *const c_char,
    time: *mut f64,
    out: *mut *mut StochflowField,
) -> StochflowStatus {
    guard(|| {
        let p = path_arg(path)?;
        let s = Snapshot::load(p).map_err(fail)?;
        if !time.is_null() {
            *time = s.time;
        }
        put(out, StochflowField(s.field))
    })
}

fn stochastic_config(p: &StochflowParams) -> Result<StochasticConfig, StochflowStatus> {
    let interp = match p.interp {
        0 => Interpolation::Lagrange,
        1 => Interpolation::Trig,
        k => return Err(fail(Error::InvalidParameter { name: "interp", reason: format!("{k} is not 0 or 1") })),
    };
    Ok(StochasticConfig {
        nu: p.nu,
        dt: p.dt,
        t_final: p.t_final,
        samples: p.samples as usize,
        seed: p.seed,
        picard_tol: p.picard_tol,
        picard_max: p.picard_max as usize,
        remap_threshold: p.remap_threshold,
        interp,
    })
}

/// Monte-Carlo Picard solve of the stochastic Lagrangian system.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_solve_stochastic(
    u0: *const StochflowField,
    params: *const StochflowParams,
    out: *mut *mut StochflowHistory,
) -> StochflowStatus {
    guard(|| {
        let u = deref(u0, "u0")?;
        let p = deref(params, "params")?;
        let cfg = stochastic_config(p)?;
        let r = if p.windowed != 0 { solve_windowed(&u.0, &cfg) } else { solve(&u.0, &cfg) };
        put(out, StochflowHistory(r.map_err(fail)?.0))
    })
}

/// Deterministic diffusive-Lagrangian solve (`samples`, `seed`, `interp`
/// and `windowed` are ignored).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_solve_diffusive(
    u0: *const StochflowField,
    params: *const StochflowParams,
    out: *mut *mut StochflowHistory,
) -> StochflowStatus {
    guard(|| {
        let u = deref(u0, "u0")?;
        let p = deref(params, "params")?;
        let cfg = DiffusiveConfig {
            nu: p.nu,
            dt: p.dt,
            t_final: p.t_final,
            picard_tol: p.picard_tol,
            picard_max: p.picard_max as usize,
            remap_threshold: p.remap_threshold,
            max_window_steps: None,
        };
        put(out, StochflowHistory(solve_diffusive(&u.0, &cfg).map_err(fail)?.0))
    })
}

/// Pseudo-spectral Navier-Stokes reference solve (only `nu`, `dt` and
/// `t_final` are used).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_solve_reference(
    u0: *const StochflowField,
    params: *const StochflowParams,
    out: *mut *mut StochflowHistory,
) -> StochflowStatus {
    guard(|| {
        let u = deref(u0, "u0")?;
        let p = deref(params, "params")?;
        let h = reference_solve(&u.0, &ReferenceConfig::new(p.nu, p.dt, p.t_final)).map_err(fail)?;
        put(out, StochflowHistory(h))
    })
}

/// Number of stored slices (steps + 1).
///
/// # Safety
/// `h` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn stochflow_history_len(h: *const StochflowHistory) -> usize {
    h.as_ref().map_or(0, |h| h.0.len())
}

/// Time of slice `k`, NaN when out of range.
///
/// # Safety
/// `h` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn stochflow_history_time(h: *const StochflowHistory, k: usize) -> f64 {
    match h.as_ref() {
        Some(h) if k < h.0.len() => h.0.time(k),
        _ => f64::NAN,
    }
}

/// Copy of slice `k` as a new field handle.
///
/// # Safety
/// `h` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stochflow_history_slice(
    h: *const StochflowHistory,
    k: usize,
    out: *mut *mut StochflowField,
) -> StochflowStatus {
    guard(|| {
        let h = deref(h, "history")?;
        if k >= h.0.len() {
            return Err(fail(Error::InvalidParameter {
                name: "k",
                reason: format!("slice {k} of {}", h.0.len()),
            }));
        }
        put(out, StochflowField(h.0.slice(k).clone()))
    })
}

/// # Safety
/// `h` must be null or a history handle.
#[no_mangle]
pub unsafe extern "C" fn stochflow_history_free(h: *mut StochflowHistory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
