// SPDX-License-Identifier: Apache-2.0

//! C ABI over `gaugebench`.
//!
//! Objects cross the boundary as opaque handles created by `gb_*_new`/`parse`
//! style constructors and released with the matching `gb_*_free`. Every entry
//! point returns a [`GbStatus`]; on failure the message is available from
//! [`gb_last_error_message`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as [`GbStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gaugebench::cli::{initial_state, InitState};
use gaugebench::collective::{self, NgOptions};
use gaugebench::lindblad::{self, build_liouvillian, LindbladError, Trajectory};
use gaugebench::meanfield::{self, BcsParams, BcsTrajectory, MomentumGrid};
use gaugebench::opspec::{parse_model, validate, ModelSpec};
use gaugebench::response::{self, GreensKind, SweepRanges};
use gaugebench::symmetry::{self, SymmetryClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    CapacityExceeded = 4,
    NumericalFailure = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbSymmetryClass {
    Strong = 0,
    Weak = 1,
    None = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbInit {
    Vacuum = 0,
    Mixed = 1,
    Block = 2,
    Random = 3,
    Pair = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbGreensKind {
    Retarded = 0,
    Advanced = 1,
    Lesser = 2,
    TimeOrdered = 3,
}

/// One row of an exact trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GbStepRecord {
    pub t: f64,
    pub n: f64,
    pub on_direct: f64,
    pub on_vectorized: f64,
    /// NaN when the doubled space exceeds capacity.
    pub on_swap: f64,
    pub trace: f64,
}

/// One row of a mean-field trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GbBcsRecord {
    pub t: f64,
    pub delta_re: f64,
    pub delta_im: f64,
    pub n: f64,
    pub on: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbBcsConfig {
    pub grid: usize,
    pub cutoff: f64,
    pub mu: f64,
    pub coupling: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GbWtSummary {
    pub samples: usize,
    pub max_residual: f64,
    pub gauge_shift_max_delta: f64,
    pub transversality_max: f64,
}

/// Parsed lattice model.
pub struct GbModel(ModelSpec);

/// Exact Lindblad trajectory.
pub struct GbTrajectory(Trajectory);

/// Mean-field BCS trajectory.
pub struct GbBcsTrajectory(BcsTrajectory);

struct Failure(GbStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(GbStatus::InvalidArgument, msg.into())
    }
}

impl From<LindbladError> for Failure {
    fn from(e: LindbladError) -> Self {
        let status = match e {
            LindbladError::CapacityExceeded { .. } => GbStatus::CapacityExceeded,
            LindbladError::NonConvergence { .. }
            | LindbladError::TraceDrift { .. }
            | LindbladError::Positivity { .. }
            | LindbladError::TooCoarse(_) => GbStatus::NumericalFailure,
            _ => GbStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<meanfield::MeanFieldError> for Failure {
    fn from(e: meanfield::MeanFieldError) -> Self {
        let status = match e {
            meanfield::MeanFieldError::InvalidGrid(_) | meanfield::MeanFieldError::InvalidInput(_) => {
                GbStatus::InvalidArgument
            }
            _ => GbStatus::NumericalFailure,
        };
        Failure(status, e.to_string())
    }
}

impl From<collective::CollectiveError> for Failure {
    fn from(e: collective::CollectiveError) -> Self {
        let status = match e {
            collective::CollectiveError::InvalidInput(_) | collective::CollectiveError::ZeroGap(_) => {
                GbStatus::InvalidArgument
            }
            _ => GbStatus::NumericalFailure,
        };
        Failure(status, e.to_string())
    }
}

impl From<response::ResponseError> for Failure {
    fn from(e: response::ResponseError) -> Self {
        let status = match e {
            response::ResponseError::Singular(_) => GbStatus::NumericalFailure,
            _ => GbStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            GbStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(GbStatus::NullPointer, "null pointer argument".into())
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(null)
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid("string is not UTF-8"))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Version of the library as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn gb_schema_version() -> u32 {
    gaugebench::SCHEMA_VERSION
}

/// Parses and validates a model from NUL-terminated text.
///
/// # Safety
/// `text` must be a valid C string and `model` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gb_model_parse(text: *const c_char, model: *mut *mut GbModel) -> GbStatus {
    guard(|| {
        let slot = out(model)?;
        let spec = parse_model(string(text)?).map_err(|e| Failure(GbStatus::ParseError, e.to_string()))?;
        let issues = validate(&spec);
        if !issues.is_empty() {
            return Err(Failure::invalid(issues.to_string()));
        }
        *slot = Box::into_raw(Box::new(GbModel(spec)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`gb_model_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gb_model_free(model: *mut GbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `sites` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_num_sites(model: *const GbModel, sites: *mut usize) -> GbStatus {
    guard(|| {
        *out(sites)? = borrow(model)?.0.num_sites;
        Ok(())
    })
}

/// Symmetry class and the three commutator norms `‖[H,N]‖`, `max_k ‖[L_k,N]‖`,
/// `‖[𝒩,ℒ]‖`; `norms` may be NULL.
///
/// # Safety
/// `model` must be a live handle, `class` writable, `norms` NULL or writable
/// for three doubles.
#[no_mangle]
pub unsafe extern "C" fn gb_model_classify(
    model: *const GbModel,
    class: *mut GbSymmetryClass,
    norms: *mut f64,
) -> GbStatus {
    guard(|| {
        let slot = out(class)?;
        let report = symmetry::classify(&borrow(model)?.0)?;
        *slot = match report.class {
            SymmetryClass::Strong => GbSymmetryClass::Strong,
            SymmetryClass::Weak => GbSymmetryClass::Weak,
            SymmetryClass::None => GbSymmetryClass::None,
        };
        if !norms.is_null() {
            let c = &report.commutator_norms;
            let jumps = c.jumps.iter().map(|j| j.norm).fold(0.0, f64::max);
            ptr::copy_nonoverlapping([c.hamiltonian, jumps, c.superoperator].as_ptr(), norms, 3);
        }
        Ok(())
    })
}

fn init_state(init: GbInit) -> InitState {
    match init {
        GbInit::Vacuum => InitState::Vacuum,
        GbInit::Mixed => InitState::Mixed,
        GbInit::Block => InitState::Block,
        GbInit::Random => InitState::Random,
        GbInit::Pair => InitState::Pair,
    }
}

/// Exact evolution of `model` from the chosen initial state.
///
/// # Safety
/// `model` must be a live handle and `traj` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_simulate(
    model: *const GbModel,
    init: GbInit,
    seed: u64,
    t_final: f64,
    dt: f64,
    traj: *mut *mut GbTrajectory,
) -> GbStatus {
    guard(|| {
        let slot = out(traj)?;
        let spec = &borrow(model)?.0;
        let l = build_liouvillian(spec)?;
        let rho0 =
            initial_state(init_state(init), spec.num_sites, seed).map_err(|e| Failure::invalid(e.to_string()))?;
        let t = lindblad::evolve(&l, &rho0, t_final, dt)?;
        *slot = Box::into_raw(Box::new(GbTrajectory(t)));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`gb_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gb_trajectory_free(traj: *mut GbTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded rows, including `t = 0`.
///
/// # Safety
/// `traj` must be a live handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_trajectory_len(traj: *const GbTrajectory, len: *mut usize) -> GbStatus {
    guard(|| {
        *out(len)? = borrow(traj)?.0.records.len();
        Ok(())
    })
}

/// # Safety
/// `traj` must be a live handle and `record` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_trajectory_record(
    traj: *const GbTrajectory,
    index: usize,
    record: *mut GbStepRecord,
) -> GbStatus {
    guard(|| {
        let slot = out(record)?;
        let t = &borrow(traj)?.0;
        let r =
            t.records.get(index).ok_or_else(|| Failure::invalid(format!("row {index} out of {}", t.records.len())))?;
        *slot = GbStepRecord {
            t: r.t,
            n: r.n,
            on_direct: r.on_direct,
            on_vectorized: r.on_vec,
            on_swap: r.on_swap.unwrap_or(f64::NAN),
            trace: r.trace,
        };
        Ok(())
    })
}

/// Writes the trajectory table to `path`.
///
/// # Safety
/// `traj` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn gb_trajectory_write_csv(traj: *const GbTrajectory, path: *const c_char) -> GbStatus {
    guard(|| {
        let t = &borrow(traj)?.0;
        let file = std::fs::File::create(Path::new(string(path)?)).map_err(|e| Failure(GbStatus::Io, e.to_string()))?;
        t.write_csv(file, None).map_err(|e| Failure(GbStatus::Io, e.to_string()))
    })
}

/// Self-consistent mean-field run from the BCS ground state of `config`.
///
/// # Safety
/// `config` must be readable and `traj` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_bcs_run(config: *const GbBcsConfig, traj: *mut *mut GbBcsTrajectory) -> GbStatus {
    guard(|| {
        let slot = out(traj)?;
        let c = borrow(config)?;
        let grid = MomentumGrid::uniform_3d(c.grid, c.cutoff, c.mu, 1.0)?;
        let delta0 = meanfield::solve_gap(c.coupling, &grid)?;
        let state = meanfield::init_bcs(delta0, &grid)?;
        let t = meanfield::evolve_bcs(&state, &grid, &BcsParams::new(c.coupling, c.gamma, c.dt, c.t_final))?;
        *slot = Box::into_raw(Box::new(GbBcsTrajectory(t)));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`gb_bcs_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gb_bcs_free(traj: *mut GbBcsTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// # Safety
/// `traj` must be a live handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_bcs_len(traj: *const GbBcsTrajectory, len: *mut usize) -> GbStatus {
    guard(|| {
        *out(len)? = borrow(traj)?.0.records.len();
        Ok(())
    })
}

/// # Safety
/// `traj` must be a live handle and `record` writable.
#[no_mangle]
pub unsafe extern "C" fn gb_bcs_record(
    traj: *const GbBcsTrajectory,
    index: usize,
    record: *mut GbBcsRecord,
) -> GbStatus {
    guard(|| {
        let slot = out(record)?;
        let t = &borrow(traj)?.0;
        let r =
            t.records.get(index).ok_or_else(|| Failure::invalid(format!("row {index} out of {}", t.records.len())))?;
        *slot = GbBcsRecord { t: r.t, delta_re: r.delta.re, delta_im: r.delta.im, n: r.n, on: r.on };
        Ok(())
    })
}

/// Fitted sound velocity over `qsteps` evenly spaced wavenumbers.
///
/// # Safety
/// `slope` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_sound_velocity(
    delta: f64,
    grid: usize,
    cutoff: f64,
    mu: f64,
    qmin: f64,
    qmax: f64,
    qsteps: usize,
    slope: *mut f64,
) -> GbStatus {
    guard(|| {
        let slot = out(slope)?;
        let g = MomentumGrid::uniform_3d(grid, cutoff, mu, 1.0)?;
        let qs = collective::q_window(qmin, qmax, qsteps)?;
        *slot = collective::solve_sound_velocity(&qs, delta, &g, &NgOptions::default())?.slope;
        Ok(())
    })
}

/// `3√3 γ n v_F² / (8Δ²)`.
///
/// # Safety
/// `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_diffusion_analytic(gamma: f64, n: f64, v_fermi: f64, delta: f64, d: *mut f64) -> GbStatus {
    guard(|| {
        *out(d)? = collective::diffusion_analytic(gamma, n, v_fermi, delta)?;
        Ok(())
    })
}

/// 2×2 Nambu Green's function, row-major, as interleaved `re, im` pairs.
///
/// # Safety
/// `values` must be writable for eight doubles.
#[no_mangle]
pub unsafe extern "C" fn gb_greens(
    omega: f64,
    eps: f64,
    delta: f64,
    gamma_n: f64,
    kind: GbGreensKind,
    values: *mut f64,
) -> GbStatus {
    guard(|| {
        if values.is_null() {
            return Err(null());
        }
        let kind = match kind {
            GbGreensKind::Retarded => GreensKind::Retarded,
            GbGreensKind::Advanced => GreensKind::Advanced,
            GbGreensKind::Lesser => GreensKind::Lesser,
            GbGreensKind::TimeOrdered => GreensKind::TimeOrdered,
        };
        let g = response::greens(omega, eps, delta, gamma_n, kind)?;
        let flat = [g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]];
        for (i, z) in flat.iter().enumerate() {
            *values.add(2 * i) = z.re;
            *values.add(2 * i + 1) = z.im;
        }
        Ok(())
    })
}

/// Randomized vertex-identity and gauge-shift sweeps.
///
/// # Safety
/// `summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_wt_check(samples: usize, seed: u64, summary: *mut GbWtSummary) -> GbStatus {
    guard(|| {
        let slot = out(summary)?;
        if samples == 0 {
            return Err(Failure::invalid("samples must be positive"));
        }
        let wt = response::wt_sweep(samples, seed, &SweepRanges::default());
        let gauge = response::gauge_sweep(samples, seed.wrapping_add(1));
        *slot = GbWtSummary {
            samples,
            max_residual: wt.max_residual,
            gauge_shift_max_delta: gauge.max_gauge_delta,
            transversality_max: gauge.max_transversality,
        };
        Ok(())
    })
}
