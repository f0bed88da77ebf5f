//! C ABI for the moment-control toolkit: opaque handles, integer status
//! codes, and a thread-local last-error message. The header is generated by
//! cbindgen into `include/momheat.h` at build time.
//!
//! Ownership: every `*_new`/`*_load`/producing call hands back a handle the
//! caller must release with the matching `*_free`; strings returned by
//! `mh_last_error_message` stay valid until the next failing call on the
//! same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use momheat_core::extraction::{self, ControlLawFile, ControllerForm, ControllerSpec};
use momheat_core::lqr;
use momheat_core::pdesim::{self, FeedbackLaw, Mesh, SimOptions, SimTrace, ZeroControl};
use momheat_core::problem::{HeatControlProblem, ProblemConfig, RelaxationConfig, SolverSection};
use momheat_core::sdpsolver::{self, PseudoMoments, SdpOptions, SolveStatus};
use momheat_core::weakform;
use momheat_core::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    IoError = 4,
    ParseError = 5,
    /// Solve finished but not at the optimal status.
    NotOptimal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(msg).ok();
    });
}

fn status_of(err: &Error) -> MhStatus {
    match err {
        Error::Io { .. } => MhStatus::IoError,
        Error::Parse { .. } => MhStatus::ParseError,
        Error::Solver(_) | Error::Linalg(_) => MhStatus::SolverFailure,
        _ => MhStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> MhStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// Message describing the most recent error on this thread, or NULL.
#[no_mangle]
pub extern "C" fn mh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |s| s.as_ptr())
    })
}

// ---------------------------------------------------------------------
// Opaque handles. The exported types carry no fields; internally they wrap
// boxed Rust state.

/// Problem instance plus relaxation/solver settings (opaque).
#[repr(C)]
pub struct MhProblem {
    _private: [u8; 0],
}

/// Pseudo-moment dump of a solved relaxation (opaque).
#[repr(C)]
pub struct MhMoments {
    _private: [u8; 0],
}

/// A feedback law: extracted kernel controller or LQR gain (opaque).
#[repr(C)]
pub struct MhController {
    _private: [u8; 0],
}

/// Closed-loop simulation trace (opaque).
#[repr(C)]
pub struct MhTrace {
    _private: [u8; 0],
}

struct ProblemState {
    problem: HeatControlProblem,
    relax: RelaxationConfig,
    solver: SolverSection,
}

struct TraceState {
    trace: SimTrace,
    mesh: Mesh,
}

fn problem_ref<'a>(p: *const MhProblem) -> Option<&'a ProblemState> {
    unsafe { (p as *const ProblemState).as_ref() }
}

fn moments_ref<'a>(m: *const MhMoments) -> Option<&'a PseudoMoments> {
    unsafe { (m as *const PseudoMoments).as_ref() }
}

fn controller_ref<'a>(c: *const MhController) -> Option<&'a ControlLawFile> {
    unsafe { (c as *const ControlLawFile).as_ref() }
}

fn trace_ref<'a>(t: *const MhTrace) -> Option<&'a TraceState> {
    unsafe { (t as *const TraceState).as_ref() }
}

fn cstr_arg<'a>(s: *const c_char) -> Result<&'a str, MhStatus> {
    if s.is_null() {
        set_error("null string argument".into());
        return Err(MhStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(s) }.to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        MhStatus::ParseError
    })
}

macro_rules! out_ptr {
    ($out:expr) => {
        match unsafe { $out.as_mut() } {
            Some(slot) => slot,
            None => {
                set_error("null output pointer".into());
                return MhStatus::NullPointer;
            }
        }
    };
}

// ---------------------------------------------------------------------
// Problem construction.

/// Loads a problem from a TOML configuration file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn mh_problem_from_config(
    path: *const c_char,
    out: *mut *mut MhProblem,
) -> MhStatus {
    let out = out_ptr!(out);
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let cfg = match ProblemConfig::from_path(Path::new(path)) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let problem = match cfg.problem() {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let state = ProblemState {
        problem,
        relax: cfg.relaxation(),
        solver: cfg.solver.clone(),
    };
    *out = Box::into_raw(Box::new(state)) as *mut MhProblem;
    MhStatus::Ok
}

/// Built-in reference instance; `nonlinear = 0` gives the linear variant.
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn mh_problem_reference(
    nonlinear: i32,
    relaxation_degree: u32,
    out: *mut *mut MhProblem,
) -> MhStatus {
    let out = out_ptr!(out);
    let problem = if nonlinear != 0 {
        momheat_core::problem::paper_instance_nonlinear()
    } else {
        momheat_core::problem::paper_instance_linear()
    };
    let relax = RelaxationConfig::new(relaxation_degree);
    if let Err(e) = relax.validate(&problem) {
        return fail(e);
    }
    let state = ProblemState {
        problem,
        relax,
        solver: SolverSection::default(),
    };
    *out = Box::into_raw(Box::new(state)) as *mut MhProblem;
    MhStatus::Ok
}

/// # Safety
/// `p` must come from a `mh_problem_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mh_problem_free(p: *mut MhProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p as *mut ProblemState));
    }
}

// ---------------------------------------------------------------------
// Relaxation solve.

/// Assembles and solves the moment relaxation; on success hands back the
/// pseudo-moment dump. Returns `NotOptimal` (with the moments still
/// produced) when the solver stopped away from optimality.
///
/// # Safety
/// `p` must be a live problem handle; `out` a valid output slot.
#[no_mangle]
pub unsafe extern "C" fn mh_relax(p: *const MhProblem, out: *mut *mut MhMoments) -> MhStatus {
    let out = out_ptr!(out);
    let Some(state) = problem_ref(p) else {
        set_error("null problem handle".into());
        return MhStatus::NullPointer;
    };
    let program = match weakform::assemble(&state.problem, &state.relax) {
        Ok(prog) => prog,
        Err(e) => return fail(e),
    };
    let options = SdpOptions {
        tol: state.solver.tol,
        max_iter: state.solver.max_iter,
        cone_slack: state.solver.cone_slack,
        ..Default::default()
    };
    let conic = sdpsolver::ConicProblem::from_program(&program);
    let solution = match sdpsolver::solve_conic(&conic, &options) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let optimal = solution.status == SolveStatus::Optimal;
    let pm = PseudoMoments::from_solution(&state.problem, &state.relax, &program, &solution);
    *out = Box::into_raw(Box::new(pm)) as *mut MhMoments;
    if optimal {
        MhStatus::Ok
    } else {
        set_error(format!(
            "solver stopped with status {}",
            solution.status.name()
        ));
        MhStatus::NotOptimal
    }
}

/// # Safety
/// `m` must be a live moments handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mh_moments_objective(m: *const MhMoments, out: *mut f64) -> MhStatus {
    let out = out_ptr!(out);
    match moments_ref(m) {
        Some(pm) => {
            *out = pm.objective;
            MhStatus::Ok
        }
        None => MhStatus::NullPointer,
    }
}

/// # Safety
/// `m` must be a live moments handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mh_moments_degree(m: *const MhMoments, out: *mut u32) -> MhStatus {
    let out = out_ptr!(out);
    match moments_ref(m) {
        Some(pm) => {
            *out = pm.degree;
            MhStatus::Ok
        }
        None => MhStatus::NullPointer,
    }
}

/// # Safety
/// `m` live handle, `path` valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mh_moments_save(m: *const MhMoments, path: *const c_char) -> MhStatus {
    let Some(pm) = moments_ref(m) else {
        return MhStatus::NullPointer;
    };
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match pm.save(Path::new(path)) {
        Ok(()) => MhStatus::Ok,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `path` valid string, `out` valid output slot.
#[no_mangle]
pub unsafe extern "C" fn mh_moments_load(path: *const c_char, out: *mut *mut MhMoments) -> MhStatus {
    let out = out_ptr!(out);
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match PseudoMoments::load(Path::new(path)) {
        Ok(pm) => {
            *out = Box::into_raw(Box::new(pm)) as *mut MhMoments;
            MhStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// Handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mh_moments_free(m: *mut MhMoments) {
    if !m.is_null() {
        drop(Box::from_raw(m as *mut PseudoMoments));
    }
}

// ---------------------------------------------------------------------
// Controller extraction and LQR.

/// Kernel family selector for `mh_extract`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MhForm {
    General = 0,
    Linear = 1,
    Semilinear = 2,
}

/// Extracts a feedback controller from pseudo-moments. `r` and `m_r` are
/// read only for the semilinear form.
///
/// # Safety
/// `m` live handle, `out` valid output slot.
#[no_mangle]
pub unsafe extern "C" fn mh_extract(
    m: *const MhMoments,
    form: MhForm,
    kernel_degree: u32,
    p: u32,
    r: u32,
    m_r: u32,
    out: *mut *mut MhController,
) -> MhStatus {
    let out = out_ptr!(out);
    let Some(pm) = moments_ref(m) else {
        set_error("null moments handle".into());
        return MhStatus::NullPointer;
    };
    let form = match form {
        MhForm::General => ControllerForm::General { m: kernel_degree },
        MhForm::Linear => ControllerForm::Linear { m: kernel_degree },
        MhForm::Semilinear => ControllerForm::Semilinear {
            m: kernel_degree,
            r,
            m_r,
        },
    };
    match extraction::extract(pm, &ControllerSpec { form, p }) {
        Ok(ctrl) => {
            *out = Box::into_raw(Box::new(ControlLawFile::Extracted(ctrl))) as *mut MhController;
            MhStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Solves the LQR baseline on a uniform mesh of size `h` and wraps the
/// gain as a controller.
///
/// # Safety
/// `p` live problem handle, `out` valid output slot.
#[no_mangle]
pub unsafe extern "C" fn mh_lqr(
    p: *const MhProblem,
    h: f64,
    out: *mut *mut MhController,
) -> MhStatus {
    let out = out_ptr!(out);
    let Some(state) = problem_ref(p) else {
        set_error("null problem handle".into());
        return MhStatus::NullPointer;
    };
    let mesh = match Mesh::uniform(h) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    match lqr::lqr_gain(&state.problem, &mesh) {
        Ok(sol) => {
            let file = ControlLawFile::Lqr {
                gain_m: sol.gain_m.iter().copied().collect(),
                h,
                riccati: None,
            };
            *out = Box::into_raw(Box::new(file)) as *mut MhController;
            MhStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of kernel coefficients (gamma block; LQR gains report their
/// length).
///
/// # Safety
/// `c` live controller handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mh_controller_coeff_count(
    c: *const MhController,
    out: *mut usize,
) -> MhStatus {
    let out = out_ptr!(out);
    match controller_ref(c) {
        Some(ControlLawFile::Extracted(ctrl)) => {
            *out = ctrl.gamma.len() + ctrl.delta.as_ref().map_or(0, |d| d.len());
            MhStatus::Ok
        }
        Some(ControlLawFile::Lqr { gain_m, .. }) => {
            *out = gain_m.len();
            MhStatus::Ok
        }
        None => MhStatus::NullPointer,
    }
}

/// Copies the kernel coefficients (gamma then delta, or the LQR gain) into
/// a caller buffer of length `len`.
///
/// # Safety
/// `buf` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mh_controller_coeffs(
    c: *const MhController,
    buf: *mut f64,
    len: usize,
) -> MhStatus {
    if buf.is_null() {
        return MhStatus::NullPointer;
    }
    let values: Vec<f64> = match controller_ref(c) {
        Some(ControlLawFile::Extracted(ctrl)) => {
            let mut v = ctrl.gamma.clone();
            if let Some(d) = &ctrl.delta {
                v.extend_from_slice(d);
            }
            v
        }
        Some(ControlLawFile::Lqr { gain_m, .. }) => gain_m.clone(),
        None => return MhStatus::NullPointer,
    };
    if values.len() > len {
        set_error(format!("buffer too small: need {}", values.len()));
        return MhStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    MhStatus::Ok
}

/// # Safety
/// `c` live handle, `path` valid string.
#[no_mangle]
pub unsafe extern "C" fn mh_controller_save(
    c: *const MhController,
    path: *const c_char,
) -> MhStatus {
    let Some(file) = controller_ref(c) else {
        return MhStatus::NullPointer;
    };
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match file.save(Path::new(path)) {
        Ok(()) => MhStatus::Ok,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `path` valid string, `out` valid output slot.
#[no_mangle]
pub unsafe extern "C" fn mh_controller_load(
    path: *const c_char,
    out: *mut *mut MhController,
) -> MhStatus {
    let out = out_ptr!(out);
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match ControlLawFile::load(Path::new(path)) {
        Ok(file) => {
            *out = Box::into_raw(Box::new(file)) as *mut MhController;
            MhStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// Handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mh_controller_free(c: *mut MhController) {
    if !c.is_null() {
        drop(Box::from_raw(c as *mut ControlLawFile));
    }
}

// ---------------------------------------------------------------------
// Simulation.

/// Runs the closed loop. `controller` may be NULL for the zero control.
///
/// # Safety
/// Handles must be live; `out` a valid output slot.
#[no_mangle]
pub unsafe extern "C" fn mh_simulate(
    p: *const MhProblem,
    controller: *const MhController,
    h: f64,
    dt: f64,
    horizon: f64,
    out: *mut *mut MhTrace,
) -> MhStatus {
    let out = out_ptr!(out);
    let Some(state) = problem_ref(p) else {
        set_error("null problem handle".into());
        return MhStatus::NullPointer;
    };
    let mesh = match Mesh::uniform(h) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let law: Box<dyn FeedbackLaw> = if controller.is_null() {
        Box::new(ZeroControl)
    } else {
        match controller_ref(controller) {
            Some(ControlLawFile::Extracted(ctrl)) => Box::new(ctrl.clone()),
            Some(ControlLawFile::Lqr { gain_m, h: gh, .. }) => {
                if (gh - h).abs() > 1e-12 {
                    set_error(format!("LQR gain mesh {gh} does not match h = {h}"));
                    return MhStatus::InvalidArgument;
                }
                match lqr::LqrFeedback::from_gain(gain_m.clone(), &state.problem, &mesh) {
                    Ok(fb) => Box::new(fb),
                    Err(e) => return fail(e),
                }
            }
            None => return MhStatus::NullPointer,
        }
    };
    let options = SimOptions {
        dt,
        horizon,
        ..Default::default()
    };
    match pdesim::run_closed_loop(&state.problem, &mesh, law.as_ref(), &options) {
        Ok(trace) => {
            *out = Box::into_raw(Box::new(TraceState { trace, mesh })) as *mut MhTrace;
            MhStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `t` live trace handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mh_trace_cost(t: *const MhTrace, out: *mut f64) -> MhStatus {
    let out = out_ptr!(out);
    match trace_ref(t) {
        Some(ts) => {
            *out = ts.trace.cost;
            MhStatus::Ok
        }
        None => MhStatus::NullPointer,
    }
}

/// Writes 1 to `has_blowup` and the blow-up time to `time` if the run
/// diverged; otherwise writes 0 and leaves `time` untouched.
///
/// # Safety
/// `t` live trace handle; both out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn mh_trace_blowup(
    t: *const MhTrace,
    has_blowup: *mut i32,
    time: *mut f64,
) -> MhStatus {
    let has = out_ptr!(has_blowup);
    let Some(ts) = trace_ref(t) else {
        return MhStatus::NullPointer;
    };
    match ts.trace.blowup {
        Some(tb) => {
            *has = 1;
            if let Some(slot) = time.as_mut() {
                *slot = tb;
            }
        }
        None => *has = 0,
    }
    MhStatus::Ok
}

/// Sup norm of the final stored profile.
///
/// # Safety
/// `t` live trace handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mh_trace_final_sup_norm(t: *const MhTrace, out: *mut f64) -> MhStatus {
    let out = out_ptr!(out);
    match trace_ref(t) {
        Some(ts) => {
            *out = ts.trace.final_sup_norm();
            MhStatus::Ok
        }
        None => MhStatus::NullPointer,
    }
}

/// Writes the trace as the documented CSV pair.
///
/// # Safety
/// `t` live trace handle; paths valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mh_trace_write_csv(
    t: *const MhTrace,
    y_path: *const c_char,
    u_path: *const c_char,
    stride: usize,
) -> MhStatus {
    let Some(ts) = trace_ref(t) else {
        return MhStatus::NullPointer;
    };
    let y_path = match cstr_arg(y_path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let u_path = match cstr_arg(u_path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match pdesim::write_trace_csv(
        &ts.trace,
        &ts.mesh,
        stride,
        Path::new(y_path),
        Path::new(u_path),
    ) {
        Ok(()) => MhStatus::Ok,
        Err(e) => fail(e),
    }
}

/// # Safety
/// Handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mh_trace_free(t: *mut MhTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t as *mut TraceState));
    }
}
