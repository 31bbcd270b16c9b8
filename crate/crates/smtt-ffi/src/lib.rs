//! C ABI for the smtt tracker.
//!
//! The tracker is exposed as an opaque handle created from the first frame
//! and an initial box, then advanced one frame at a time. Frames are
//! row-major `double` grayscale buffers in [0, 1]. All functions return a
//! status code; `smtt_last_error_message` retrieves a human-readable
//! description of the most recent failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use smtt::tracker::{SolverKind, TrackerConfig, TrackerState};
use smtt::{GrayImage, SmttError, TargetBox};

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmttStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A parameter, shape, or geometry constraint was violated.
    InvalidArgument = 2,
    /// The solve diverged or produced non-finite values.
    NumericalError = 3,
    /// Internal panic; the handle is left untouched but should be freed.
    InternalError = 4,
}

fn status_of(e: &SmttError) -> SmttStatus {
    match e {
        SmttError::NonFinite(_) | SmttError::Numerical { .. } => SmttStatus::NumericalError,
        _ => SmttStatus::InvalidArgument,
    }
}

/// Solver selector for `SmttConfig::solver`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmttSolver {
    Apg = 0,
    Alternating = 1,
    Subgradient = 2,
}

/// Axis-aligned box, top-left corner convention, in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SmttBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Tracker configuration. Obtain defaults from `smtt_config_default` and
/// override fields as needed before passing to `smtt_tracker_new`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SmttConfig {
    pub solver: SmttSolver,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub particles: usize,
    pub templates: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub update_period: usize,
    pub jitter_px: f64,
    pub alpha: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub std_scale: f64,
    /// Similarity bandwidth; any value <= 0 selects the median heuristic.
    pub sigma: f64,
    pub seed: u64,
}

fn to_tracker_config(c: &SmttConfig) -> TrackerConfig {
    let mut cfg = TrackerConfig::default();
    cfg.solver_kind = match c.solver {
        SmttSolver::Apg => SolverKind::Apg,
        SmttSolver::Alternating => SolverKind::Alternating,
        SmttSolver::Subgradient => SolverKind::Subgradient,
    };
    cfg.solver.lambda1 = c.lambda1;
    cfg.solver.lambda2 = c.lambda2;
    cfg.solver.mu = c.mu;
    cfg.solver.tol = c.tol;
    cfg.solver.max_iter = c.max_iter;
    cfg.n_particles = c.particles;
    cfg.dict.m = c.templates;
    cfg.dict.patch_h = c.patch_h;
    cfg.dict.patch_w = c.patch_w;
    cfg.dict.update_period = c.update_period;
    cfg.dict.jitter_px = c.jitter_px;
    cfg.alpha = c.alpha;
    cfg.stds = (c.std_x, c.std_y, c.std_scale);
    cfg.sigma_override = (c.sigma > 0.0).then_some(c.sigma);
    cfg.seed = c.seed;
    cfg
}

/// Opaque tracker handle.
pub struct SmttTracker {
    state: TrackerState,
}

unsafe fn frame_from_raw(
    data: *const f64,
    width: usize,
    height: usize,
) -> Result<GrayImage, SmttError> {
    if width == 0 || height == 0 {
        return Err(SmttError::Parameter("frame dimensions must be positive".into()));
    }
    let slice = std::slice::from_raw_parts(data, width * height);
    GrayImage::from_raw(width, height, slice.to_vec())
}

/// Fill `out` with the default configuration.
#[no_mangle]
pub extern "C" fn smtt_config_default(out: *mut SmttConfig) -> SmttStatus {
    if out.is_null() {
        set_last_error("out config pointer is null");
        return SmttStatus::NullPointer;
    }
    let cfg = TrackerConfig::default();
    let c = SmttConfig {
        solver: SmttSolver::Apg,
        lambda1: cfg.solver.lambda1,
        lambda2: cfg.solver.lambda2,
        mu: cfg.solver.mu,
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        particles: cfg.n_particles,
        templates: cfg.dict.m,
        patch_h: cfg.dict.patch_h,
        patch_w: cfg.dict.patch_w,
        update_period: cfg.dict.update_period,
        jitter_px: cfg.dict.jitter_px,
        alpha: cfg.alpha,
        std_x: cfg.stds.0,
        std_y: cfg.stds.1,
        std_scale: cfg.stds.2,
        sigma: 0.0,
        seed: cfg.seed,
    };
    unsafe { out.write(c) };
    SmttStatus::Ok
}

/// Create a tracker from the first frame and the initial target box.
///
/// `frame` is `width * height` row-major doubles in [0, 1]. On success
/// `*out` owns the tracker; release it with `smtt_tracker_free`.
///
/// # Safety
/// `frame` must point to at least `width * height` readable doubles and
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn smtt_tracker_new(
    frame: *const f64,
    width: usize,
    height: usize,
    init_box: SmttBox,
    config: *const SmttConfig,
    out: *mut *mut SmttTracker,
) -> SmttStatus {
    if frame.is_null() || config.is_null() || out.is_null() {
        set_last_error("null pointer argument");
        return SmttStatus::NullPointer;
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let img = frame_from_raw(frame, width, height)?;
        let cfg = to_tracker_config(&*config);
        let b = TargetBox::from_corner(init_box.x, init_box.y, init_box.w, init_box.h);
        TrackerState::init(&img, b, cfg)
    }));
    match result {
        Ok(Ok(state)) => {
            out.write(Box::into_raw(Box::new(SmttTracker { state })));
            SmttStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic in smtt_tracker_new");
            SmttStatus::InternalError
        }
    }
}

/// Advance the tracker by one frame and write the estimated box to `out_box`.
///
/// On solver failure the previous box is carried forward and reported; this
/// still returns `SMTT_STATUS_OK` so a stream is never interrupted.
///
/// # Safety
/// `tracker` must come from `smtt_tracker_new`, `frame` must point to at
/// least `width * height` readable doubles, and `out_box` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smtt_tracker_track(
    tracker: *mut SmttTracker,
    frame: *const f64,
    width: usize,
    height: usize,
    out_box: *mut SmttBox,
) -> SmttStatus {
    if tracker.is_null() || frame.is_null() || out_box.is_null() {
        set_last_error("null pointer argument");
        return SmttStatus::NullPointer;
    }
    let t = &mut *tracker;
    let result = catch_unwind(AssertUnwindSafe(|| {
        let img = frame_from_raw(frame, width, height)?;
        Ok::<TargetBox, SmttError>(t.state.track_frame(&img))
    }));
    match result {
        Ok(Ok(b)) => {
            let (x, y, w, h) = b.to_corner();
            out_box.write(SmttBox { x, y, w, h });
            SmttStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic in smtt_tracker_track");
            SmttStatus::InternalError
        }
    }
}

/// Number of frames (since creation) whose solve failed and fell back to
/// carrying the previous box forward. Returns 0 for a null handle.
///
/// # Safety
/// `tracker` must be null or come from `smtt_tracker_new`.
#[no_mangle]
pub unsafe extern "C" fn smtt_tracker_failed_frames(tracker: *const SmttTracker) -> usize {
    if tracker.is_null() {
        return 0;
    }
    (*tracker).state.failed_frames
}

/// Release a tracker. Passing null is a no-op.
///
/// # Safety
/// `tracker` must be null or an owned pointer from `smtt_tracker_new`, and
/// must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smtt_tracker_free(tracker: *mut SmttTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Pointer to a NUL-terminated description of the most recent error on this
/// thread. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn smtt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
