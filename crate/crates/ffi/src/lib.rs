//! C ABI for the body model, the pose metrics and checkpoint evaluation.
//!
//! Every function returns an [`MgStatus`]; on failure the message is kept
//! per thread and can be copied out with [`mg_last_error_message`]. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use motiongan::body::{axis_angle_to_rotmat, forward_kinematics, BodyParams, BodyTemplate, NUM_BETAS};
use motiongan::metrics::{self, MetricsReport, Point};
use motiongan::motionsim::Corpus;
use motiongan::trainer::{evaluate, Checkpoint};
use motiongan::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Parse = 3,
    Validation = 4,
    Numeric = 5,
    Io = 6,
    Degenerate = 7,
    Range = 8,
    Config = 9,
    Other = 10,
    Panic = 11,
}

/// Metrics of one evaluation, same fields as the text report.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MgReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pve: f64,
    pub pck: f64,
    pub pck_threshold: f64,
    pub accel_err: f64,
    pub frames: u64,
    pub joints: u64,
}

impl From<&MetricsReport> for MgReport {
    fn from(r: &MetricsReport) -> Self {
        MgReport {
            mpjpe: r.mpjpe,
            pa_mpjpe: r.pa_mpjpe,
            pve: r.pve,
            pck: r.pck,
            pck_threshold: r.pck_threshold,
            accel_err: r.accel_err,
            frames: r.frames as u64,
            joints: r.joints as u64,
        }
    }
}

/// Opaque body template.
pub struct MgTemplate(BodyTemplate);

/// Opaque trained model with its config.
pub struct MgCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MgStatus {
    match e {
        Error::Dimension { .. } | Error::Mismatch { .. } => MgStatus::Dimension,
        Error::Parse { .. } => MgStatus::Parse,
        Error::Validation(_) | Error::Contract(_) => MgStatus::Validation,
        Error::Numeric(_) | Error::Evaluation(_) => MgStatus::Numeric,
        Error::Io(_) => MgStatus::Io,
        Error::Degenerate(_) => MgStatus::Degenerate,
        Error::Range(_) => MgStatus::Range,
        Error::Config(_) => MgStatus::Config,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MgStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MgStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            MgStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a Path, Failure> {
    let s = CStr::from_ptr(non_null(p, what)?)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Validation(format!("{what} is not UTF-8"))))?;
    Ok(Path::new(s))
}

unsafe fn points(p: *const f64, count: usize, what: &'static str) -> Result<Vec<Point>, Failure> {
    let data = slice::from_raw_parts(non_null(p, what)?, 3 * count);
    Ok(data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The default 24-joint template. Free with [`mg_template_free`].
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn mg_template_default(out: *mut *mut MgTemplate) -> MgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(MgTemplate(BodyTemplate::standard())));
        Ok(())
    })
}

/// Reads a template written in the text template format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn mg_template_load(path: *const c_char, out: *mut *mut MgTemplate) -> MgStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = BodyTemplate::load(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MgTemplate(t)));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a pointer returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mg_template_free(t: *mut MgTemplate) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live template handle.
#[no_mangle]
pub unsafe extern "C" fn mg_template_num_joints(t: *const MgTemplate) -> usize {
    t.as_ref().map_or(0, |t| t.0.num_joints())
}

/// # Safety
/// `t` must be a live template handle.
#[no_mangle]
pub unsafe extern "C" fn mg_template_num_vertices(t: *const MgTemplate) -> usize {
    t.as_ref().map_or(0, |t| t.0.num_vertices())
}

/// Poses the template. `theta` holds 3J axis-angle values, `beta` 10 shape
/// coefficients; `out_joints` receives 3J and `out_vertices` 3V values.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mg_forward_kinematics(
    t: *const MgTemplate,
    theta: *const f64,
    beta: *const f64,
    out_joints: *mut f64,
    out_vertices: *mut f64,
) -> MgStatus {
    guard(|| {
        let tmpl = &(*non_null(t, "template")?).0;
        let j = tmpl.num_joints();
        let v = tmpl.num_vertices();
        non_null(out_joints, "out_joints")?;
        non_null(out_vertices, "out_vertices")?;
        let theta = slice::from_raw_parts(non_null(theta, "theta")?, 3 * j).to_vec();
        let b = slice::from_raw_parts(non_null(beta, "beta")?, NUM_BETAS);
        let mut beta = [0.0; NUM_BETAS];
        beta.copy_from_slice(b);
        let params = BodyParams {
            theta,
            beta,
            cam: [1.0, 0.0, 0.0],
        };
        let posed = forward_kinematics(&params, tmpl)?;
        let oj = slice::from_raw_parts_mut(out_joints, 3 * j);
        for (dst, p) in oj.chunks_exact_mut(3).zip(&posed.joints) {
            dst.copy_from_slice(p);
        }
        let ov = slice::from_raw_parts_mut(out_vertices, 3 * v);
        for (dst, p) in ov.chunks_exact_mut(3).zip(&posed.vertices) {
            dst.copy_from_slice(p);
        }
        Ok(())
    })
}

/// Rodrigues: axis-angle `w[3]` to a row-major 3×3 rotation `out[9]`.
///
/// # Safety
/// `w` valid for 3 reads and `out` for 9 writes.
#[no_mangle]
pub unsafe extern "C" fn mg_axis_angle_to_rotmat(w: *const f64, out: *mut f64) -> MgStatus {
    guard(|| {
        let w = slice::from_raw_parts(non_null(w, "w")?, 3);
        non_null(out, "out")?;
        let r = axis_angle_to_rotmat(&[w[0], w[1], w[2]]);
        slice::from_raw_parts_mut(out, 9).copy_from_slice(&r);
        Ok(())
    })
}

/// Root-relative mean joint error of `count` 3D points.
///
/// # Safety
/// `pred` and `gt` valid for 3·count reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_mpjpe(
    pred: *const f64,
    gt: *const f64,
    count: usize,
    pelvis: usize,
    out: *mut f64,
) -> MgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = metrics::mpjpe(&points(pred, count, "pred")?, &points(gt, count, "gt")?, pelvis)?;
        Ok(())
    })
}

/// Mean joint error after optimal similarity alignment.
///
/// # Safety
/// `pred` and `gt` valid for 3·count reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_pa_mpjpe(pred: *const f64, gt: *const f64, count: usize, out: *mut f64) -> MgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = metrics::pa_mpjpe(&points(pred, count, "pred")?, &points(gt, count, "gt")?)?;
        Ok(())
    })
}

/// Loads a training checkpoint. Free with [`mg_checkpoint_free`].
///
/// # Safety
/// `path` must be NUL-terminated; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_load(path: *const c_char, out: *mut *mut MgCheckpoint) -> MgStatus {
    guard(|| {
        non_null(out, "out")?;
        let c = Checkpoint::load(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MgCheckpoint(c)));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a pointer returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_free(c: *mut MgCheckpoint) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Training steps recorded in the checkpoint.
///
/// # Safety
/// `c` must be a live checkpoint handle.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_step(c: *const MgCheckpoint) -> u64 {
    c.as_ref().map_or(0, |c| c.0.trainer.step)
}

/// Evaluates on the eval split of the corpus in `corpus_dir`, or of the
/// corpus regenerated from the checkpoint's config when it is null.
///
/// # Safety
/// `c` must be a live handle, `corpus_dir` null or NUL-terminated, `out`
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_checkpoint_evaluate(
    c: *const MgCheckpoint,
    corpus_dir: *const c_char,
    out: *mut MgReport,
) -> MgStatus {
    guard(|| {
        let ckpt = &(*non_null(c, "checkpoint")?).0;
        non_null(out, "out")?;
        let corpus = if corpus_dir.is_null() {
            Corpus::generate(&ckpt.trainer.config.corpus)?
        } else {
            Corpus::load(path_arg(corpus_dir, "corpus_dir")?)?
        };
        let t = &ckpt.trainer;
        let report = evaluate(&ckpt.predictor(), &corpus, &t.template, t.config.train.pck_threshold)?;
        *out = MgReport::from(&report);
        Ok(())
    })
}
