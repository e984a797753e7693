//! C ABI over the reconstruction engine.
//!
//! Objects are opaque handles created by `mvs_*_new`/`mvs_*_load` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`MvsStatus`]; on failure [`mvs_last_error`] describes the
//! error for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use adaptive_mvs::adrp::{overlap_metrics, DepthRange};
use adaptive_mvs::config::PipelineConfig;
use adaptive_mvs::error::{Error, ErrorKind};
use adaptive_mvs::io::{read_scene, synth_scene, SceneBundle, SynthSceneSpec};
use adaptive_mvs::pipeline::{reconstruct, ViewReconstruction};

/// Status codes; the error values match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvsStatus {
    Ok = 0,
    Usage = 2,
    ParseOrIo = 3,
    Numerical = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Pipeline settings.
pub struct MvsConfig(PipelineConfig);

/// Views, images and optional ground truth of one scene.
pub struct MvsScene(SceneBundle);

/// Full-resolution depth and confidence of one reference view.
pub struct MvsDepthResult(ViewReconstruction);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MvsStatus {
    match e.kind() {
        ErrorKind::Usage => MvsStatus::Usage,
        ErrorKind::ParseOrIo => MvsStatus::ParseOrIo,
        ErrorKind::Numerical => MvsStatus::Numerical,
    }
}

fn fail(status: MvsStatus, msg: &str) -> MvsStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), MvsStatus>) -> MvsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MvsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(MvsStatus::Panic, "internal panic"),
    }
}

fn check(e: Error) -> MvsStatus {
    fail(status_of(&e), &e.to_string())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, MvsStatus> {
    if p.is_null() {
        return Err(fail(MvsStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MvsStatus::Usage, &format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, MvsStatus> {
    p.as_ref()
        .ok_or_else(|| fail(MvsStatus::NullPointer, &format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, MvsStatus> {
    p.as_mut()
        .ok_or_else(|| fail(MvsStatus::NullPointer, &format!("{what} is null")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), MvsStatus> {
    if out.is_null() {
        return Err(fail(MvsStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, empty if none has
/// failed. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mvs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mvs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mvs_config_new_default(out: *mut *mut MvsConfig) -> MvsStatus {
    guard(|| emit(out, MvsConfig(PipelineConfig::default())))
}

/// Sets one `key = value` setting, as in a config file. The configuration
/// is left unchanged when the result would be invalid.
///
/// # Safety
/// `config` must come from [`mvs_config_new_default`]; `key` and `value`
/// must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mvs_config_set(config: *mut MvsConfig, key: *const c_char, value: *const c_char) -> MvsStatus {
    guard(|| {
        let cfg = handle_mut(config, "config")?;
        let (k, v) = (text(key, "key")?, text(value, "value")?);
        let mut next = cfg.0.clone();
        next.set(k, v).map_err(check)?;
        next.validate().map_err(check)?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`mvs_config_new_default`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mvs_config_free(config: *mut MvsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Loads a scene directory (`cams/`, `images/`, optional `depth_gt/` and
/// `pair.txt`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvs_scene_load(path: *const c_char, out: *mut *mut MvsScene) -> MvsStatus {
    guard(|| {
        let p = text(path, "path")?;
        let scene = read_scene(Path::new(p)).map_err(check)?;
        emit(out, MvsScene(scene))
    })
}

/// Renders a synthetic scene with ground truth at 80x64 pixels.
///
/// # Safety
/// `geometry` must be a NUL-terminated preset name and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvs_scene_synth(
    geometry: *const c_char,
    near: f64,
    far: f64,
    views: usize,
    seed: u64,
    out: *mut *mut MvsScene,
) -> MvsStatus {
    guard(|| {
        let g = text(geometry, "geometry")?;
        let spec = SynthSceneSpec::preset(g, near, far, views, seed).map_err(check)?;
        let scene = synth_scene(&spec).map_err(check)?;
        emit(out, MvsScene(scene))
    })
}

/// Number of views, or 0 for a null handle.
///
/// # Safety
/// `scene` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mvs_scene_view_count(scene: *const MvsScene) -> usize {
    scene.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `scene` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mvs_scene_free(scene: *mut MvsScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Reconstructs one reference view.
///
/// # Safety
/// `scene` and `config` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvs_reconstruct(
    scene: *const MvsScene,
    config: *const MvsConfig,
    reference: usize,
    out: *mut *mut MvsDepthResult,
) -> MvsStatus {
    guard(|| {
        let (s, c) = (handle(scene, "scene")?, handle(config, "config")?);
        let mut views = reconstruct(&s.0, &c.0, Some(&[reference])).map_err(check)?;
        emit(out, MvsDepthResult(views.remove(0)))
    })
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mvs_result_width(result: *const MvsDepthResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.depth.width)
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mvs_result_height(result: *const MvsDepthResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.depth.height)
}

unsafe fn copy_out(values: impl ExactSizeIterator<Item = f32>, buffer: *mut f32, len: usize) -> Result<(), MvsStatus> {
    if buffer.is_null() {
        return Err(fail(MvsStatus::NullPointer, "buffer is null"));
    }
    if len < values.len() {
        return Err(fail(
            MvsStatus::BufferTooSmall,
            &format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(buffer, len);
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    Ok(())
}

/// Copies the row-major depth map into `buffer`; invalid pixels are 0.
///
/// # Safety
/// `result` must be a live handle and `buffer` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn mvs_result_copy_depth(
    result: *const MvsDepthResult,
    buffer: *mut f32,
    len: usize,
) -> MvsStatus {
    guard(|| {
        let d = &handle(result, "result")?.0.depth;
        let values = d
            .data
            .iter()
            .zip(&d.valid)
            .map(|(v, ok)| if *ok { *v as f32 } else { 0.0 });
        copy_out(values, buffer, len)
    })
}

/// Copies the row-major confidence map, values in `[0, 1]`.
///
/// # Safety
/// `result` must be a live handle and `buffer` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn mvs_result_copy_confidence(
    result: *const MvsDepthResult,
    buffer: *mut f32,
    len: usize,
) -> MvsStatus {
    guard(|| {
        let c = &handle(result, "result")?.0.confidence;
        copy_out(c.data.iter().map(|v| *v as f32), buffer, len)
    })
}

/// # Safety
/// `result` must come from [`mvs_reconstruct`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mvs_result_free(result: *mut MvsDepthResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Coverage of the true range `[truth_min, truth_max]` by the candidate
/// range (`aog`) and the useful fraction of the candidate (`aos`).
///
/// # Safety
/// `aog` and `aos` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvs_overlap_metrics(
    truth_min: f64,
    truth_max: f64,
    candidate_min: f64,
    candidate_max: f64,
    aog: *mut f64,
    aos: *mut f64,
) -> MvsStatus {
    guard(|| {
        if aog.is_null() || aos.is_null() {
            return Err(fail(MvsStatus::NullPointer, "output pointer is null"));
        }
        let truth = DepthRange::new(truth_min, truth_max).map_err(check)?;
        let cand = DepthRange::new(candidate_min, candidate_max).map_err(check)?;
        let r = overlap_metrics(&truth, &cand);
        *aog = r.aog;
        *aos = r.aos;
        Ok(())
    })
}
