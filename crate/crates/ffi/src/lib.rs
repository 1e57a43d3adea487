//! C ABI over the facemimic pipeline. Every entry point returns an
//! [`FmStatus`]; artifacts travel as opaque handles created by the loaders
//! and released by the matching `_free` functions. The last error message is
//! kept per thread and retrieved with [`fm_last_error`]. All functions catch
//! panics at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use facemimic::edm::{self, EdmModel};
use facemimic::error::Error;
use facemimic::etm::{self, EtmDecoder, EtmEncoder};
use facemimic::evalkit;
use facemimic::headmodel::{build_head_model, HeadModel, Landmarks2D};
use facemimic::robotsim::{self, RobotRig};

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DegenerateInput = 4,
    IoError = 5,
    MalformedFile = 6,
    FormatVersion = 7,
    InternalPanic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> FmStatus {
    match err {
        Error::Dimension(_) => FmStatus::DimensionMismatch,
        Error::InvalidArgument(_) => FmStatus::InvalidArgument,
        Error::Degenerate(_) => FmStatus::DegenerateInput,
        Error::MalformedFile(_) => FmStatus::MalformedFile,
        Error::FormatVersion { .. } => FmStatus::FormatVersion,
        Error::Io(_) => FmStatus::IoError,
    }
}

fn fail(err: Error) -> FmStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guard(body: impl FnOnce() -> FmStatus) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            FmStatus::InternalPanic
        }
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message of this thread into `buf` (truncated to
/// `cap` bytes including the nul) and returns the full message length.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn fm_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            slice::from_raw_parts_mut(buf as *mut u8, n).copy_from_slice(&bytes[..n]);
            // Always terminate.
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

unsafe fn path_from(ptr: *const c_char) -> Result<&'static Path, FmStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(FmStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid utf-8");
            Err(FmStatus::InvalidArgument)
        }
    }
}

unsafe fn slice_from<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], FmStatus> {
    if ptr.is_null() {
        set_error("null array argument");
        return Err(FmStatus::NullArgument);
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn slice_from_mut<'a>(ptr: *mut f64, len: usize) -> Result<&'a mut [f64], FmStatus> {
    if ptr.is_null() {
        set_error("null output array");
        return Err(FmStatus::NullArgument);
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

fn landmarks_from(xy: &[f64]) -> Landmarks2D {
    Landmarks2D {
        points: xy.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
    }
}

/// Statistical head model (opaque).
pub struct FmHeadModel(HeadModel);

/// Expression decoupling encoder (opaque).
pub struct FmEdm(EdmModel);

/// Transfer encoder, expression to commands (opaque).
pub struct FmEtmEncoder(EtmEncoder);

/// Transfer decoder, commands to expression (opaque).
pub struct FmEtmDecoder(EtmDecoder);

/// Simulated robot rig (opaque).
pub struct FmRig(RobotRig);

impl FmHeadModel {
    fn wrap(v: HeadModel) -> *mut FmHeadModel {
        Box::into_raw(Box::new(FmHeadModel(v)))
    }
    unsafe fn get<'a>(ptr: *const FmHeadModel) -> Result<&'a HeadModel, FmStatus> {
        match ptr.as_ref() {
            Some(h) => Ok(&h.0),
            None => {
                set_error("null FmHeadModel handle");
                Err(FmStatus::NullArgument)
            }
        }
    }
}

impl FmEdm {
    fn wrap(v: EdmModel) -> *mut FmEdm {
        Box::into_raw(Box::new(FmEdm(v)))
    }
    unsafe fn get<'a>(ptr: *const FmEdm) -> Result<&'a EdmModel, FmStatus> {
        match ptr.as_ref() {
            Some(h) => Ok(&h.0),
            None => {
                set_error("null FmEdm handle");
                Err(FmStatus::NullArgument)
            }
        }
    }
}

impl FmEtmEncoder {
    fn wrap(v: EtmEncoder) -> *mut FmEtmEncoder {
        Box::into_raw(Box::new(FmEtmEncoder(v)))
    }
    unsafe fn get<'a>(ptr: *const FmEtmEncoder) -> Result<&'a EtmEncoder, FmStatus> {
        match ptr.as_ref() {
            Some(h) => Ok(&h.0),
            None => {
                set_error("null FmEtmEncoder handle");
                Err(FmStatus::NullArgument)
            }
        }
    }
}

impl FmEtmDecoder {
    fn wrap(v: EtmDecoder) -> *mut FmEtmDecoder {
        Box::into_raw(Box::new(FmEtmDecoder(v)))
    }
    unsafe fn get<'a>(ptr: *const FmEtmDecoder) -> Result<&'a EtmDecoder, FmStatus> {
        match ptr.as_ref() {
            Some(h) => Ok(&h.0),
            None => {
                set_error("null FmEtmDecoder handle");
                Err(FmStatus::NullArgument)
            }
        }
    }
}

impl FmRig {
    fn wrap(v: RobotRig) -> *mut FmRig {
        Box::into_raw(Box::new(FmRig(v)))
    }
    unsafe fn get<'a>(ptr: *const FmRig) -> Result<&'a RobotRig, FmStatus> {
        match ptr.as_ref() {
            Some(h) => Ok(&h.0),
            None => {
                set_error("null FmRig handle");
                Err(FmStatus::NullArgument)
            }
        }
    }
}

/// Releases a head model handle. Null is a no-op.
///
/// # Safety
/// `ptr` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fm_head_model_free(ptr: *mut FmHeadModel) {
    if !ptr.is_null() {
        drop(Box::from_raw(ptr));
    }
}

/// Releases a decoupling-encoder handle. Null is a no-op.
///
/// # Safety
/// `ptr` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fm_edm_free(ptr: *mut FmEdm) {
    if !ptr.is_null() {
        drop(Box::from_raw(ptr));
    }
}

/// Releases a transfer-encoder handle. Null is a no-op.
///
/// # Safety
/// `ptr` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fm_etm_encoder_free(ptr: *mut FmEtmEncoder) {
    if !ptr.is_null() {
        drop(Box::from_raw(ptr));
    }
}

/// Releases a transfer-decoder handle. Null is a no-op.
///
/// # Safety
/// `ptr` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fm_etm_decoder_free(ptr: *mut FmEtmDecoder) {
    if !ptr.is_null() {
        drop(Box::from_raw(ptr));
    }
}

/// Releases a rig handle. Null is a no-op.
///
/// # Safety
/// `ptr` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fm_rig_free(ptr: *mut FmRig) {
    if !ptr.is_null() {
        drop(Box::from_raw(ptr));
    }
}

fn write_handle<T>(out: *mut *mut T, value: *mut T) -> FmStatus {
    if out.is_null() {
        set_error("null output handle pointer");
        return FmStatus::NullArgument;
    }
    unsafe {
        *out = value;
    }
    FmStatus::Ok
}

/// Loads a head model JSON artifact.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_head_model_load(
    path: *const c_char,
    out: *mut *mut FmHeadModel,
) -> FmStatus {
    guard(|| {
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match HeadModel::load_json(path) {
            Ok(v) => write_handle(out, FmHeadModel::wrap(v)),
            Err(e) => fail(e),
        }
    })
}

/// Loads a trained decoupling encoder JSON artifact.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_edm_load(path: *const c_char, out: *mut *mut FmEdm) -> FmStatus {
    guard(|| {
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match EdmModel::load_json(path) {
            Ok(v) => write_handle(out, FmEdm::wrap(v)),
            Err(e) => fail(e),
        }
    })
}

/// Loads a trained transfer encoder JSON artifact.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_etm_encoder_load(
    path: *const c_char,
    out: *mut *mut FmEtmEncoder,
) -> FmStatus {
    guard(|| {
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match EtmEncoder::load_json(path) {
            Ok(v) => write_handle(out, FmEtmEncoder::wrap(v)),
            Err(e) => fail(e),
        }
    })
}

/// Loads a trained transfer decoder JSON artifact.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_etm_decoder_load(
    path: *const c_char,
    out: *mut *mut FmEtmDecoder,
) -> FmStatus {
    guard(|| {
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match EtmDecoder::load_json(path) {
            Ok(v) => write_handle(out, FmEtmDecoder::wrap(v)),
            Err(e) => fail(e),
        }
    })
}

/// Loads a robot rig JSON artifact.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_rig_load(path: *const c_char, out: *mut *mut FmRig) -> FmStatus {
    guard(|| {
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match RobotRig::load_json(path) {
            Ok(v) => write_handle(out, FmRig::wrap(v)),
            Err(e) => fail(e),
        }
    })
}

/// Builds the procedural head model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_head_model_build(
    seed: u64,
    n_vertices: usize,
    n_shape: usize,
    n_expr: usize,
    n_landmarks: usize,
    out: *mut *mut FmHeadModel,
) -> FmStatus {
    guard(|| match build_head_model(seed, n_vertices, n_shape, n_expr, n_landmarks) {
        Ok(model) => write_handle(out, FmHeadModel::wrap(model)),
        Err(e) => fail(e),
    })
}

/// Saves a head model to a JSON file.
///
/// # Safety
/// `model` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fm_head_model_save(
    model: *const FmHeadModel,
    path: *const c_char,
) -> FmStatus {
    guard(|| {
        let model = match FmHeadModel::get(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match model.save_json(path) {
            Ok(()) => FmStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Reads the model dimensions. Null out-pointers are skipped.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_head_model_dims(
    model: *const FmHeadModel,
    n_vertices: *mut usize,
    n_shape: *mut usize,
    n_expr: *mut usize,
    n_landmarks: *mut usize,
) -> FmStatus {
    guard(|| {
        let m = match FmHeadModel::get(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if !n_vertices.is_null() {
            *n_vertices = m.n_vertices;
        }
        if !n_shape.is_null() {
            *n_shape = m.n_shape;
        }
        if !n_expr.is_null() {
            *n_expr = m.n_expr;
        }
        if !n_landmarks.is_null() {
            *n_landmarks = m.n_landmarks;
        }
        FmStatus::Ok
    })
}

/// Reads the encoder dimensions. Null out-pointers are skipped.
///
/// # Safety
/// `edm` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_edm_dims(
    edm: *const FmEdm,
    n_expr: *mut usize,
    n_shape: *mut usize,
    n_landmarks: *mut usize,
) -> FmStatus {
    guard(|| {
        let e = match FmEdm::get(edm) {
            Ok(e) => e,
            Err(s) => return s,
        };
        if !n_expr.is_null() {
            *n_expr = e.head_ref.n_expr;
        }
        if !n_shape.is_null() {
            *n_shape = e.head_ref.n_shape;
        }
        if !n_landmarks.is_null() {
            *n_landmarks = e.head_ref.n_landmarks;
        }
        FmStatus::Ok
    })
}

/// Decouples observed 2D landmarks into (expression | pose | morphology).
/// `landmarks_xy` holds `n_points` interleaved (x, y) pairs; `out_params`
/// receives `n_expr + 3 + n_shape` values.
///
/// # Safety
/// Pointers must cover the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fm_edm_infer(
    edm: *const FmEdm,
    landmarks_xy: *const f64,
    n_points: usize,
    out_params: *mut f64,
    out_len: usize,
) -> FmStatus {
    guard(|| {
        let model = match FmEdm::get(edm) {
            Ok(e) => e,
            Err(s) => return s,
        };
        let xy = match slice_from(landmarks_xy, 2 * n_points) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let expect = model.head_ref.n_expr + 3 + model.head_ref.n_shape;
        if out_len != expect {
            set_error(&format!("out_len {out_len} != n_expr + 3 + n_shape = {expect}"));
            return FmStatus::DimensionMismatch;
        }
        let out = match slice_from_mut(out_params, out_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match edm::infer(model, &landmarks_from(xy)) {
            Ok(params) => {
                out.copy_from_slice(&params.concat());
                FmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Maps an expression code to normalized actuator commands in [0, 1].
///
/// # Safety
/// Pointers must cover the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fm_etm_encode(
    encoder: *const FmEtmEncoder,
    expression: *const f64,
    expression_len: usize,
    out_commands: *mut f64,
    commands_len: usize,
) -> FmStatus {
    guard(|| {
        let enc = match FmEtmEncoder::get(encoder) {
            Ok(e) => e,
            Err(s) => return s,
        };
        let e = match slice_from(expression, expression_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        if commands_len != enc.n_actuators {
            set_error(&format!(
                "commands_len {commands_len} != n_actuators {}",
                enc.n_actuators
            ));
            return FmStatus::DimensionMismatch;
        }
        let out = match slice_from_mut(out_commands, commands_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match etm::encoder_predict(enc, e) {
            Ok(a) => {
                out.copy_from_slice(&a);
                FmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Predicts the expression a normalized command will produce.
///
/// # Safety
/// Pointers must cover the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fm_etm_decode(
    decoder: *const FmEtmDecoder,
    commands: *const f64,
    commands_len: usize,
    out_expression: *mut f64,
    expression_len: usize,
) -> FmStatus {
    guard(|| {
        let dec = match FmEtmDecoder::get(decoder) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let a = match slice_from(commands, commands_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        if expression_len != dec.n_expr {
            set_error(&format!("expression_len {expression_len} != n_expr {}", dec.n_expr));
            return FmStatus::DimensionMismatch;
        }
        let out = match slice_from_mut(out_expression, expression_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match etm::decoder_predict(dec, a) {
            Ok(e) => {
                out.copy_from_slice(&e);
                FmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Reads the rig dimensions. Null out-pointers are skipped.
///
/// # Safety
/// `rig` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_rig_dims(
    rig: *const FmRig,
    n_actuators: *mut usize,
    n_expr: *mut usize,
) -> FmStatus {
    guard(|| {
        let r = match FmRig::get(rig) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if !n_actuators.is_null() {
            *n_actuators = r.n_actuators;
        }
        if !n_expr.is_null() {
            *n_expr = r.n_expr;
        }
        FmStatus::Ok
    })
}

/// Drives the rig with a normalized command and observes its face as 2D
/// landmarks; `out_xy` receives `n_landmarks` interleaved (x, y) pairs.
///
/// # Safety
/// Pointers must cover the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fm_rig_observe(
    rig: *const FmRig,
    model: *const FmHeadModel,
    commands: *const f64,
    commands_len: usize,
    noise_sigma: f64,
    noise_seed: u64,
    out_xy: *mut f64,
    out_xy_len: usize,
) -> FmStatus {
    guard(|| {
        let r = match FmRig::get(rig) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let m = match FmHeadModel::get(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let a = match slice_from(commands, commands_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        if out_xy_len != 2 * m.n_landmarks {
            set_error(&format!(
                "out_xy_len {out_xy_len} != 2 * n_landmarks = {}",
                2 * m.n_landmarks
            ));
            return FmStatus::DimensionMismatch;
        }
        let out = match slice_from_mut(out_xy, out_xy_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match robotsim::actuate_and_observe(r, m, a, noise_sigma, noise_seed) {
            Ok(lm) => {
                out.copy_from_slice(&lm.flatten());
                FmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Normalizes raw device-unit commands into [0, 1] per actuator. Values
/// outside the bounds are clamped; `out_clamped` (nullable) reports whether
/// any clamp happened.
///
/// # Safety
/// Pointers must cover `n` values each.
#[no_mangle]
pub unsafe extern "C" fn fm_normalize_commands(
    raw: *const f64,
    raw_min: *const f64,
    raw_max: *const f64,
    n: usize,
    out: *mut f64,
    out_clamped: *mut bool,
) -> FmStatus {
    guard(|| {
        let (raw, lo, hi) = match (slice_from(raw, n), slice_from(raw_min, n), slice_from(raw_max, n)) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let out = match slice_from_mut(out, n) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match robotsim::normalize_commands(raw, lo, hi) {
            Ok(result) => {
                out.copy_from_slice(&result.values);
                if !out_clamped.is_null() {
                    *out_clamped = result.clamped;
                }
                FmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// One-call imitation: decouple the observed human landmarks, map the
/// expression to commands, actuate the simulated rig, read the robot's
/// expression back. `out_commands` receives the commands, `out_gap` the
/// squared expression distance between human and robot.
///
/// # Safety
/// Pointers must cover the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fm_imitate(
    edm: *const FmEdm,
    encoder: *const FmEtmEncoder,
    rig: *const FmRig,
    model: *const FmHeadModel,
    observed_xy: *const f64,
    n_points: usize,
    out_commands: *mut f64,
    commands_len: usize,
    out_gap: *mut f64,
) -> FmStatus {
    guard(|| {
        let e = match FmEdm::get(edm) {
            Ok(e) => e,
            Err(s) => return s,
        };
        let enc = match FmEtmEncoder::get(encoder) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let r = match FmRig::get(rig) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let m = match FmHeadModel::get(model) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let xy = match slice_from(observed_xy, 2 * n_points) {
            Ok(s) => s,
            Err(s) => return s,
        };
        if commands_len != enc.n_actuators {
            set_error(&format!(
                "commands_len {commands_len} != n_actuators {}",
                enc.n_actuators
            ));
            return FmStatus::DimensionMismatch;
        }
        let out = match slice_from_mut(out_commands, commands_len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match evalkit::end_to_end_imitation(&landmarks_from(xy), e, enc, r, m) {
            Ok(outcome) => {
                out.copy_from_slice(&outcome.command);
                if !out_gap.is_null() {
                    *out_gap = outcome.expression_gap;
                }
                FmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
