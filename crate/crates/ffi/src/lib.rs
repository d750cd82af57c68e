//! C ABI over the sensorprint core: trace parsing and serialization, feature
//! extraction, obfuscation and calibration.
//!
//! Every function returns an [`SpStatus`]; on failure a message is available
//! from [`sp_last_error`] on the same thread. Traces are opaque [`SpTrace`]
//! handles released with [`sp_trace_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sensorprint::calibrate::{self, CalibrationModel, SensorKind};
use sensorprint::features;
use sensorprint::obfuscate::{self, Interval, ObfuscationPolicy};
use sensorprint::preprocess::StreamKind;
use sensorprint::trace::{self, SensorTrace};
use sensorprint::Error;

pub const SP_STREAM_ACCEL_MAGNITUDE: u32 = 1;
pub const SP_STREAM_GYRO_X: u32 = 2;
pub const SP_STREAM_GYRO_Y: u32 = 4;
pub const SP_STREAM_GYRO_Z: u32 = 8;
pub const SP_STREAM_ALL: u32 = 15;
pub const SP_FEATURES_PER_STREAM: usize = 25;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    Parse = 2,
    Validation = 3,
    InvalidArgument = 4,
    Calibration = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque trace handle.
pub struct SpTrace(SensorTrace);

/// Bytes owned by the library; release with [`sp_buffer_free`].
#[repr(C)]
pub struct SpBuffer {
    pub data: *mut u8,
    pub len: usize,
}

/// Per-axis offset `O` and gain `S` of one sensor; corrected = (m - O) / S.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpCalibration {
    pub offset: [f64; 3],
    pub gain: [f64; 3],
}

/// Obfuscation ranges as `[lo, hi]` pairs, range scale factor, injection
/// probability and seed. [`sp_obfuscation_defaults`] fills the base ranges.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpObfuscationParams {
    pub accel_offset: [f64; 2],
    pub gyro_offset: [f64; 2],
    pub gain: [f64; 2],
    pub range_scale: f64,
    pub injection_prob: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SpStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => SpStatus::Parse,
        Error::Validation(_) => SpStatus::Validation,
        Error::InvalidArgument(_) => SpStatus::InvalidArgument,
        Error::Calibration(_) => SpStatus::Calibration,
        Error::Io { .. } => SpStatus::Io,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (SpStatus, String)>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            SpStatus::Panic
        }
    }
}

fn core<T>(r: sensorprint::Result<T>) -> Result<T, (SpStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SpStatus, String) {
    (SpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn bytes<'a>(data: *const u8, len: usize, what: &str) -> Result<&'a [u8], (SpStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn trace_ref<'a>(t: *const SpTrace) -> Result<&'a SensorTrace, (SpStatus, String)> {
    t.as_ref().map(|t| &t.0).ok_or_else(|| null("trace"))
}

unsafe fn put_trace(out: *mut *mut SpTrace, t: SensorTrace) -> Result<(), (SpStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(SpTrace(t)));
    Ok(())
}

fn streams_of(mask: u32) -> Result<Vec<StreamKind>, (SpStatus, String)> {
    if mask == 0 || mask & !SP_STREAM_ALL != 0 {
        return Err((SpStatus::InvalidArgument, format!("stream mask {mask:#x} is not a non-empty subset of 0xf")));
    }
    Ok(StreamKind::ALL.into_iter().filter(|k| mask & (1 << k.index()) != 0).collect())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn sp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a JSON trace document.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_trace_from_json(data: *const u8, len: usize, out: *mut *mut SpTrace) -> SpStatus {
    guard(|| {
        let t = core(trace::parse_json(bytes(data, len, "data")?))?;
        put_trace(out, t)
    })
}

/// Parses a CSV trace body with its JSON metadata sidecar.
///
/// # Safety
/// Both buffers must be readable for their lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_trace_from_csv(
    data: *const u8,
    len: usize,
    meta: *const u8,
    meta_len: usize,
    out: *mut *mut SpTrace,
) -> SpStatus {
    guard(|| {
        let m = core(trace::parse_meta(bytes(meta, meta_len, "meta")?))?;
        let t = core(trace::parse_csv(bytes(data, len, "data")?, m))?;
        put_trace(out, t)
    })
}

/// Builds a trace from `n` rows of `[t_ms, ax, ay, az, gx, gy, gz]`.
///
/// # Safety
/// `rows` must point to `7 * n` doubles; string arguments must be
/// NUL-terminated UTF-8; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_trace_from_samples(
    device_id: *const c_char,
    session_id: *const c_char,
    rows: *const f64,
    n: usize,
    out: *mut *mut SpTrace,
) -> SpStatus {
    guard(|| {
        let text = |p: *const c_char, what: &str| -> Result<String, (SpStatus, String)> {
            if p.is_null() {
                return Err(null(what));
            }
            std::ffi::CStr::from_ptr(p)
                .to_str()
                .map(str::to_string)
                .map_err(|_| (SpStatus::InvalidArgument, format!("{what} is not UTF-8")))
        };
        let meta = trace::TraceMeta::new(text(device_id, "device_id")?, text(session_id, "session_id")?);
        if n > 0 && rows.is_null() {
            return Err(null("rows"));
        }
        let vals = if n == 0 { &[][..] } else { slice::from_raw_parts(rows, 7 * n) };
        let samples = vals
            .chunks_exact(7)
            .map(|r| trace::Sample::new(r[0], [r[1], r[2], r[3]], [r[4], r[5], r[6]]))
            .collect();
        put_trace(out, core(SensorTrace::new(meta, samples))?)
    })
}

/// Releases a trace; null is ignored.
///
/// # Safety
/// `t` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_trace_free(t: *mut SpTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_trace_len(t: *const SpTrace, out: *mut usize) -> SpStatus {
    guard(|| {
        let t = trace_ref(t)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = t.len();
        Ok(())
    })
}

/// Copies samples as rows of `[t_ms, ax, ay, az, gx, gy, gz]` into `out`,
/// which holds `cap` doubles. `written` receives the number of doubles
/// needed, also when the buffer is too small.
///
/// # Safety
/// `out` must be writable for `cap` doubles; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_trace_samples(t: *const SpTrace, out: *mut f64, cap: usize, written: *mut usize) -> SpStatus {
    guard(|| {
        let t = trace_ref(t)?;
        if written.is_null() {
            return Err(null("written"));
        }
        let need = 7 * t.len();
        *written = need;
        if cap < need {
            return Err((SpStatus::BufferTooSmall, format!("need {need} doubles, buffer holds {cap}")));
        }
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let dst = slice::from_raw_parts_mut(out, need);
        for (row, s) in dst.chunks_exact_mut(7).zip(t.samples()) {
            row[0] = s.t;
            row[1..4].copy_from_slice(&s.accel);
            row[4..7].copy_from_slice(&s.gyro);
        }
        Ok(())
    })
}

/// Serializes a trace as JSON into a library-owned buffer.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_trace_to_json(t: *const SpTrace, out: *mut SpBuffer) -> SpStatus {
    guard(|| {
        let t = trace_ref(t)?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let boxed = trace::write_json(t).into_boxed_slice();
        let len = boxed.len();
        *out = SpBuffer { data: Box::into_raw(boxed) as *mut u8, len };
        Ok(())
    })
}

/// Releases a buffer returned by this library and zeroes it.
///
/// # Safety
/// `b` must be null or point to a buffer filled by this library.
#[no_mangle]
pub unsafe extern "C" fn sp_buffer_free(b: *mut SpBuffer) {
    if let Some(b) = b.as_mut() {
        if !b.data.is_null() {
            drop(Box::from_raw(ptr::slice_from_raw_parts_mut(b.data, b.len)));
        }
        b.data = ptr::null_mut();
        b.len = 0;
    }
}

/// Number of features produced for a stream mask.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_feature_count(streams: u32, out: *mut usize) -> SpStatus {
    guard(|| {
        let n = streams_of(streams)?.len() * SP_FEATURES_PER_STREAM;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = n;
        Ok(())
    })
}

/// Name of feature `index` for a stream mask, e.g. `gyro_x.centroid`, as a
/// NUL-terminated string in a library-owned buffer (`len` excludes the NUL).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_feature_name(streams: u32, index: usize, out: *mut SpBuffer) -> SpStatus {
    guard(|| {
        let ids = features::feature_ids(&streams_of(streams)?);
        let id = ids
            .get(index)
            .ok_or_else(|| (SpStatus::InvalidArgument, format!("feature index {index} outside 0..{}", ids.len())))?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let mut v = id.to_string().into_bytes();
        let len = v.len();
        v.push(0);
        let boxed = v.into_boxed_slice();
        *out = SpBuffer { data: Box::into_raw(boxed) as *mut u8, len };
        Ok(())
    })
}

/// Extracts features for the streams in `streams`, resampling at `rate_hz`,
/// into `out` (capacity `cap` doubles). `written` receives the feature count,
/// also when the buffer is too small.
///
/// # Safety
/// `t` must be a live handle; `out` writable for `cap` doubles; `written`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sp_extract_features(
    t: *const SpTrace,
    streams: u32,
    rate_hz: f64,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SpStatus {
    guard(|| {
        let t = trace_ref(t)?;
        let kinds = streams_of(streams)?;
        if written.is_null() {
            return Err(null("written"));
        }
        let need = kinds.len() * SP_FEATURES_PER_STREAM;
        *written = need;
        if cap < need {
            return Err((SpStatus::BufferTooSmall, format!("need {need} doubles, buffer holds {cap}")));
        }
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let v = core(features::extract(t, &kinds, rate_hz))?;
        slice::from_raw_parts_mut(out, need).copy_from_slice(&v.values);
        Ok(())
    })
}

/// Default policy: base ranges, scale 1, no injection, seed 0.
#[no_mangle]
pub extern "C" fn sp_obfuscation_defaults() -> SpObfuscationParams {
    let p = ObfuscationPolicy::default();
    SpObfuscationParams {
        accel_offset: [p.accel_offset_range.lo(), p.accel_offset_range.hi()],
        gyro_offset: [p.gyro_offset_range.lo(), p.gyro_offset_range.hi()],
        gain: [p.gain_range.lo(), p.gain_range.hi()],
        range_scale: p.range_scale,
        injection_prob: p.injection_prob,
        seed: p.seed,
    }
}

fn interval(v: [f64; 2], what: &str) -> Result<Interval, (SpStatus, String)> {
    Interval::new(v[0], v[1]).map_err(|e| (SpStatus::InvalidArgument, format!("{what}: {e}")))
}

/// Obfuscates a trace into a new handle.
///
/// # Safety
/// `t` must be a live handle, `params` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sp_obfuscate(
    t: *const SpTrace,
    params: *const SpObfuscationParams,
    out: *mut *mut SpTrace,
) -> SpStatus {
    guard(|| {
        let t = trace_ref(t)?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let policy = ObfuscationPolicy {
            accel_offset_range: interval(p.accel_offset, "accel_offset")?,
            gyro_offset_range: interval(p.gyro_offset, "gyro_offset")?,
            gain_range: interval(p.gain, "gain")?,
            range_scale: p.range_scale,
            injection_prob: p.injection_prob,
            seed: p.seed,
        };
        put_trace(out, core(obfuscate::obfuscate(t, &policy))?)
    })
}

/// Corrects a trace with per-sensor models into a new handle; a null model
/// leaves that sensor unchanged.
///
/// # Safety
/// `t` must be a live handle, non-null models readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sp_calibrate(
    t: *const SpTrace,
    accel: *const SpCalibration,
    gyro: *const SpCalibration,
    out: *mut *mut SpTrace,
) -> SpStatus {
    guard(|| {
        let t = trace_ref(t)?;
        let mut models = Vec::new();
        for (c, sensor) in [(accel, SensorKind::Accel), (gyro, SensorKind::Gyro)] {
            if let Some(c) = c.as_ref() {
                models.push(CalibrationModel { sensor, offset: c.offset, gain: c.gain });
            }
        }
        put_trace(out, core(calibrate::apply_calibration(t, &models))?)
    })
}
