//! Offset/gain estimation from six-position accelerometer sessions and
//! six-rotation gyroscope sessions, and correction of measured traces.
//!
//! Error model, per axis: `measured = O + S * true`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{self, SensorTrace, TraceFormat};

pub const GRAVITY: f64 = 9.81;
/// Largest accelerometer magnitude variance, (m/s²)², accepted as static.
pub const STATIC_VARIANCE_MAX: f64 = 0.05;
/// Rate deviation from the resting baseline, rad/s, that marks rotation.
pub const ROTATION_THRESHOLD: f64 = 0.05;
pub const ROTATION_PAD_MS: f64 = 100.0;
/// Leading span used to estimate the resting gyro baseline.
pub const BASELINE_MS: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Accel,
    Gyro,
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorKind::Accel => "accel",
            SensorKind::Gyro => "gyro",
        })
    }
}

impl FromStr for SensorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accel" => Ok(SensorKind::Accel),
            "gyro" => Ok(SensorKind::Gyro),
            other => Err(Error::invalid(format!("unknown sensor {other:?}"))),
        }
    }
}

/// Per-axis offset `O` and gain `S` for one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub sensor: SensorKind,
    #[serde(rename = "O")]
    pub offset: [f64; 3],
    #[serde(rename = "S")]
    pub gain: [f64; 3],
}

impl CalibrationModel {
    pub fn identity(sensor: SensorKind) -> Self {
        CalibrationModel { sensor, offset: [0.0; 3], gain: [1.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.offset.iter().chain(&self.gain).any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("{} model has non-finite values", self.sensor)));
        }
        if self.gain.iter().any(|&g| g <= 0.0) {
            return Err(Error::validation(format!("{} model has a non-positive gain", self.sensor)));
        }
        Ok(())
    }

    /// `(measured - O) / S` on each axis.
    pub fn correct(&self, measured: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (measured[i] - self.offset[i]) / self.gain[i])
    }

    /// The forward error model, `O + S * true`.
    pub fn distort(&self, truth: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.offset[i] + self.gain[i] * truth[i])
    }
}

/// Orientation (accelerometer) or rotation sense (gyroscope) of one
/// calibration recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    XPos,
    XNeg,
    YPos,
    YNeg,
    ZPos,
    ZNeg,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::XPos,
        Direction::XNeg,
        Direction::YPos,
        Direction::YNeg,
        Direction::ZPos,
        Direction::ZNeg,
    ];

    pub fn new(axis: usize, positive: bool) -> Self {
        match (axis, positive) {
            (0, true) => Direction::XPos,
            (0, false) => Direction::XNeg,
            (1, true) => Direction::YPos,
            (1, false) => Direction::YNeg,
            (2, true) => Direction::ZPos,
            (2, false) => Direction::ZNeg,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn axis(self) -> usize {
        self as usize / 2
    }

    pub fn sign(self) -> f64 {
        if self as usize % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::XPos => "xpos",
            Direction::XNeg => "xneg",
            Direction::YPos => "ypos",
            Direction::YNeg => "yneg",
            Direction::ZPos => "zpos",
            Direction::ZNeg => "zneg",
        }
    }
}

/// Recordings for all six directions of one sensor. For the gyroscope,
/// `theta` is the nominal rotation angle in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSession {
    pub sensor: SensorKind,
    pub theta: f64,
    pub traces: BTreeMap<Direction, Vec<SensorTrace>>,
}

impl CalibrationSession {
    pub fn new(sensor: SensorKind) -> Self {
        CalibrationSession { sensor, theta: std::f64::consts::PI, traces: BTreeMap::new() }
    }

    pub fn push(&mut self, direction: Direction, trace: SensorTrace) {
        self.traces.entry(direction).or_default().push(trace);
    }

    fn direction(&self, d: Direction) -> Result<&[SensorTrace]> {
        match self.traces.get(&d) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Error::Calibration(format!("{} session has no {} traces", self.sensor, d.as_str()))),
        }
    }
}

/// Offset and gain from the mean readings with the axis along +g and -g.
pub fn accel_from_means(plus: f64, minus: f64) -> (f64, f64) {
    ((plus + minus) / 2.0, (plus - minus) / (2.0 * GRAVITY))
}

/// Offset and gain from integrated angles over a positive rotation lasting
/// `t_plus` seconds and a negative one lasting `t_minus` seconds. Summing
/// `θ+ = O·t₁ + S·θ` and `θ- = O·t₂ - S·θ` isolates the offset.
pub fn gyro_from_angles(theta_plus: f64, theta_minus: f64, t_plus: f64, t_minus: f64, theta: f64) -> Result<(f64, f64)> {
    if !(t_plus > 0.0 && t_minus > 0.0) {
        return Err(Error::Calibration(format!("rotation timespans must be positive, got {t_plus} and {t_minus}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("rotation angle must be positive, got {theta}")));
    }
    let offset = (theta_plus + theta_minus) / (t_plus + t_minus);
    let gain = (theta_plus - theta_minus - offset * (t_plus - t_minus)) / (2.0 * theta);
    Ok((offset, gain))
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// Mean reading per axis, after checking the device was at rest.
pub fn static_mean(trace: &SensorTrace) -> Result<[f64; 3]> {
    let mags: Vec<f64> = trace
        .samples()
        .iter()
        .map(|s| s.accel.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let m = mean(mags.iter().copied());
    let var = mean(mags.iter().map(|v| (v - m).powi(2)));
    if var >= STATIC_VARIANCE_MAX {
        return Err(Error::Calibration(format!(
            "trace {} is not static: magnitude variance {var:.4} >= {STATIC_VARIANCE_MAX}",
            trace.session_id()
        )));
    }
    Ok(std::array::from_fn(|i| mean(trace.samples().iter().map(|s| s.accel[i]))))
}

/// Six-position accelerometer estimate. Each axis uses the mean of its +g and
/// -g recordings, averaged over all recordings of that direction.
pub fn accel_offset_gain(session: &CalibrationSession) -> Result<CalibrationModel> {
    let mut model = CalibrationModel::identity(SensorKind::Accel);
    for axis in 0..3 {
        let avg = |d: Direction| -> Result<f64> {
            let traces = session.direction(d)?;
            let means = traces.iter().map(|t| static_mean(t).map(|m| m[axis])).collect::<Result<Vec<_>>>()?;
            Ok(mean(means.into_iter()))
        };
        let (o, s) = accel_from_means(avg(Direction::new(axis, true))?, avg(Direction::new(axis, false))?);
        model.offset[axis] = o;
        model.gain[axis] = s;
    }
    model.validate().map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(model)
}

/// Trapezoidal integral of `values` over `times_s`.
pub fn trapezoid(times_s: &[f64], values: &[f64]) -> f64 {
    times_s
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * (v[0] + v[1]) / 2.0)
        .sum()
}

/// Sample index range `[start, end]` holding the rotation: every sample whose
/// rate departs from the resting baseline by more than the threshold, widened
/// by the padding on both sides.
pub fn rotation_window(times_ms: &[f64], rates: &[f64]) -> Result<(usize, usize)> {
    let t0 = times_ms[0];
    let pre: Vec<f64> = times_ms.iter().zip(rates).take_while(|(t, _)| **t - t0 <= BASELINE_MS).map(|(_, r)| *r).collect();
    let baseline = mean(pre.into_iter());
    let dev: Vec<f64> = rates.iter().map(|r| (r - baseline).abs()).collect();
    let moving = |d: &f64| *d > ROTATION_THRESHOLD;
    let (Some(mut first), Some(mut last)) = (dev.iter().position(moving), dev.iter().rposition(moving)) else {
        return Err(Error::Calibration("no rotation detected".into()));
    };
    // follow the ramp-up and ramp-down below the threshold until the
    // deviation stops shrinking, so slow starts are not cut off
    while first > 0 && dev[first - 1] < dev[first] {
        first -= 1;
    }
    while last + 1 < dev.len() && dev[last + 1] < dev[last] {
        last += 1;
    }
    let start_t = times_ms[first] - ROTATION_PAD_MS;
    let end_t = times_ms[last] + ROTATION_PAD_MS;
    let start = times_ms.iter().rposition(|&t| t <= start_t).unwrap_or(0);
    let end = times_ms.iter().position(|&t| t >= end_t).unwrap_or(times_ms.len() - 1);
    Ok((start, end))
}

/// Integrated angle (rad) and window length (s) of the rotation about `axis`.
pub fn measure_rotation(trace: &SensorTrace, axis: usize) -> Result<(f64, f64)> {
    let times = trace.times();
    let rates: Vec<f64> = trace.samples().iter().map(|s| s.gyro[axis]).collect();
    let (a, b) = rotation_window(&times, &rates)
        .map_err(|e| Error::Calibration(format!("trace {}: {e}", trace.session_id())))?;
    let secs: Vec<f64> = times[a..=b].iter().map(|t| t / 1000.0).collect();
    Ok((trapezoid(&secs, &rates[a..=b]), secs[secs.len() - 1] - secs[0]))
}

/// Six-rotation gyroscope estimate. The k-th positive recording of an axis is
/// paired with its k-th negative one; estimates are averaged over pairs.
pub fn gyro_offset_gain(session: &CalibrationSession) -> Result<CalibrationModel> {
    let mut model = CalibrationModel::identity(SensorKind::Gyro);
    for axis in 0..3 {
        let plus = session.direction(Direction::new(axis, true))?;
        let minus = session.direction(Direction::new(axis, false))?;
        let pairs = plus.len().min(minus.len());
        let (mut o_sum, mut s_sum) = (0.0, 0.0);
        for (p, m) in plus.iter().zip(minus) {
            let (theta_p, t1) = measure_rotation(p, axis)?;
            let (theta_m, t2) = measure_rotation(m, axis)?;
            let (o, s) = gyro_from_angles(theta_p, theta_m, t1, t2, session.theta)?;
            o_sum += o;
            s_sum += s;
        }
        model.offset[axis] = o_sum / pairs as f64;
        model.gain[axis] = s_sum / pairs as f64;
    }
    model.validate().map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(model)
}

pub fn estimate(session: &CalibrationSession) -> Result<CalibrationModel> {
    match session.sensor {
        SensorKind::Accel => accel_offset_gain(session),
        SensorKind::Gyro => gyro_offset_gain(session),
    }
}

/// Corrects each sensor for which a model is given; metadata is kept.
pub fn apply_calibration(trace: &SensorTrace, models: &[CalibrationModel]) -> Result<SensorTrace> {
    for m in models {
        m.validate()?;
    }
    let samples = trace
        .samples()
        .iter()
        .map(|s| {
            let mut out = *s;
            for m in models {
                match m.sensor {
                    SensorKind::Accel => out.accel = m.correct(out.accel),
                    SensorKind::Gyro => out.gyro = m.correct(out.gyro),
                }
            }
            out
        })
        .collect();
    trace.with_samples(samples)
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionFile {
    sensor: SensorKind,
    #[serde(default = "default_theta")]
    theta: f64,
}

fn default_theta() -> f64 {
    std::f64::consts::PI
}

pub const SESSION_FILE: &str = "session.json";

/// Reads a session directory: `session.json` (`{"sensor": "accel"|"gyro",
/// "theta": rad}`) and one subdirectory of trace files per direction, named
/// `xpos`, `xneg`, `ypos`, `yneg`, `zpos`, `zneg`.
pub fn load_session(dir: &Path) -> Result<CalibrationSession> {
    let path = dir.join(SESSION_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let info: SessionFile = serde_json::from_slice(&bytes)?;
    let mut session = CalibrationSession::new(info.sensor);
    session.theta = info.theta;
    for d in Direction::ALL {
        let sub = dir.join(d.as_str());
        if !sub.is_dir() {
            return Err(Error::validation(format!("missing direction directory {}", sub.display())));
        }
        let traces = trace::load_dir(&sub, &[])?;
        if traces.is_empty() {
            return Err(Error::validation(format!("no traces in {}", sub.display())));
        }
        session.traces.insert(d, traces);
    }
    Ok(session)
}

pub fn save_session(session: &CalibrationSession, dir: &Path) -> Result<()> {
    let info = SessionFile { sensor: session.sensor, theta: session.theta };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(SESSION_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&info)?).map_err(|e| Error::io(&path, e))?;
    for (d, traces) in &session.traces {
        let sub = dir.join(d.as_str());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (i, t) in traces.iter().enumerate() {
            trace::save_trace(t, &sub.join(format!("{i:03}.json")), TraceFormat::Json)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Sample, TraceMeta};
    use std::f64::consts::PI;

    #[test]
    fn accel_algebra() {
        let (o, s) = accel_from_means(9.81, -9.81);
        assert_eq!((o, s), (0.0, 1.0));
        let (o, s) = accel_from_means(10.2, -9.5);
        assert!((o - 0.35).abs() < 1e-12);
        assert!((s - 19.7 / 19.62).abs() < 1e-12);
    }

    #[test]
    fn gyro_algebra() {
        let (o, s) = gyro_from_angles(PI, -PI, 2.0, 3.0, PI).unwrap();
        assert!(o.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        let (o, s) = gyro_from_angles(1.02 * PI + 0.02, -1.02 * PI + 0.03, 2.0, 3.0, PI).unwrap();
        assert!((o - 0.01).abs() < 1e-9, "{o}");
        assert!((s - 1.02).abs() < 1e-9, "{s}");
        // equal timespans are fine for this form
        assert!(gyro_from_angles(PI, -PI, 2.0, 2.0, PI).is_ok());
        assert!(gyro_from_angles(PI, -PI, 0.0, 2.0, PI).is_err());
    }

    #[test]
    fn correction_arithmetic() {
        let m = CalibrationModel { sensor: SensorKind::Accel, offset: [0.0, 0.0, 0.35], gain: [1.0, 1.0, 1.004] };
        let c = m.correct([0.0, 0.0, 10.16]);
        assert!((c[2] - (10.16 - 0.35) / 1.004).abs() < 1e-12);
        assert!((c[2] - 9.7709).abs() < 1e-4);
        let id = CalibrationModel::identity(SensorKind::Gyro);
        assert_eq!(id.correct([0.1, -0.2, 0.3]), [0.1, -0.2, 0.3]);
    }

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let t = [0.0, 0.3, 1.0, 1.7];
        let v: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&t, &v) - (1.7f64.powi(2) + 1.7)).abs() < 1e-12);
    }

    #[test]
    fn moving_trace_rejected() {
        let samples = (0..100)
            .map(|i| Sample::new(i as f64 * 10.0, [0.0, 0.0, if i % 2 == 0 { 9.0 } else { 10.6 }], [0.0; 3]))
            .collect();
        let t = SensorTrace::new(TraceMeta::new("d", "s"), samples).unwrap();
        let err = static_mean(&t).unwrap_err().to_string();
        assert!(err.contains("variance"), "{err}");
    }

    #[test]
    fn still_gyro_has_no_rotation() {
        let samples = (0..100).map(|i| Sample::new(i as f64 * 10.0, [0.0, 0.0, 9.81], [0.08; 3])).collect();
        let t = SensorTrace::new(TraceMeta::new("d", "s"), samples).unwrap();
        assert!(measure_rotation(&t, 0).is_err());
    }

    #[test]
    fn model_json_keys() {
        let m = CalibrationModel::identity(SensorKind::Gyro);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"sensor":"gyro","O":[0.0,0.0,0.0],"S":[1.0,1.0,1.0]}"#);
    }

    #[test]
    fn direction_layout() {
        for (i, d) in Direction::ALL.iter().enumerate() {
            assert_eq!(d.axis(), i / 2);
            assert_eq!(Direction::new(d.axis(), d.sign() > 0.0), *d);
        }
    }
}
