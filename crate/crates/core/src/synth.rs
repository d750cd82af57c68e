//! Synthetic device fleets with known per-axis error models, and simulated
//! recording, calibration and rotation sessions for them.
//!
//! Per axis, a recording measures `gain * true + offset + bias + e(t)`, where
//! `gain` and `offset` are fixed per device, `bias` is an optional
//! per-session turn-on bias and `e` is white Gaussian noise whose level is the
//! device's `sigma` scaled by a per-session drift factor.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationModel, CalibrationSession, Direction, SensorKind, GRAVITY};
use crate::error::{Error, Result};
use crate::obfuscate::Interval;
use crate::rng;
use crate::trace::{AudioMode, Placement, Sample, SensorTrace, TraceMeta};

/// Error model of the three axes of one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisModel {
    pub offset: [f64; 3],
    pub gain: [f64; 3],
    /// Noise standard deviation.
    pub sigma: [f64; 3],
}

impl AxisModel {
    pub const IDEAL: AxisModel = AxisModel { offset: [0.0; 3], gain: [1.0; 3], sigma: [0.0; 3] };

    pub fn calibration(&self, sensor: SensorKind) -> CalibrationModel {
        CalibrationModel { sensor, offset: self.offset, gain: self.gain }
    }

    fn measure(&self, truth: [f64; 3], noise: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.gain[i] * truth[i] + self.offset[i] + noise[i])
    }
}

/// Narrowband response to audio stimulation, added to the z acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stimulation {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub accel: AxisModel,
    pub gyro: AxisModel,
    pub stimulation: Stimulation,
}

impl DeviceProfile {
    /// Error-free, noise-free device.
    pub fn ideal(device_id: impl Into<String>) -> Self {
        DeviceProfile {
            device_id: device_id.into(),
            accel: AxisModel::IDEAL,
            gyro: AxisModel::IDEAL,
            stimulation: Stimulation { amplitude: 0.0, frequency_hz: 30.0, phase: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in [&self.accel, &self.gyro] {
            let vals = m.offset.iter().chain(&m.gain).chain(&m.sigma);
            if vals.clone().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("profile {} has non-finite values", self.device_id)));
            }
            if m.gain.iter().any(|&g| g <= 0.0) || m.sigma.iter().any(|&s| s < 0.0) {
                return Err(Error::validation(format!(
                    "profile {} needs positive gains and non-negative noise",
                    self.device_id
                )));
            }
        }
        Ok(())
    }
}

/// Distributions that fleet profiles are drawn from, all uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetSpec {
    pub accel_offset: Interval,
    pub gyro_offset: Interval,
    pub gain: Interval,
    pub accel_sigma: Interval,
    pub gyro_sigma: Interval,
    pub stim_amplitude: Interval,
    pub stim_frequency_hz: Interval,
}

impl Default for FleetSpec {
    fn default() -> Self {
        let iv = |lo, hi| Interval::new(lo, hi).expect("static interval");
        FleetSpec {
            accel_offset: iv(-0.5, 0.5),
            gyro_offset: iv(-0.1, 0.1),
            gain: iv(0.95, 1.05),
            accel_sigma: iv(0.005, 0.05),
            gyro_sigma: iv(0.0005, 0.005),
            stim_amplitude: iv(0.0, 0.02),
            stim_frequency_hz: iv(20.0, 45.0),
        }
    }
}

impl FleetSpec {
    /// Offsets and gains as usual; every device has the same noise level, the
    /// lowest, so offset and gain are the only differences.
    pub fn noise_floor() -> Self {
        let d = FleetSpec::default();
        FleetSpec {
            accel_sigma: Interval::point(d.accel_sigma.lo()),
            gyro_sigma: Interval::point(d.gyro_sigma.lo()),
            ..d
        }
    }

    fn validate(&self) -> Result<()> {
        if self.gain.lo() <= 0.0 || self.accel_sigma.lo() < 0.0 || self.gyro_sigma.lo() < 0.0 {
            return Err(Error::invalid("fleet gains must be positive and noise levels non-negative"));
        }
        Ok(())
    }
}

pub fn device_id(index: usize) -> String {
    format!("dev{index:03}")
}

fn draw_axes(rng: &mut ChaCha8Rng, offset: Interval, spec: &FleetSpec, sigma: Interval) -> AxisModel {
    let mut m = AxisModel::IDEAL;
    for i in 0..3 {
        m.offset[i] = offset.sample(rng);
        m.gain[i] = spec.gain.sample(rng);
        m.sigma[i] = sigma.sample(rng);
    }
    m
}

pub fn generate_fleet(n_devices: usize, seed: u64) -> Result<Vec<DeviceProfile>> {
    generate_fleet_with(n_devices, &FleetSpec::default(), seed)
}

/// Device `i` depends only on `(seed, i)`, so a larger fleet extends a
/// smaller one with the same seed.
pub fn generate_fleet_with(n_devices: usize, spec: &FleetSpec, seed: u64) -> Result<Vec<DeviceProfile>> {
    if n_devices < 2 {
        return Err(Error::invalid(format!("a fleet needs at least 2 devices, got {n_devices}")));
    }
    spec.validate()?;
    Ok((0..n_devices)
        .map(|i| {
            let mut r = rng::rng(rng::derive(seed, &[i as u64]));
            let accel = draw_axes(&mut r, spec.accel_offset, spec, spec.accel_sigma);
            let gyro = draw_axes(&mut r, spec.gyro_offset, spec, spec.gyro_sigma);
            let stimulation = Stimulation {
                amplitude: spec.stim_amplitude.sample(&mut r),
                frequency_hz: spec.stim_frequency_hz.sample(&mut r),
                phase: r.random_range(0.0..2.0 * PI),
            };
            DeviceProfile { device_id: device_id(i), accel, gyro, stimulation }
        })
        .collect())
}

/// Session-to-session variation of a device: a turn-on bias added to every
/// axis (Gaussian, standard deviations in sensor units) and a log-normal
/// factor on each axis's noise level, standing in for temperature and
/// ambient-vibration differences between recordings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionDrift {
    pub accel_bias_sd: f64,
    pub gyro_bias_sd: f64,
    pub noise_log_sd: f64,
}

impl SessionDrift {
    pub const NONE: SessionDrift = SessionDrift { accel_bias_sd: 0.0, gyro_bias_sd: 0.0, noise_log_sd: 0.0 };

    fn validate(&self) -> Result<()> {
        let v = [self.accel_bias_sd, self.gyro_bias_sd, self.noise_log_sd];
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("session drift levels must be finite and non-negative"));
        }
        Ok(())
    }
}

impl Default for SessionDrift {
    fn default() -> Self {
        SessionDrift { accel_bias_sd: 0.0, gyro_bias_sd: 0.0, noise_log_sd: 0.25 }
    }
}

/// Noise source for one sensor over one recording.
struct SensorNoise {
    sigma: [f64; 3],
    bias: [f64; 3],
}

impl SensorNoise {
    fn silent() -> Self {
        SensorNoise { sigma: [0.0; 3], bias: [0.0; 3] }
    }

    fn new(model: &AxisModel, bias_sd: f64, noise_log_sd: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut normal = || -> f64 { StandardNormal.sample(rng) };
        let bias = std::array::from_fn(|_| bias_sd * normal());
        let sigma = std::array::from_fn(|i| model.sigma[i] * (noise_log_sd * normal()).exp());
        SensorNoise { sigma, bias }
    }

    fn next(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        if self.sigma == [0.0; 3] {
            return self.bias;
        }
        std::array::from_fn(|i| {
            let z: f64 = StandardNormal.sample(rng);
            self.bias[i] + self.sigma[i] * z
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub placement: Placement,
    pub audio_mode: AudioMode,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Half-width of the uniform timestamp perturbation, ms.
    pub jitter_ms: f64,
    pub drift: SessionDrift,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            placement: Placement::Desk,
            audio_mode: AudioMode::None,
            duration_s: 6.0,
            rate_hz: 100.0,
            jitter_ms: 2.0,
            drift: SessionDrift::default(),
        }
    }
}

impl Scenario {
    fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.rate_hz > 0.0 && self.duration_s.is_finite() && self.rate_hz.is_finite()) {
            return Err(Error::invalid("duration and rate must be positive"));
        }
        let half_step = 500.0 / self.rate_hz;
        if !(0.0..half_step).contains(&self.jitter_ms) {
            return Err(Error::invalid(format!(
                "jitter {} ms must be below half the sample step ({half_step} ms)",
                self.jitter_ms
            )));
        }
        self.drift.validate()
    }
}

/// Uniform grid at `rate_hz` covering `duration_s`, each point moved by up
/// to `jitter_ms`; the first stays at 0. Strictly increasing because the
/// jitter is below half a step.
fn timestamps(duration_s: f64, rate_hz: f64, jitter_ms: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let step = 1000.0 / rate_hz;
    let n = (duration_s * rate_hz).floor() as usize + 1;
    (0..n)
        .map(|k| {
            let base = k as f64 * step;
            if k == 0 || jitter_ms == 0.0 {
                base
            } else {
                base + rng.random_range(-jitter_ms..jitter_ms)
            }
        })
        .collect()
}

/// Sum of three slow sinusoids per axis.
struct Tremor {
    terms: [[(f64, f64, f64); 3]; 6],
}

impl Tremor {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let terms = std::array::from_fn(|axis| {
            let max_amp = if axis < 3 { 0.3 } else { 0.05 };
            std::array::from_fn(|_| {
                (
                    rng.random_range(0.0..=max_amp / 3.0),
                    rng.random_range(0.5..=4.0),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
        });
        Tremor { terms }
    }

    fn at(&self, axis: usize, t_s: f64) -> f64 {
        self.terms[axis].iter().map(|(a, f, p)| a * (2.0 * PI * f * t_s + p).sin()).sum()
    }
}

/// One recording session of `profile` at rest on a desk or held in hand.
pub fn simulate_trace(profile: &DeviceProfile, scenario: &Scenario, session_id: &str, seed: u64) -> Result<SensorTrace> {
    scenario.validate()?;
    profile.validate()?;
    let mut r = rng::rng(seed);
    let times = timestamps(scenario.duration_s, scenario.rate_hz, scenario.jitter_ms, &mut r);
    let tremor = (scenario.placement == Placement::Hand).then(|| Tremor::draw(&mut r));
    let drift = scenario.drift;
    let accel_noise = SensorNoise::new(&profile.accel, drift.accel_bias_sd, drift.noise_log_sd, &mut r);
    let gyro_noise = SensorNoise::new(&profile.gyro, drift.gyro_bias_sd, drift.noise_log_sd, &mut r);
    let stim = profile.stimulation;
    let mut samples = Vec::with_capacity(times.len());
    for &t in &times {
        let ts = t / 1000.0;
        let mut accel = [0.0, 0.0, GRAVITY];
        let mut gyro = [0.0; 3];
        if let Some(tr) = &tremor {
            for i in 0..3 {
                accel[i] += tr.at(i, ts);
                gyro[i] += tr.at(3 + i, ts);
            }
        }
        if scenario.audio_mode == AudioMode::Sine20k {
            accel[2] += stim.amplitude * (2.0 * PI * stim.frequency_hz * ts + stim.phase).sin();
        }
        let a = profile.accel.measure(accel, accel_noise.next(&mut r));
        let g = profile.gyro.measure(gyro, gyro_noise.next(&mut r));
        samples.push(Sample::new(t, a, g));
    }
    let meta = TraceMeta {
        device_id: profile.device_id.clone(),
        session_id: session_id.to_string(),
        audio_mode: scenario.audio_mode,
        placement: scenario.placement,
    };
    SensorTrace::new(meta, samples)
}

/// How many sessions to record per device and how long each lasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionPlan {
    pub sessions_per_device: usize,
    pub scenario: Scenario,
    /// Each session's duration is drawn uniformly from this range (seconds).
    pub duration_s: Interval,
}

impl Default for SessionPlan {
    fn default() -> Self {
        SessionPlan {
            sessions_per_device: 10,
            scenario: Scenario::default(),
            duration_s: Interval::new(5.0, 8.0).expect("static interval"),
        }
    }
}

pub fn session_id(index: usize) -> String {
    format!("s{index:02}")
}

/// All sessions of all devices, ordered by device then session. Each trace
/// depends only on `(seed, device_id, session_id)`.
pub fn simulate_fleet(profiles: &[DeviceProfile], plan: &SessionPlan, seed: u64) -> Result<Vec<SensorTrace>> {
    let jobs: Vec<(&DeviceProfile, usize)> = profiles
        .iter()
        .flat_map(|p| (0..plan.sessions_per_device).map(move |s| (p, s)))
        .collect();
    jobs.par_iter()
        .map(|&(p, s)| {
            let sid = session_id(s);
            let key = rng::derive_str(seed, &[&p.device_id, &sid]);
            let mut r = rng::rng(key);
            let scenario = Scenario { duration_s: plan.duration_s.sample(&mut r), ..plan.scenario };
            simulate_trace(p, &scenario, &sid, rng::derive(key, &[1]))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccelCalibrationPlan {
    pub measurements: usize,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub jitter_ms: f64,
    /// Noise-free recordings without session drift.
    pub noiseless: bool,
}

impl Default for AccelCalibrationPlan {
    fn default() -> Self {
        AccelCalibrationPlan { measurements: 10, duration_s: 2.0, rate_hz: 100.0, jitter_ms: 2.0, noiseless: false }
    }
}

fn check_measurements(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("at least one measurement per direction is needed"));
    }
    Ok(())
}

/// Noise sources for one calibration recording. Calibration happens in one
/// sitting, so there is no turn-on bias between recordings.
fn recording_noise(profile: &DeviceProfile, noiseless: bool, rng: &mut ChaCha8Rng) -> (SensorNoise, SensorNoise) {
    if noiseless {
        (SensorNoise::silent(), SensorNoise::silent())
    } else {
        (SensorNoise::new(&profile.accel, 0.0, 0.0, rng), SensorNoise::new(&profile.gyro, 0.0, 0.0, rng))
    }
}

/// Static recordings with each axis in turn along +g and -g.
pub fn simulate_accel_calibration(
    profile: &DeviceProfile,
    plan: &AccelCalibrationPlan,
    seed: u64,
) -> Result<CalibrationSession> {
    check_measurements(plan.measurements)?;
    let scenario = Scenario { duration_s: plan.duration_s, rate_hz: plan.rate_hz, jitter_ms: plan.jitter_ms, ..Default::default() };
    scenario.validate()?;
    profile.validate()?;
    let mut session = CalibrationSession::new(SensorKind::Accel);
    for d in Direction::ALL {
        for k in 0..plan.measurements {
            let mut r = rng::rng(rng::derive(seed, &[d as u64, k as u64]));
            let times = timestamps(plan.duration_s, plan.rate_hz, plan.jitter_ms, &mut r);
            let (an, gn) = recording_noise(profile, plan.noiseless, &mut r);
            let mut truth = [0.0; 3];
            truth[d.axis()] = d.sign() * GRAVITY;
            let samples = times
                .iter()
                .map(|&t| {
                    let a = profile.accel.measure(truth, an.next(&mut r));
                    let g = profile.gyro.measure([0.0; 3], gn.next(&mut r));
                    Sample::new(t, a, g)
                })
                .collect();
            let meta = TraceMeta::new(profile.device_id.clone(), format!("{}-{k:02}", d.as_str()));
            session.push(d, SensorTrace::new(meta, samples)?);
        }
    }
    Ok(session)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GyroCalibrationPlan {
    pub measurements: usize,
    /// Nominal rotation angle, radians.
    pub theta: f64,
    /// Rotation duration range, seconds.
    pub rotation_s: Interval,
    /// Still periods before and after the rotation, seconds.
    pub pre_roll_s: f64,
    pub post_roll_s: f64,
    pub rate_hz: f64,
    pub jitter_ms: f64,
    /// Relative error of the physically performed angle: the device turns
    /// `theta * (1 + u)` with `u` uniform in `[-angle_error, angle_error]`.
    pub angle_error: f64,
    pub noiseless: bool,
}

impl Default for GyroCalibrationPlan {
    fn default() -> Self {
        GyroCalibrationPlan {
            measurements: 10,
            theta: PI,
            rotation_s: Interval::new(1.5, 3.0).expect("static interval"),
            pre_roll_s: 0.5,
            post_roll_s: 0.5,
            rate_hz: 100.0,
            jitter_ms: 2.0,
            angle_error: 0.0,
            noiseless: true,
        }
    }
}

impl GyroCalibrationPlan {
    /// Hand-performed rotations: ±5% angle error and sensor noise.
    pub fn realistic() -> Self {
        GyroCalibrationPlan { angle_error: 0.05, noiseless: false, ..Default::default() }
    }
}

/// Rotation rate profile turning by `angle` over `[0, period]`:
/// `ω(t) = angle · 2/(3T) · (1 - cos(2πt/T))²`. Smooth, zero with zero
/// derivatives at both ends.
pub fn rotation_rate(angle: f64, period: f64, t: f64) -> f64 {
    if !(0.0..=period).contains(&t) {
        return 0.0;
    }
    let c = 1.0 - (2.0 * PI * t / period).cos();
    angle * 2.0 / (3.0 * period) * c * c
}

/// Still, rotate about one axis in the given sense, still again.
pub fn simulate_gyro_calibration(
    profile: &DeviceProfile,
    plan: &GyroCalibrationPlan,
    seed: u64,
) -> Result<CalibrationSession> {
    check_measurements(plan.measurements)?;
    if !(plan.theta > 0.0 && (0.0..1.0).contains(&plan.angle_error)) {
        return Err(Error::invalid("rotation angle must be positive and angle error in [0, 1)"));
    }
    profile.validate()?;
    let mut session = CalibrationSession::new(SensorKind::Gyro);
    session.theta = plan.theta;
    for d in Direction::ALL {
        for k in 0..plan.measurements {
            let mut r = rng::rng(rng::derive(seed, &[d as u64, k as u64]));
            let period = plan.rotation_s.sample(&mut r);
            let err = if plan.angle_error > 0.0 { r.random_range(-plan.angle_error..=plan.angle_error) } else { 0.0 };
            let angle = d.sign() * plan.theta * (1.0 + err);
            let total = plan.pre_roll_s + period + plan.post_roll_s;
            let scenario = Scenario { duration_s: total, rate_hz: plan.rate_hz, jitter_ms: plan.jitter_ms, ..Default::default() };
            scenario.validate()?;
            let times = timestamps(total, plan.rate_hz, plan.jitter_ms, &mut r);
            let (an, gn) = recording_noise(profile, plan.noiseless, &mut r);
            let samples = times
                .iter()
                .map(|&t| {
                    let mut w = [0.0; 3];
                    w[d.axis()] = rotation_rate(angle, period, t / 1000.0 - plan.pre_roll_s);
                    let a = profile.accel.measure([0.0, 0.0, GRAVITY], an.next(&mut r));
                    Sample::new(t, a, profile.gyro.measure(w, gn.next(&mut r)))
                })
                .collect();
            let meta = TraceMeta::new(profile.device_id.clone(), format!("{}-{k:02}", d.as_str()));
            session.push(d, SensorTrace::new(meta, samples)?);
        }
    }
    Ok(session)
}
