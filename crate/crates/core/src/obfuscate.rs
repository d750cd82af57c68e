//! Sensor-output obfuscation: a random per-session affine transform of every
//! axis, optionally combined with probabilistic injection of extra,
//! differently transformed samples between existing timestamps.
//!
//! All randomness is derived from `(policy.seed, device_id, session_id)`, so
//! traces can be processed in any order or in parallel.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::trace::{Sample, SensorTrace};

/// Lower bound applied to scaled gain intervals so gains stay positive.
pub const MIN_GAIN: f64 = 0.01;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("[{lo}, {hi}] is not a valid interval")));
        }
        Ok(Interval { lo, hi })
    }

    pub const fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Uniform draw; a degenerate interval returns its single point.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Keeps the midpoint and multiplies the half-width by `factor`.
pub fn scale_range(interval: Interval, factor: f64) -> Result<Interval> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("range scale must be positive, got {factor}")));
    }
    if factor == 1.0 {
        return Ok(interval);
    }
    let mid = interval.midpoint();
    let half = interval.half_width() * factor;
    Interval::new(mid - half, mid + half)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObfuscationPolicy {
    pub accel_offset_range: Interval,
    pub gyro_offset_range: Interval,
    pub gain_range: Interval,
    pub range_scale: f64,
    pub injection_prob: f64,
    pub seed: u64,
}

impl Default for ObfuscationPolicy {
    fn default() -> Self {
        ObfuscationPolicy {
            accel_offset_range: Interval { lo: -0.5, hi: 0.5 },
            gyro_offset_range: Interval { lo: -0.1, hi: 0.1 },
            gain_range: Interval { lo: 0.95, hi: 1.05 },
            range_scale: 1.0,
            injection_prob: 0.0,
            seed: 0,
        }
    }
}

/// Ranges after applying `range_scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRanges {
    pub accel_offset: Interval,
    pub gyro_offset: Interval,
    pub gain: Interval,
}

impl ObfuscationPolicy {
    pub fn validate(&self) -> Result<()> {
        self.effective_ranges().map(|_| ())
    }

    /// Scaled ranges. A scaled gain interval reaching below [`MIN_GAIN`] is
    /// clipped there; one entirely below it is rejected.
    pub fn effective_ranges(&self) -> Result<EffectiveRanges> {
        if !(0.0..=1.0).contains(&self.injection_prob) {
            return Err(Error::invalid(format!(
                "injection probability must be in [0, 1], got {}",
                self.injection_prob
            )));
        }
        let gain = scale_range(self.gain_range, self.range_scale)?;
        if gain.hi < MIN_GAIN {
            return Err(Error::invalid(format!(
                "scaled gain interval [{}, {}] is not positive",
                gain.lo, gain.hi
            )));
        }
        Ok(EffectiveRanges {
            accel_offset: scale_range(self.accel_offset_range, self.range_scale)?,
            gyro_offset: scale_range(self.gyro_offset_range, self.range_scale)?,
            gain: Interval::new(gain.lo.max(MIN_GAIN), gain.hi)?,
        })
    }
}

/// Independent gain and offset for each of the six axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDraw {
    pub accel_gain: [f64; 3],
    pub accel_offset: [f64; 3],
    pub gyro_gain: [f64; 3],
    pub gyro_offset: [f64; 3],
}

impl AffineDraw {
    pub fn draw(ranges: &EffectiveRanges, rng: &mut impl Rng) -> Self {
        let mut d = AffineDraw {
            accel_gain: [1.0; 3],
            accel_offset: [0.0; 3],
            gyro_gain: [1.0; 3],
            gyro_offset: [0.0; 3],
        };
        for i in 0..3 {
            d.accel_gain[i] = ranges.gain.sample(rng);
            d.accel_offset[i] = ranges.accel_offset.sample(rng);
            d.gyro_gain[i] = ranges.gain.sample(rng);
            d.gyro_offset[i] = ranges.gyro_offset.sample(rng);
        }
        d
    }

    /// `v * gain + offset` on every axis; the timestamp is replaced by `t`.
    pub fn apply(&self, s: &Sample, t: f64) -> Sample {
        let mut out = Sample::new(t, [0.0; 3], [0.0; 3]);
        for i in 0..3 {
            out.accel[i] = s.accel[i] * self.accel_gain[i] + self.accel_offset[i];
            out.gyro[i] = s.gyro[i] * self.gyro_gain[i] + self.gyro_offset[i];
        }
        out
    }
}

fn session_rng(trace: &SensorTrace, policy: &ObfuscationPolicy) -> ChaCha8Rng {
    rng::rng(rng::derive_str(policy.seed, &[trace.device_id(), trace.session_id()]))
}

/// Applies one random affine draw to the whole session.
pub fn session_affine(trace: &SensorTrace, policy: &ObfuscationPolicy) -> Result<SensorTrace> {
    let ranges = policy.effective_ranges()?;
    let mut rng = session_rng(trace, policy);
    let draw = AffineDraw::draw(&ranges, &mut rng);
    trace.with_samples(trace.samples().iter().map(|s| draw.apply(s, s.t)).collect())
}

/// Session affine transform plus, before every sample after the first and
/// with probability `injection_prob`, one extra sample at a random time
/// strictly between the previous and current timestamps. The extra sample is
/// the current reading under a fresh affine draw.
pub fn inject(trace: &SensorTrace, policy: &ObfuscationPolicy) -> Result<SensorTrace> {
    let ranges = policy.effective_ranges()?;
    let mut rng = session_rng(trace, policy);
    let session = AffineDraw::draw(&ranges, &mut rng);
    let samples = trace.samples();
    let mut out = Vec::with_capacity(samples.len() * 2);
    for (i, s) in samples.iter().enumerate() {
        if i > 0 && rng.random::<f64>() < policy.injection_prob {
            let prev = samples[i - 1].t;
            let fresh = AffineDraw::draw(&ranges, &mut rng);
            // skip when no representable time lies strictly between
            if prev.next_up() < s.t {
                let t = loop {
                    let t = rng.random_range(prev..s.t);
                    if t > prev && t < s.t {
                        break t;
                    }
                };
                out.push(fresh.apply(s, t));
            }
        }
        out.push(session.apply(s, s.t));
    }
    trace.with_samples(out)
}

/// The full countermeasure described by `policy`.
pub fn obfuscate(trace: &SensorTrace, policy: &ObfuscationPolicy) -> Result<SensorTrace> {
    if policy.injection_prob > 0.0 {
        inject(trace, policy)
    } else {
        session_affine(trace, policy)
    }
}
