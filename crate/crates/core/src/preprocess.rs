//! Turns a raw trace into the four scalar streams used for fingerprinting
//! (accelerometer magnitude plus the three gyroscope axes) and resamples
//! them onto a uniform grid with a natural cubic spline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::SensorTrace;

pub const DEFAULT_RATE_HZ: f64 = 8000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    AccelMagnitude,
    GyroX,
    GyroY,
    GyroZ,
}

impl StreamKind {
    pub const ALL: [StreamKind; 4] = [
        StreamKind::AccelMagnitude,
        StreamKind::GyroX,
        StreamKind::GyroY,
        StreamKind::GyroZ,
    ];
    pub const ACCEL: [StreamKind; 1] = [StreamKind::AccelMagnitude];
    pub const GYRO: [StreamKind; 3] = [StreamKind::GyroX, StreamKind::GyroY, StreamKind::GyroZ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::AccelMagnitude => "accel_magnitude",
            StreamKind::GyroX => "gyro_x",
            StreamKind::GyroY => "gyro_y",
            StreamKind::GyroZ => "gyro_z",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stream {s:?}")))
    }
}

/// Scalar values at (possibly irregular) timestamps in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct IrregularSeries {
    pub t_ms: Vec<f64>,
    pub values: Vec<f64>,
}

/// A scalar stream sampled on a uniform grid anchored at the first input
/// timestamp; `values.len() == floor(origin_duration_s * rate) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformStream {
    pub kind: StreamKind,
    pub rate: f64,
    pub values: Vec<f64>,
    pub origin_duration_s: f64,
}

pub fn magnitude_stream(trace: &SensorTrace) -> IrregularSeries {
    IrregularSeries {
        t_ms: trace.times(),
        values: trace
            .samples()
            .iter()
            .map(|s| {
                let [x, y, z] = s.accel;
                (x * x + y * y + z * z).sqrt()
            })
            .collect(),
    }
}

pub fn gyro_streams(trace: &SensorTrace) -> [IrregularSeries; 3] {
    let t_ms = trace.times();
    let axis = |i: usize| IrregularSeries {
        t_ms: t_ms.clone(),
        values: trace.samples().iter().map(|s| s.gyro[i]).collect(),
    };
    [axis(0), axis(1), axis(2)]
}

pub fn stream(trace: &SensorTrace, kind: StreamKind) -> IrregularSeries {
    match kind {
        StreamKind::AccelMagnitude => magnitude_stream(trace),
        StreamKind::GyroX | StreamKind::GyroY | StreamKind::GyroZ => {
            let i = kind.index() - 1;
            IrregularSeries {
                t_ms: trace.times(),
                values: trace.samples().iter().map(|s| s.gyro[i]).collect(),
            }
        }
    }
}

/// Natural cubic spline through a set of knots.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::invalid("spline knots and values differ in length"));
        }
        if n < 2 {
            return Err(Error::invalid(format!("spline needs at least 2 points, got {n}")));
        }
        if let Some(w) = x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "spline knots must strictly increase (index {})",
                w + 1
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("spline input contains non-finite values"));
        }

        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas algorithm).
            let k = n - 2;
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    fn eval_in(&self, i: usize, t: f64) -> f64 {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn segment(&self, t: f64) -> usize {
        let last = self.x.len() - 2;
        match self.x.partition_point(|&k| k <= t) {
            0 => 0,
            p => (p - 1).min(last),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_in(self.segment(t), t)
    }

    /// Evaluates at non-decreasing abscissae in one pass.
    pub fn eval_sorted(&self, ts: impl IntoIterator<Item = f64>) -> Vec<f64> {
        let last = self.x.len() - 2;
        let mut i = 0;
        ts.into_iter()
            .map(|t| {
                while i < last && self.x[i + 1] <= t {
                    i += 1;
                }
                self.eval_in(i, t)
            })
            .collect()
    }
}

/// Resamples an irregular series onto a uniform grid at `rate` Hz. The grid
/// starts at the first timestamp; a trailing partial interval is dropped.
pub fn cubic_spline_resample(
    series: &IrregularSeries,
    kind: StreamKind,
    rate: f64,
) -> Result<UniformStream> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("resample rate must be positive, got {rate}")));
    }
    let t_s: Vec<f64> = series.t_ms.iter().map(|t| t / 1000.0).collect();
    let spline = CubicSpline::natural(&t_s, &series.values)?;
    let t0 = t_s[0];
    let duration = t_s[t_s.len() - 1] - t0;
    // tolerate representation error when the duration is an exact grid multiple
    let steps = (duration * rate * (1.0 + 1e-12)).floor() as usize;
    let values = spline.eval_sorted((0..=steps).map(|k| t0 + k as f64 / rate));
    Ok(UniformStream {
        kind,
        rate,
        values,
        origin_duration_s: duration,
    })
}
