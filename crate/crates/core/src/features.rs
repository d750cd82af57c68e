//! The 25 per-stream fingerprint features: 10 temporal statistics computed on
//! the raw (irregular) samples and 15 spectral descriptors computed on the
//! uniformly resampled stream.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{self, StreamKind, UniformStream};
use crate::trace::SensorTrace;

pub const BRIGHTNESS_CUTOFF_HZ: f64 = 1500.0;
pub const ROLLOFF_FRACTION: f64 = 0.85;
pub const FRAME_MS: f64 = 50.0;
/// Spectral peaks must reach this fraction of the global maximum.
pub const PEAK_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureName {
    Mean,
    StdDev,
    AvgDev,
    Skewness,
    Kurtosis,
    Rms,
    Max,
    Min,
    Zcr,
    NonnegCount,
    Centroid,
    Spread,
    SpecSkewness,
    SpecKurtosis,
    Entropy,
    Flatness,
    Brightness,
    Rolloff,
    Roughness,
    Irregularity,
    SpecRms,
    LowEnergyRate,
    Flux,
    AttackTime,
    AttackSlope,
}

impl FeatureName {
    pub const ALL: [FeatureName; 25] = [
        FeatureName::Mean,
        FeatureName::StdDev,
        FeatureName::AvgDev,
        FeatureName::Skewness,
        FeatureName::Kurtosis,
        FeatureName::Rms,
        FeatureName::Max,
        FeatureName::Min,
        FeatureName::Zcr,
        FeatureName::NonnegCount,
        FeatureName::Centroid,
        FeatureName::Spread,
        FeatureName::SpecSkewness,
        FeatureName::SpecKurtosis,
        FeatureName::Entropy,
        FeatureName::Flatness,
        FeatureName::Brightness,
        FeatureName::Rolloff,
        FeatureName::Roughness,
        FeatureName::Irregularity,
        FeatureName::SpecRms,
        FeatureName::LowEnergyRate,
        FeatureName::Flux,
        FeatureName::AttackTime,
        FeatureName::AttackSlope,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureName::Mean => "mean",
            FeatureName::StdDev => "std_dev",
            FeatureName::AvgDev => "avg_dev",
            FeatureName::Skewness => "skewness",
            FeatureName::Kurtosis => "kurtosis",
            FeatureName::Rms => "rms",
            FeatureName::Max => "max",
            FeatureName::Min => "min",
            FeatureName::Zcr => "zcr",
            FeatureName::NonnegCount => "nonneg_count",
            FeatureName::Centroid => "centroid",
            FeatureName::Spread => "spread",
            FeatureName::SpecSkewness => "spec_skewness",
            FeatureName::SpecKurtosis => "spec_kurtosis",
            FeatureName::Entropy => "entropy",
            FeatureName::Flatness => "flatness",
            FeatureName::Brightness => "brightness",
            FeatureName::Rolloff => "rolloff",
            FeatureName::Roughness => "roughness",
            FeatureName::Irregularity => "irregularity",
            FeatureName::SpecRms => "spec_rms",
            FeatureName::LowEnergyRate => "low_energy_rate",
            FeatureName::Flux => "flux",
            FeatureName::AttackTime => "attack_time",
            FeatureName::AttackSlope => "attack_slope",
        }
    }

    pub fn is_temporal(self) -> bool {
        (self as usize) < 10
    }
}

/// `<stream>.<feature>`, e.g. `gyro_x.centroid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureId {
    pub stream: StreamKind,
    pub name: FeatureName,
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.stream, self.name.as_str())
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (stream, name) = s
            .split_once('.')
            .ok_or_else(|| Error::invalid(format!("feature id {s:?} is not <stream>.<name>")))?;
        let stream = stream.parse()?;
        let name = FeatureName::ALL
            .into_iter()
            .find(|n| n.as_str() == name)
            .ok_or_else(|| Error::invalid(format!("unknown feature name {name:?}")))?;
        Ok(FeatureId { stream, name })
    }
}

impl Serialize for FeatureId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Feature ids for the given streams, in canonical order (stream order of
/// [`StreamKind::ALL`], then [`FeatureName::ALL`]).
pub fn feature_ids(streams: &[StreamKind]) -> Vec<FeatureId> {
    StreamKind::ALL
        .into_iter()
        .filter(|k| streams.contains(k))
        .flat_map(|stream| FeatureName::ALL.into_iter().map(move |name| FeatureId { stream, name }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TemporalFeatures {
    pub mean: f64,
    pub std_dev: f64,
    pub avg_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub rms: f64,
    pub max: f64,
    pub min: f64,
    pub zcr: f64,
    pub nonneg_count: f64,
}

impl TemporalFeatures {
    pub fn to_array(self) -> [f64; 10] {
        [
            self.mean,
            self.std_dev,
            self.avg_dev,
            self.skewness,
            self.kurtosis,
            self.rms,
            self.max,
            self.min,
            self.zcr,
            self.nonneg_count,
        ]
    }
}

/// Population statistics of a raw series. Skewness and kurtosis are the
/// standardized 3rd and 4th central moments (kurtosis is not excess); both
/// are 0 for a constant series.
pub fn temporal_features(values: &[f64]) -> Result<TemporalFeatures> {
    if values.len() < 2 {
        return Err(Error::invalid("temporal features need at least 2 values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let nonneg_count = values.iter().filter(|&&v| v >= 0.0).count() as f64;
    let sign = |v: f64| if v > 0.0 { 1 } else { 0 };
    let flips = values
        .windows(2)
        .filter(|w| sign(w[0]) != sign(w[1]))
        .count();
    let zcr = flips as f64 / n;

    let (std_dev, avg_dev, skewness, kurtosis) = if max == min {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = m2.sqrt();
        let avg_dev = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
        if std == 0.0 {
            (0.0, avg_dev, 0.0, 0.0)
        } else {
            let skew = values.iter().map(|v| ((v - mean) / std).powi(3)).sum::<f64>() / n;
            let kurt = values.iter().map(|v| ((v - mean) / std).powi(4)).sum::<f64>() / n;
            (std, avg_dev, skew, kurt)
        }
    };

    Ok(TemporalFeatures {
        mean,
        std_dev,
        avg_dev,
        skewness,
        kurtosis,
        rms,
        max,
        min,
        zcr,
        nonneg_count,
    })
}

/// One-sided magnitude spectrum without the DC bin. `pmf` is the magnitude
/// distribution normalized to unit sum (uniform when all magnitudes are 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub pmf: Vec<f64>,
}

impl Spectrum {
    pub fn from_magnitudes(bin_freqs: Vec<f64>, magnitudes: Vec<f64>) -> Result<Self> {
        if bin_freqs.len() != magnitudes.len() || bin_freqs.is_empty() {
            return Err(Error::invalid("spectrum needs equal, non-zero numbers of bins and magnitudes"));
        }
        if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::invalid("spectrum magnitudes must be finite and non-negative"));
        }
        let total: f64 = magnitudes.iter().sum();
        let pmf = if total > 0.0 {
            magnitudes.iter().map(|m| m / total).collect()
        } else {
            vec![1.0 / magnitudes.len() as f64; magnitudes.len()]
        };
        Ok(Spectrum {
            bin_freqs,
            magnitudes,
            pmf,
        })
    }

    pub fn total(&self) -> f64 {
        self.magnitudes.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        if self.bin_freqs.len() > 1 {
            self.bin_freqs[1] - self.bin_freqs[0]
        } else {
            self.bin_freqs[0]
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

/// |X_k| / N for k = 1..=N/2 of the mean-removed signal.
fn one_sided_magnitudes(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    plan(n).process(&mut buf);
    buf[1..=n / 2].iter().map(|c| c.norm() / n as f64).collect()
}

/// Rectangular-window DFT magnitude spectrum of the mean-removed stream.
pub fn fft_spectrum(stream: &UniformStream) -> Result<Spectrum> {
    let n = stream.values.len();
    if n < 8 {
        return Err(Error::invalid(format!("spectrum needs at least 8 samples, got {n}")));
    }
    let magnitudes = one_sided_magnitudes(&stream.values);
    let df = stream.rate / n as f64;
    let bin_freqs = (1..=n / 2).map(|k| k as f64 * df).collect();
    Spectrum::from_magnitudes(bin_freqs, magnitudes)
}

/// Per-frame RMS and power spectra of a stream cut into non-overlapping
/// frames (mean-removed with the whole-stream mean).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub rms: Vec<f64>,
    pub power_spectra: Vec<Vec<f64>>,
}

pub fn frame_series(stream: &UniformStream, frame_ms: f64) -> FrameSeries {
    let values = &stream.values;
    let len = ((frame_ms / 1000.0 * stream.rate).round() as usize).clamp(2, values.len().max(2));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let frames: Vec<&[f64]> = if centered.len() < len {
        vec![&centered[..]]
    } else {
        centered.chunks_exact(len).collect()
    };
    let rms = frames
        .iter()
        .map(|f| (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt())
        .collect();
    let power_spectra = frames
        .iter()
        .map(|f| {
            let fft = plan(f.len());
            let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
            fft.process(&mut buf);
            let n = f.len() as f64;
            buf[1..=f.len() / 2].iter().map(|c| c.norm_sqr() / (n * n)).collect()
        })
        .collect();
    FrameSeries { rms, power_spectra }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectralFeatures {
    pub centroid: f64,
    pub spread: f64,
    pub spec_skewness: f64,
    pub spec_kurtosis: f64,
    pub entropy: f64,
    pub flatness: f64,
    pub brightness: f64,
    pub rolloff: f64,
    pub roughness: f64,
    pub irregularity: f64,
    pub spec_rms: f64,
    pub low_energy_rate: f64,
    pub flux: f64,
    pub attack_time: f64,
    pub attack_slope: f64,
}

impl SpectralFeatures {
    pub fn to_array(self) -> [f64; 15] {
        [
            self.centroid,
            self.spread,
            self.spec_skewness,
            self.spec_kurtosis,
            self.entropy,
            self.flatness,
            self.brightness,
            self.rolloff,
            self.roughness,
            self.irregularity,
            self.spec_rms,
            self.low_energy_rate,
            self.flux,
            self.attack_time,
            self.attack_slope,
        ]
    }
}

/// Indices of interior local maxima that reach [`PEAK_THRESHOLD`] of the
/// global maximum.
pub fn spectral_peaks(magnitudes: &[f64]) -> Vec<usize> {
    let max = magnitudes.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 || magnitudes.len() < 3 {
        return Vec::new();
    }
    (1..magnitudes.len() - 1)
        .filter(|&i| {
            let m = magnitudes[i];
            m > magnitudes[i - 1] && m > magnitudes[i + 1] && m >= PEAK_THRESHOLD * max
        })
        .collect()
}

/// Plomp-Levelt dissonance of two partials (Sethares' parameterization).
fn dissonance(f1: f64, a1: f64, f2: f64, a2: f64) -> f64 {
    let s = 0.24 / (0.0207 * f1.min(f2) + 18.96);
    let d = (f2 - f1).abs();
    a1 * a2 * ((-3.5 * s * d).exp() - (-5.75 * s * d).exp())
}

pub fn spectral_features(spec: &Spectrum, frames: &FrameSeries) -> SpectralFeatures {
    let (low_energy_rate, flux) = frame_features(frames);
    if spec.total() <= 0.0 {
        return SpectralFeatures {
            flatness: 1.0,
            low_energy_rate,
            flux,
            ..Default::default()
        };
    }
    let f = &spec.bin_freqs;
    let m = &spec.magnitudes;
    let w = &spec.pmf;

    let centroid: f64 = f.iter().zip(w).map(|(f, w)| f * w).sum();
    let moment = |p: i32| -> f64 { f.iter().zip(w).map(|(f, w)| (f - centroid).powi(p) * w).sum() };
    let spread = moment(2).sqrt();
    let (spec_skewness, spec_kurtosis) = if spread > 0.0 {
        (moment(3) / spread.powi(3), moment(4) / spread.powi(4))
    } else {
        (0.0, 0.0)
    };

    let entropy = -w
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>();

    let n = m.len() as f64;
    let arith = m.iter().sum::<f64>() / n;
    let flatness = if m.iter().all(|&v| v == m[0]) {
        1.0
    } else if m.iter().any(|&v| v == 0.0) {
        0.0
    } else {
        let geo = (m.iter().map(|v| v.ln()).sum::<f64>() / n).exp();
        (geo / arith).min(1.0)
    };

    let brightness = f
        .iter()
        .zip(m)
        .filter(|(f, _)| **f >= BRIGHTNESS_CUTOFF_HZ)
        .map(|(_, m)| m)
        .sum();

    let total = spec.total();
    let mut cumulative = 0.0;
    let mut rolloff = f[f.len() - 1];
    for (fi, mi) in f.iter().zip(m) {
        cumulative += mi;
        if cumulative >= ROLLOFF_FRACTION * total {
            rolloff = *fi;
            break;
        }
    }

    let peaks = spectral_peaks(m);

    let roughness = if peaks.len() < 2 {
        0.0
    } else {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for (i, &p) in peaks.iter().enumerate() {
            for &q in &peaks[i + 1..] {
                sum += dissonance(f[p], m[p], f[q], m[q]);
                pairs += 1;
            }
        }
        sum / pairs as f64
    };

    let irregularity = if peaks.is_empty() {
        0.0
    } else {
        let amps: Vec<f64> = peaks.iter().map(|&p| m[p]).collect();
        let num: f64 = amps
            .iter()
            .enumerate()
            .map(|(i, a)| (a - amps.get(i + 1).copied().unwrap_or(0.0)).powi(2))
            .sum();
        num / amps.iter().map(|a| a * a).sum::<f64>()
    };

    let spec_rms = (m.iter().map(|v| v * v).sum::<f64>() / n).sqrt();

    let df = spec.bin_width();
    let (attack_time, attack_slope) = if peaks.is_empty() {
        (0.0, 0.0)
    } else {
        let mut time = 0.0;
        let mut slope = 0.0;
        for &p in &peaks {
            let mut j = p;
            while j > 0 && m[j - 1] < m[j] {
                j -= 1;
            }
            let rise = (p - j) as f64 * df;
            time += rise;
            slope += (m[p] - m[j]) / rise;
        }
        (time / peaks.len() as f64, slope / peaks.len() as f64)
    };

    SpectralFeatures {
        centroid,
        spread,
        spec_skewness,
        spec_kurtosis,
        entropy,
        flatness,
        brightness,
        rolloff,
        roughness,
        irregularity,
        spec_rms,
        low_energy_rate,
        flux,
        attack_time,
        attack_slope,
    }
}

fn frame_features(frames: &FrameSeries) -> (f64, f64) {
    let low_energy_rate = if frames.rms.is_empty() {
        0.0
    } else {
        let avg = frames.rms.iter().sum::<f64>() / frames.rms.len() as f64;
        frames.rms.iter().filter(|&&r| r < avg).count() as f64 / frames.rms.len() as f64
    };
    let flux = if frames.power_spectra.len() < 2 {
        0.0
    } else {
        let dists: Vec<f64> = frames
            .power_spectra
            .windows(2)
            .map(|w| {
                let d: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum();
                d.sqrt() / w[0].len() as f64
            })
            .collect();
        dists.iter().sum::<f64>() / dists.len() as f64
    };
    (low_energy_rate, flux)
}

/// One trace's features, in the order given by `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub device_id: String,
    pub session_id: String,
    pub ids: Vec<FeatureId>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, id: FeatureId) -> Option<f64> {
        self.ids.iter().position(|&i| i == id).map(|p| self.values[p])
    }
}

pub fn stream_features(trace: &SensorTrace, kind: StreamKind, rate: f64) -> Result<[f64; 25]> {
    let raw = preprocess::stream(trace, kind);
    let temporal = temporal_features(&raw.values)?;
    let uniform = preprocess::cubic_spline_resample(&raw, kind, rate)?;
    let spec = fft_spectrum(&uniform)?;
    let frames = frame_series(&uniform, FRAME_MS);
    let spectral = spectral_features(&spec, &frames);
    let mut out = [0.0; 25];
    out[..10].copy_from_slice(&temporal.to_array());
    out[10..].copy_from_slice(&spectral.to_array());
    Ok(out)
}

/// Temporal features on the raw series plus spectral features on the series
/// resampled at `rate`, for each requested stream.
pub fn extract(trace: &SensorTrace, streams: &[StreamKind], rate: f64) -> Result<FeatureVector> {
    let ids = feature_ids(streams);
    let mut values = Vec::with_capacity(ids.len());
    for kind in StreamKind::ALL.into_iter().filter(|k| streams.contains(k)) {
        values.extend(stream_features(trace, kind, rate)?);
    }
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "{}/{}: feature {} is not finite",
            trace.device_id(),
            trace.session_id(),
            ids[p]
        )));
    }
    Ok(FeatureVector {
        device_id: trace.device_id().to_string(),
        session_id: trace.session_id().to_string(),
        ids,
        values,
    })
}

/// [`extract`] over many traces on the current rayon pool; output order
/// follows input order.
pub fn extract_all(traces: &[SensorTrace], streams: &[StreamKind], rate: f64) -> Result<Vec<FeatureVector>> {
    traces.par_iter().map(|t| extract(t, streams, rate)).collect()
}

/// CSV with header `device_id,session_id,<feature ids...>`.
pub fn write_feature_csv(rows: &[FeatureVector]) -> Result<Vec<u8>> {
    let ids = match rows.first() {
        Some(r) => &r.ids,
        None => return Err(Error::invalid("no feature rows to write")),
    };
    if rows.iter().any(|r| &r.ids != ids) {
        return Err(Error::invalid("feature rows disagree on feature layout"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["device_id".to_string(), "session_id".to_string()];
    header.extend(ids.iter().map(|i| i.to_string()));
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.device_id.clone(), r.session_id.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    Ok(w.into_inner().expect("in-memory flush"))
}

pub fn read_feature_csv(bytes: &[u8]) -> Result<Vec<FeatureVector>> {
    let parse_err = |e: csv::Error| Error::Parse {
        location: e.position().map(|p| format!("line {}", p.line())).unwrap_or_default(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(parse_err)?.clone();
    if header.len() < 3 || &header[0] != "device_id" || &header[1] != "session_id" {
        return Err(Error::Parse {
            location: "line 1".into(),
            message: "expected header device_id,session_id,<features...>".into(),
        });
    }
    let ids: Vec<FeatureId> = header.iter().skip(2).map(str::parse).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let values = rec
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    location: format!("line {line}"),
                    message: format!("{v:?} is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureVector {
            device_id: rec[0].to_string(),
            session_id: rec[1].to_string(),
            ids: ids.clone(),
            values,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum_at(freqs: &[f64], mags: &[f64]) -> Spectrum {
        Spectrum::from_magnitudes(freqs.to_vec(), mags.to_vec()).unwrap()
    }

    fn no_frames() -> FrameSeries {
        FrameSeries { rms: vec![], power_spectra: vec![] }
    }

    #[test]
    fn constant_temporal() {
        let t = temporal_features(&[9.81; 4]).unwrap();
        assert_eq!(t.mean, 9.81);
        assert_eq!(t.std_dev, 0.0);
        assert_eq!(t.avg_dev, 0.0);
        assert_eq!(t.skewness, 0.0);
        assert_eq!(t.kurtosis, 0.0);
        assert!((t.rms - 9.81).abs() < 1e-12);
        assert_eq!((t.max, t.min), (9.81, 9.81));
        assert_eq!(t.zcr, 0.0);
        assert_eq!(t.nonneg_count, 4.0);
    }

    #[test]
    fn zcr_alternating() {
        // indicators 1,0,1,0: three flips over four samples
        assert_eq!(temporal_features(&[1.0, -1.0, 1.0, -1.0]).unwrap().zcr, 0.75);
        // zero counts as non-positive
        assert_eq!(temporal_features(&[0.0, 0.0, 1.0, 0.0]).unwrap().zcr, 0.5);
    }

    #[test]
    fn two_value_rms() {
        let t = temporal_features(&[3.0, 4.0]).unwrap();
        assert!((t.rms - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((t.rms - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn temporal_rejects_short() {
        assert!(temporal_features(&[1.0]).is_err());
    }

    #[test]
    fn point_mass_spectrum() {
        let freqs: Vec<f64> = (1..=8).map(|k| 50.0 * k as f64).collect();
        let mut mags = vec![0.0; 8];
        mags[1] = 3.0; // 100 Hz
        let s = spectral_features(&spectrum_at(&freqs, &mags), &no_frames());
        assert_eq!(s.centroid, 100.0);
        assert_eq!(s.spread, 0.0);
        assert_eq!(s.entropy, 0.0);
        assert_eq!(s.rolloff, 100.0);
    }

    #[test]
    fn uniform_pmf_entropy() {
        let freqs: Vec<f64> = (1..=8).map(|k| k as f64).collect();
        let s = spectral_features(&spectrum_at(&freqs, &[0.5; 8]), &no_frames());
        assert!((s.entropy - 3.0).abs() < 1e-12);
        assert_eq!(s.flatness, 1.0);
    }

    #[test]
    fn zero_spectrum_sentinels() {
        let spec = spectrum_at(&[1.0, 2.0, 3.0], &[0.0; 3]);
        let sum: f64 = spec.pmf.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let s = spectral_features(&spec, &no_frames());
        let mut expect = SpectralFeatures::default();
        expect.flatness = 1.0;
        assert_eq!(s, expect);
    }

    #[test]
    fn peaks_and_attack() {
        let freqs: Vec<f64> = (1..=7).map(|k| 10.0 * k as f64).collect();
        let mags = [0.0, 1.0, 3.0, 2.0, 2.5, 0.5, 0.01];
        assert_eq!(spectral_peaks(&mags), vec![2, 4]);
        let s = spectral_features(&spectrum_at(&freqs, &mags), &no_frames());
        // peak 2 rises from bin 0 (2 bins), peak 4 from bin 3 (1 bin)
        assert!((s.attack_time - 15.0).abs() < 1e-12);
        let slope = ((3.0 - 0.0) / 20.0 + (2.5 - 2.0) / 10.0) / 2.0;
        assert!((s.attack_slope - slope).abs() < 1e-12);
        let irr = ((3.0f64 - 2.5).powi(2) + 2.5f64.powi(2)) / (9.0 + 6.25);
        assert!((s.irregularity - irr).abs() < 1e-12);
        assert!(s.roughness > 0.0);
    }

    #[test]
    fn pure_tone_peak_location() {
        let rate = 8000.0;
        let values: Vec<f64> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * 50.0 * i as f64 / rate).sin())
            .collect();
        let stream = UniformStream {
            kind: StreamKind::GyroX,
            rate,
            values,
            origin_duration_s: 1.0,
        };
        let spec = fft_spectrum(&stream).unwrap();
        let (argmax, _) = spec
            .magnitudes
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        assert!((spec.bin_freqs[argmax] - 50.0).abs() <= 1.0);
        assert_eq!(*spec.bin_freqs.last().unwrap(), 4000.0);
    }

    #[test]
    fn zero_signal_uniform_pmf() {
        let stream = UniformStream {
            kind: StreamKind::GyroX,
            rate: 100.0,
            values: vec![0.0; 64],
            origin_duration_s: 0.63,
        };
        let spec = fft_spectrum(&stream).unwrap();
        assert!(spec.magnitudes.iter().all(|&m| m == 0.0));
        assert!(spec.pmf.iter().all(|&p| (p - 1.0 / 32.0).abs() < 1e-15));
    }

    #[test]
    fn short_stream_rejected() {
        let stream = UniformStream {
            kind: StreamKind::GyroX,
            rate: 100.0,
            values: vec![0.0; 7],
            origin_duration_s: 0.06,
        };
        assert!(fft_spectrum(&stream).is_err());
    }

    #[test]
    fn feature_id_round_trip() {
        for id in feature_ids(&StreamKind::ALL) {
            assert_eq!(id.to_string().parse::<FeatureId>().unwrap(), id);
        }
        assert_eq!(feature_ids(&StreamKind::ALL).len(), 100);
        assert_eq!(feature_ids(&[StreamKind::GyroZ, StreamKind::AccelMagnitude])[25].stream, StreamKind::GyroZ);
    }

    #[test]
    fn low_energy_and_flux() {
        let frames = FrameSeries {
            rms: vec![1.0, 1.0, 4.0, 2.0],
            power_spectra: vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 4.0]],
        };
        let (ler, flux) = frame_features(&frames);
        // mean rms is 2.0; frames at 1.0 and 1.0 fall below it
        assert_eq!(ler, 0.5);
        // distances 5/2 and 0
        assert_eq!(flux, 1.25);
    }
}
