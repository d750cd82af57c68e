//! Sensor trace data model and the JSON/CSV trace file formats.
//!
//! JSON (one trace per file):
//!
//! ```text
//! {"device_id": "...", "session_id": "...", "audio_mode": "none"|"sine20k"|"song",
//!  "placement": "desk"|"hand", "samples": [[t_ms, ax, ay, az, gx, gy, gz], ...]}
//! ```
//!
//! CSV: header `t_ms,ax,ay,az,gx,gy,gz`, with the four metadata fields in a
//! sidecar `<name>.meta.json`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["t_ms", "ax", "ay", "az", "gx", "gy", "gz"];

/// One timestamped 6-axis reading. `t` is milliseconds since session start,
/// `accel` is m/s² including gravity, `gyro` is rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

impl Sample {
    pub fn new(t: f64, accel: [f64; 3], gyro: [f64; 3]) -> Self {
        Sample { t, accel, gyro }
    }

    fn from_row(row: [f64; 7]) -> Self {
        Sample {
            t: row[0],
            accel: [row[1], row[2], row[3]],
            gyro: [row[4], row[5], row[6]],
        }
    }

    fn to_row(self) -> [f64; 7] {
        [
            self.t,
            self.accel[0],
            self.accel[1],
            self.accel[2],
            self.gyro[0],
            self.gyro[1],
            self.gyro[2],
        ]
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.accel.iter().all(|v| v.is_finite())
            && self.gyro.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AudioMode {
    #[default]
    None,
    Sine20k,
    Song,
}

impl fmt::Display for AudioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AudioMode::None => "none",
            AudioMode::Sine20k => "sine20k",
            AudioMode::Song => "song",
        })
    }
}

impl FromStr for AudioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AudioMode::None),
            "sine20k" => Ok(AudioMode::Sine20k),
            "song" => Ok(AudioMode::Song),
            other => Err(Error::invalid(format!("unknown audio mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    #[default]
    Desk,
    Hand,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Desk => "desk",
            Placement::Hand => "hand",
        })
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Placement::Desk),
            "hand" => Ok(Placement::Hand),
            other => Err(Error::invalid(format!("unknown placement {other:?}"))),
        }
    }
}

/// Session metadata. Grouping keys only; never used as features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub device_id: String,
    pub session_id: String,
    pub audio_mode: AudioMode,
    pub placement: Placement,
}

impl TraceMeta {
    pub fn new(device_id: impl Into<String>, session_id: impl Into<String>) -> Self {
        TraceMeta {
            device_id: device_id.into(),
            session_id: session_id.into(),
            audio_mode: AudioMode::None,
            placement: Placement::Desk,
        }
    }
}

/// A validated recording session: at least two samples with strictly
/// increasing, finite timestamps and finite channel values.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    meta: TraceMeta,
    samples: Vec<Sample>,
}

impl SensorTrace {
    /// Sorts samples by time, collapses duplicate timestamps (first occurrence
    /// wins) and validates the result.
    pub fn new(meta: TraceMeta, mut samples: Vec<Sample>) -> Result<Self> {
        if let Some((i, _)) = samples.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(Error::validation(format!("sample {i} has a non-finite value")));
        }
        if let Some(s) = samples.iter().find(|s| s.t < 0.0) {
            return Err(Error::validation(format!("negative timestamp {}", s.t)));
        }
        // stable sort keeps file order among equal timestamps
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        samples.dedup_by(|later, earlier| later.t == earlier.t);
        if samples.len() < 2 {
            return Err(Error::validation(format!(
                "trace needs at least 2 distinct timestamps, got {}",
                samples.len()
            )));
        }
        Ok(SensorTrace { meta, samples })
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn device_id(&self) -> &str {
        &self.meta.device_id
    }

    pub fn session_id(&self) -> &str {
        &self.meta.session_id
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Last minus first timestamp, in milliseconds.
    pub fn duration_ms(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Same metadata, new samples (re-validated).
    pub fn with_samples(&self, samples: Vec<Sample>) -> Result<Self> {
        SensorTrace::new(self.meta.clone(), samples)
    }

    pub fn into_parts(self) -> (TraceMeta, Vec<Sample>) {
        (self.meta, self.samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Json,
    Csv,
}

impl TraceFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "json" => Some(TraceFormat::Json),
            "csv" => Some(TraceFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(TraceFormat::Json),
            "csv" => Ok(TraceFormat::Csv),
            other => Err(Error::invalid(format!("unknown trace format {other:?}"))),
        }
    }
}

/// A channel value as written in a trace file. Numeric strings such as
/// `"NaN"` are accepted syntactically so they surface as validation errors.
#[derive(Deserialize)]
#[serde(untagged)]
enum Channel {
    Num(f64),
    Text(String),
}

impl Channel {
    fn value(&self, row: usize) -> Result<f64> {
        match self {
            Channel::Num(v) => Ok(*v),
            Channel::Text(s) => f64::from_str(s.trim()).map_err(|_| Error::Parse {
                location: format!("samples[{row}]"),
                message: format!("{s:?} is not a number"),
            }),
        }
    }
}

#[derive(Deserialize)]
struct JsonTraceIn {
    device_id: String,
    session_id: String,
    audio_mode: AudioMode,
    placement: Placement,
    samples: Vec<Vec<Channel>>,
}

#[derive(Serialize)]
struct JsonTraceOut<'a> {
    device_id: &'a str,
    session_id: &'a str,
    audio_mode: AudioMode,
    placement: Placement,
    samples: Vec<[f64; 7]>,
}

fn json_parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

/// Parses a JSON trace document.
pub fn parse_json(bytes: &[u8]) -> Result<SensorTrace> {
    let raw: JsonTraceIn = serde_json::from_slice(bytes).map_err(json_parse_error)?;
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (i, row) in raw.samples.iter().enumerate() {
        if row.len() != 7 {
            return Err(Error::Parse {
                location: format!("samples[{i}]"),
                message: format!("expected 7 values, found {}", row.len()),
            });
        }
        let mut vals = [0.0; 7];
        for (slot, ch) in vals.iter_mut().zip(row) {
            *slot = ch.value(i)?;
        }
        samples.push(Sample::from_row(vals));
    }
    let meta = TraceMeta {
        device_id: raw.device_id,
        session_id: raw.session_id,
        audio_mode: raw.audio_mode,
        placement: raw.placement,
    };
    SensorTrace::new(meta, samples)
}

/// Parses the metadata sidecar that accompanies a CSV trace.
pub fn parse_meta(bytes: &[u8]) -> Result<TraceMeta> {
    serde_json::from_slice(bytes).map_err(json_parse_error)
}

/// Parses a CSV trace body with its metadata.
pub fn parse_csv(bytes: &[u8], meta: TraceMeta) -> Result<SensorTrace> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            location: "line 1".into(),
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = [0.0; 7];
        for (slot, field) in vals.iter_mut().zip(record.iter()) {
            *slot = f64::from_str(field).map_err(|_| Error::Parse {
                location: format!("line {line}"),
                message: format!("{field:?} is not a number"),
            })?;
        }
        samples.push(Sample::from_row(vals));
    }
    SensorTrace::new(meta, samples)
}

fn csv_error(e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!("line {}", p.line()))
        .unwrap_or_else(|| "unknown".into());
    Error::Parse {
        location,
        message: e.to_string(),
    }
}

pub fn write_json(trace: &SensorTrace) -> Vec<u8> {
    let out = JsonTraceOut {
        device_id: &trace.meta.device_id,
        session_id: &trace.meta.session_id,
        audio_mode: trace.meta.audio_mode,
        placement: trace.meta.placement,
        samples: trace.samples.iter().map(|s| s.to_row()).collect(),
    };
    serde_json::to_vec(&out).expect("trace serialization is infallible")
}

/// Returns the CSV body and its JSON metadata sidecar.
pub fn write_csv(trace: &SensorTrace) -> (Vec<u8>, Vec<u8>) {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("in-memory write");
    for s in &trace.samples {
        // f64 Display is the shortest representation that round-trips exactly
        writer
            .write_record(s.to_row().iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    let body = writer.into_inner().expect("in-memory flush");
    let meta = serde_json::to_vec_pretty(&trace.meta).expect("meta serialization is infallible");
    (body, meta)
}

/// Sidecar path for a CSV trace: `run.csv` → `run.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

/// Loads a trace file, choosing the format from its extension.
pub fn load_trace(path: &Path) -> Result<SensorTrace> {
    let format = TraceFormat::from_path(path)
        .ok_or_else(|| Error::invalid(format!("{}: unknown trace extension", path.display())))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        TraceFormat::Json => parse_json(&bytes),
        TraceFormat::Csv => {
            let meta_path = sidecar_path(path);
            let meta_bytes = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            parse_csv(&bytes, parse_meta(&meta_bytes)?)
        }
    }
    .map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_trace(trace: &SensorTrace, path: &Path, format: TraceFormat) -> Result<()> {
    match format {
        TraceFormat::Json => std::fs::write(path, write_json(trace)).map_err(|e| Error::io(path, e)),
        TraceFormat::Csv => {
            let (body, meta) = write_csv(trace);
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
            let meta_path = sidecar_path(path);
            std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
        }
    }
}

/// Loads every `.json`/`.csv` trace directly inside `dir`, sorted by file
/// name. `*.meta.json` sidecars and any file named in `skip` are ignored.
pub fn load_dir(dir: &Path, skip: &[&str]) -> Result<Vec<SensorTrace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && TraceFormat::from_path(p).is_some())
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            !name.ends_with(".meta.json") && !skip.contains(&name)
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| load_trace(p)).collect()
}
