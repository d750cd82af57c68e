//! Experiment recipes: end-to-end runs from traces (synthetic or on disk) to
//! evaluation reports, sweep curves and a reproducibility manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{self, CalibrationModel, SensorKind};
use crate::classify::{self, ClassifierConfig, EvalOptions, EvalReport, LabeledDataset, SplitRule};
use crate::error::{Error, Result};
use crate::features::{self, FeatureVector};
use crate::obfuscate::{self, ObfuscationPolicy};
use crate::preprocess::{StreamKind, DEFAULT_RATE_HZ};
use crate::rng;
use crate::selection::{self, FeatureRanking};
use crate::synth::{self, AccelCalibrationPlan, DeviceProfile, FleetSpec, GyroCalibrationPlan, SessionPlan};
use crate::trace::{self, SensorTrace};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RANKING_FILE: &str = "ranking.json";
pub const FLEET_FILE: &str = "fleet.json";

/// Which sensor streams feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamSet {
    Accel,
    Gyro,
    Both,
}

impl StreamSet {
    pub const ALL: [StreamSet; 3] = [StreamSet::Accel, StreamSet::Gyro, StreamSet::Both];

    pub fn streams(self) -> &'static [StreamKind] {
        match self {
            StreamSet::Accel => &StreamKind::ACCEL,
            StreamSet::Gyro => &StreamKind::GYRO,
            StreamSet::Both => &StreamKind::ALL,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamSet::Accel => "accel",
            StreamSet::Gyro => "gyro",
            StreamSet::Both => "both",
        }
    }
}

impl fmt::Display for StreamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamSet::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stream set {s:?} (accel, gyro, both)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    Baseline,
    Calibration,
    Obfuscation,
    RangeSweep,
    InjectionSweep,
    VaryDevices,
    VaryTrainRatio,
    FeatureSweep,
}

impl Recipe {
    pub const ALL: [Recipe; 8] = [
        Recipe::Baseline,
        Recipe::Calibration,
        Recipe::Obfuscation,
        Recipe::RangeSweep,
        Recipe::InjectionSweep,
        Recipe::VaryDevices,
        Recipe::VaryTrainRatio,
        Recipe::FeatureSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::Baseline => "baseline",
            Recipe::Calibration => "calibration",
            Recipe::Obfuscation => "obfuscation",
            Recipe::RangeSweep => "range-sweep",
            Recipe::InjectionSweep => "injection-sweep",
            Recipe::VaryDevices => "vary-devices",
            Recipe::VaryTrainRatio => "vary-train-ratio",
            Recipe::FeatureSweep => "feature-sweep",
        }
    }

    /// Name of the swept variable, for curve recipes.
    pub fn x_name(self) -> Option<&'static str> {
        match self {
            Recipe::RangeSweep => Some("range_scale"),
            Recipe::InjectionSweep => Some("injection_prob"),
            Recipe::VaryDevices => Some("devices"),
            Recipe::VaryTrainRatio => Some("train_ratio"),
            Recipe::FeatureSweep => Some("top_k"),
            _ => None,
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Recipe::ALL.iter().map(|r| r.as_str()).collect();
            Error::invalid(format!("unknown recipe {s:?} (one of {})", names.join(", ")))
        })
    }
}

/// A synthetic fleet and its recording sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub devices: usize,
    pub seed: u64,
    pub fleet: FleetSpec,
    pub sessions: SessionPlan,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { devices: 30, seed: 1, fleet: FleetSpec::default(), sessions: SessionPlan::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthConfig),
    /// Trace files in `dir`; `fleet` optionally names a ground-truth profile
    /// file as written by the synthesizer.
    Traces {
        dir: PathBuf,
        #[serde(default)]
        fleet: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SynthConfig::default())
    }
}

/// How a sensor's calibration model is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    /// Leave the sensor uncorrected.
    None,
    /// The device's true offset and gain (needs ground-truth profiles).
    Truth,
    /// Estimate from simulated calibration sessions of each profile.
    Simulated,
    /// Read `<models_dir>/<device_id>/<sensor>.json`.
    Models,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub accel: CalibrationMethod,
    pub gyro: CalibrationMethod,
    pub accel_plan: AccelCalibrationPlan,
    pub gyro_plan: GyroCalibrationPlan,
    pub models_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            accel: CalibrationMethod::Truth,
            gyro: CalibrationMethod::Simulated,
            accel_plan: AccelCalibrationPlan::default(),
            gyro_plan: GyroCalibrationPlan::realistic(),
            models_dir: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub bins: usize,
    /// Restrict every evaluation to the top-k JMI features of its stream set.
    pub top_k: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { bins: selection::DEFAULT_BINS, top_k: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub range_scales: Vec<f64>,
    pub injection_probs: Vec<f64>,
    pub injection_scale: f64,
    pub device_counts: Vec<usize>,
    pub device_subsets: usize,
    pub train_ratios: Vec<f64>,
    pub top_ks: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            range_scales: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            injection_probs: (0..=10).map(|i| i as f64 / 10.0).collect(),
            injection_scale: 10.0,
            device_counts: vec![5, 10, 15, 20, 25, 30],
            device_subsets: 10,
            train_ratios: (1..=9).map(|i| i as f64 / 10.0).collect(),
            top_ks: vec![1, 2, 5, 10, 15, 20, 25, 30, 40, 50, 60, 70, 80, 90, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub recipe: Recipe,
    pub source: DataSource,
    pub streams: Vec<StreamSet>,
    pub classifier: ClassifierConfig,
    pub eval: EvalOptions,
    pub selection: SelectionConfig,
    pub obfuscation: ObfuscationPolicy,
    pub calibration: CalibrationConfig,
    pub sweep: SweepConfig,
    pub rate_hz: f64,
    pub output: PathBuf,
    /// Worker threads; `None` uses all cores. Does not affect results.
    pub parallel: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            recipe: Recipe::Baseline,
            source: DataSource::default(),
            streams: StreamSet::ALL.to_vec(),
            classifier: ClassifierConfig::default(),
            eval: EvalOptions::default(),
            selection: SelectionConfig::default(),
            obfuscation: ObfuscationPolicy::default(),
            calibration: CalibrationConfig::default(),
            sweep: SweepConfig::default(),
            rate_hz: DEFAULT_RATE_HZ,
            output: PathBuf::from("out"),
            parallel: None,
        }
    }
}

fn check_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::validation(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.streams.is_empty() {
            return Err(Error::invalid("at least one stream set is required"));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::invalid(format!("rate must be positive, got {}", self.rate_hz)));
        }
        if self.eval.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.parallel == Some(0) {
            return Err(Error::invalid("--parallel must be at least 1"));
        }
        self.obfuscation.validate()?;
        match &self.source {
            DataSource::Synthetic(s) => {
                if s.devices < 2 || s.sessions.sessions_per_device < 2 {
                    return Err(Error::invalid("synthetic data needs at least 2 devices and 2 sessions each"));
                }
            }
            DataSource::Traces { dir, fleet } => {
                check_exists(dir, "trace directory")?;
                if let Some(f) = fleet {
                    check_exists(f, "fleet file")?;
                }
            }
        }
        if self.recipe == Recipe::Calibration {
            let uses_models = [self.calibration.accel, self.calibration.gyro].contains(&CalibrationMethod::Models);
            match (&self.calibration.models_dir, uses_models) {
                (None, true) => return Err(Error::invalid("calibration method `models` needs models_dir")),
                (Some(d), true) => check_exists(d, "models directory")?,
                _ => {}
            }
        }
        let sweep = &self.sweep;
        let empty = match self.recipe {
            Recipe::RangeSweep => sweep.range_scales.is_empty(),
            Recipe::InjectionSweep => sweep.injection_probs.is_empty(),
            Recipe::VaryDevices => sweep.device_counts.is_empty() || sweep.device_subsets == 0,
            Recipe::VaryTrainRatio => sweep.train_ratios.is_empty(),
            Recipe::FeatureSweep => sweep.top_ks.is_empty(),
            _ => false,
        };
        if empty {
            return Err(Error::invalid(format!("recipe {} needs a non-empty sweep", self.recipe)));
        }
        Ok(())
    }

    /// Every seed that influences the results, by role.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        if let DataSource::Synthetic(c) = &self.source {
            s.insert("synth".into(), c.seed);
        }
        s.insert("eval".into(), self.eval.seed);
        s.insert("obfuscation".into(), self.obfuscation.seed);
        s.insert("calibration".into(), self.calibration.seed);
        s
    }

    /// SHA-256 of the config's canonical JSON, leaving out the output
    /// directory and thread count, which do not affect results.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { output: PathBuf::new(), parallel: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serialization is infallible");
        hex(&Sha256::digest(&bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Traces plus ground-truth profiles when known.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub traces: Vec<SensorTrace>,
    pub profiles: Option<Vec<DeviceProfile>>,
}

pub fn load_fleet(path: &Path) -> Result<Vec<DeviceProfile>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fleet: Vec<DeviceProfile> = serde_json::from_slice(&bytes)?;
    for p in &fleet {
        p.validate()?;
    }
    Ok(fleet)
}

pub fn load_corpus(source: &DataSource) -> Result<Corpus> {
    match source {
        DataSource::Synthetic(c) => {
            let profiles = synth::generate_fleet_with(c.devices, &c.fleet, c.seed)?;
            let traces = synth::simulate_fleet(&profiles, &c.sessions, c.seed)?;
            Ok(Corpus { traces, profiles: Some(profiles) })
        }
        DataSource::Traces { dir, fleet } => {
            let traces = trace::load_dir(dir, &[FLEET_FILE])?;
            if traces.is_empty() {
                return Err(Error::validation(format!("no traces in {}", dir.display())));
            }
            let profiles = fleet.as_deref().map(load_fleet).transpose()?;
            Ok(Corpus { traces, profiles })
        }
    }
}

/// Features of all four streams for every trace.
pub fn featurize(traces: &[SensorTrace], rate_hz: f64) -> Result<Vec<FeatureVector>> {
    features::extract_all(traces, &StreamKind::ALL, rate_hz)
}

/// The labeled dataset restricted to one stream set's features.
pub fn stream_dataset(vectors: &[FeatureVector], set: StreamSet) -> Result<LabeledDataset> {
    LabeledDataset::from_vectors(vectors)?.select(&features::feature_ids(set.streams()))
}

pub fn obfuscate_all(traces: &[SensorTrace], policy: &ObfuscationPolicy) -> Result<Vec<SensorTrace>> {
    traces.par_iter().map(|t| obfuscate::obfuscate(t, policy)).collect()
}

fn profile_map(corpus: &Corpus) -> Option<BTreeMap<&str, &DeviceProfile>> {
    corpus
        .profiles
        .as_ref()
        .map(|ps| ps.iter().map(|p| (p.device_id.as_str(), p)).collect())
}

fn device_model(
    method: CalibrationMethod,
    sensor: SensorKind,
    device: &str,
    profile: Option<&DeviceProfile>,
    config: &CalibrationConfig,
) -> Result<Option<CalibrationModel>> {
    let need_profile = || {
        profile.ok_or_else(|| Error::validation(format!("no ground-truth profile for device {device}")))
    };
    let seed = rng::derive_str(config.seed, &[device, &sensor.to_string()]);
    Ok(match method {
        CalibrationMethod::None => None,
        CalibrationMethod::Truth => {
            let p = need_profile()?;
            Some(match sensor {
                SensorKind::Accel => p.accel.calibration(sensor),
                SensorKind::Gyro => p.gyro.calibration(sensor),
            })
        }
        CalibrationMethod::Simulated => {
            let p = need_profile()?;
            let session = match sensor {
                SensorKind::Accel => synth::simulate_accel_calibration(p, &config.accel_plan, seed)?,
                SensorKind::Gyro => synth::simulate_gyro_calibration(p, &config.gyro_plan, seed)?,
            };
            Some(calibrate::estimate(&session)?)
        }
        CalibrationMethod::Models => {
            let dir = config.models_dir.as_ref().ok_or_else(|| Error::invalid("models_dir is not set"))?;
            let path = dir.join(device).join(format!("{sensor}.json"));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let model: CalibrationModel = serde_json::from_slice(&bytes)?;
            if model.sensor != sensor {
                return Err(Error::validation(format!("{} holds a {} model", path.display(), model.sensor)));
            }
            Some(model)
        }
    })
}

/// Per-device calibration models for every device in the corpus.
pub fn calibration_models(
    corpus: &Corpus,
    config: &CalibrationConfig,
) -> Result<BTreeMap<String, Vec<CalibrationModel>>> {
    let profiles = profile_map(corpus);
    let mut devices: Vec<&str> = corpus.traces.iter().map(|t| t.device_id()).collect();
    devices.sort_unstable();
    devices.dedup();
    devices
        .par_iter()
        .map(|&d| {
            let profile = profiles.as_ref().and_then(|m| m.get(d).copied());
            let mut models = Vec::new();
            for (method, sensor) in [(config.accel, SensorKind::Accel), (config.gyro, SensorKind::Gyro)] {
                models.extend(device_model(method, sensor, d, profile, config)?);
            }
            Ok((d.to_string(), models))
        })
        .collect()
}

pub fn calibrate_all(
    traces: &[SensorTrace],
    models: &BTreeMap<String, Vec<CalibrationModel>>,
) -> Result<Vec<SensorTrace>> {
    traces
        .par_iter()
        .map(|t| {
            let m = models
                .get(t.device_id())
                .ok_or_else(|| Error::validation(format!("no calibration model for {}", t.device_id())))?;
            calibrate::apply_calibration(t, m)
        })
        .collect()
}

/// One evaluated condition. Curve recipes set `x`; `reports` holds one report
/// per device subset for `vary-devices` and exactly one otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub condition: String,
    pub streams: StreamSet,
    pub x: Option<f64>,
    pub avg_f: f64,
    pub avg_f_ci95: f64,
    pub reports: Vec<EvalReport>,
}

impl ResultEntry {
    fn single(condition: &str, streams: StreamSet, x: Option<f64>, report: EvalReport) -> Self {
        ResultEntry {
            condition: condition.to_string(),
            streams,
            x,
            avg_f: report.avg_f,
            avg_f_ci95: report.avg_f_ci95,
            reports: vec![report],
        }
    }

    /// Mean over reports, with a normal 95% half-width across them.
    fn pooled(condition: &str, streams: StreamSet, x: Option<f64>, reports: Vec<EvalReport>) -> Self {
        let n = reports.len() as f64;
        let mean = reports.iter().map(|r| r.avg_f).sum::<f64>() / n;
        let ci = if reports.len() > 1 {
            let var = reports.iter().map(|r| (r.avg_f - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        } else {
            reports[0].avg_f_ci95
        };
        ResultEntry { condition: condition.to_string(), streams, x, avg_f: mean, avg_f_ci95: ci, reports }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeReport {
    pub recipe: Recipe,
    pub config_sha256: String,
    pub n_traces: usize,
    pub n_devices: usize,
    pub entries: Vec<ResultEntry>,
    /// Feature rankings per stream set, when selection was used.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub rankings: BTreeMap<StreamSet, FeatureRanking>,
}

impl RecipeReport {
    pub fn find(&self, condition: &str, streams: StreamSet) -> Option<&ResultEntry> {
        self.entries.iter().find(|e| e.condition == condition && e.streams == streams)
    }

    /// Entries of one stream set that carry an x value, in sweep order.
    pub fn curve(&self, streams: StreamSet) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .filter(|e| e.streams == streams)
            .filter_map(|e| e.x.map(|x| (x, e.avg_f)))
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("condition,streams,x,{}\n", EvalReport::CSV_HEADER);
        for e in &self.entries {
            for r in &e.reports {
                let x = e.x.map(|x| x.to_string()).unwrap_or_default();
                out += &format!("{},{},{x},{}\n", e.condition, e.streams, r.csv_row());
            }
        }
        out
    }

    pub fn curve_csv(&self) -> Option<String> {
        let x_name = self.recipe.x_name()?;
        let mut out = format!("{x_name},streams,avg_f,avg_f_ci95\n");
        for e in self.entries.iter().filter(|e| e.x.is_some()) {
            out += &format!("{},{},{},{}\n", e.x.unwrap(), e.streams, e.avg_f, e.avg_f_ci95);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub recipe: Recipe,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub created_unix_s: u64,
    pub report_sha256: String,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

/// Datasets per stream set, optionally cut to the top-k JMI features.
struct Prepared {
    sets: Vec<(StreamSet, LabeledDataset)>,
    rankings: BTreeMap<StreamSet, FeatureRanking>,
}

fn prepare(vectors: &[FeatureVector], config: &ExperimentConfig) -> Result<Prepared> {
    let mut sets = Vec::new();
    let mut rankings = BTreeMap::new();
    for &s in &config.streams {
        let mut data = stream_dataset(vectors, s)?;
        if let Some(k) = config.selection.top_k {
            let ranking = selection::jmi_rank(&data, config.selection.bins, k)?;
            data = data.select(&ranking.top(k))?;
            rankings.insert(s, ranking);
        }
        sets.push((s, data));
    }
    Ok(Prepared { sets, rankings })
}

fn evaluate_sets(
    traces: &[SensorTrace],
    config: &ExperimentConfig,
    condition: &str,
    x: Option<f64>,
    entries: &mut Vec<ResultEntry>,
    rankings: &mut BTreeMap<StreamSet, FeatureRanking>,
) -> Result<()> {
    let vectors = featurize(traces, config.rate_hz)?;
    let prepared = prepare(&vectors, config)?;
    for (s, data) in prepared.sets {
        let report = classify::evaluate(&data, &config.classifier, config.eval)?;
        entries.push(ResultEntry::single(condition, s, x, report));
    }
    // rankings from the unmodified data are the ones worth reporting
    if rankings.is_empty() {
        *rankings = prepared.rankings;
    }
    Ok(())
}

fn policy_with(base: &ObfuscationPolicy, scale: f64, prob: f64) -> ObfuscationPolicy {
    ObfuscationPolicy { range_scale: scale, injection_prob: prob, ..base.clone() }
}

/// Random device subsets of size `n`, reproducible from `(seed, n, j)`.
pub fn device_subsets(classes: &[String], n: usize, count: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if n < 2 || n > classes.len() {
        return Err(Error::invalid(format!("device count {n} outside 2..={}", classes.len())));
    }
    Ok((0..count)
        .map(|j| {
            let mut r = rng::rng(rng::derive(seed, &[n as u64, j as u64]));
            let mut idx = sample(&mut r, classes.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| classes[i].clone()).collect()
        })
        .collect())
}

fn run_entries(config: &ExperimentConfig, corpus: &Corpus) -> Result<RecipeReport> {
    let mut entries = Vec::new();
    let mut rankings = BTreeMap::new();
    let traces = &corpus.traces;
    let sweep = &config.sweep;
    match config.recipe {
        Recipe::Baseline => evaluate_sets(traces, config, "baseline", None, &mut entries, &mut rankings)?,
        Recipe::Calibration => {
            evaluate_sets(traces, config, "raw", None, &mut entries, &mut rankings)?;
            let models = calibration_models(corpus, &config.calibration)?;
            let corrected = calibrate_all(traces, &models)?;
            evaluate_sets(&corrected, config, "calibrated", None, &mut entries, &mut rankings)?;
        }
        Recipe::Obfuscation => {
            evaluate_sets(traces, config, "raw", None, &mut entries, &mut rankings)?;
            let ob = obfuscate_all(traces, &config.obfuscation)?;
            evaluate_sets(&ob, config, "obfuscated", None, &mut entries, &mut rankings)?;
        }
        Recipe::RangeSweep => {
            for &scale in &sweep.range_scales {
                let policy = policy_with(&config.obfuscation, scale, config.obfuscation.injection_prob);
                let ob = obfuscate_all(traces, &policy)?;
                evaluate_sets(&ob, config, "obfuscated", Some(scale), &mut entries, &mut rankings)?;
            }
        }
        Recipe::InjectionSweep => {
            for &p in &sweep.injection_probs {
                let policy = policy_with(&config.obfuscation, sweep.injection_scale, p);
                let ob = obfuscate_all(traces, &policy)?;
                evaluate_sets(&ob, config, "injected", Some(p), &mut entries, &mut rankings)?;
            }
        }
        Recipe::VaryDevices => {
            let vectors = featurize(traces, config.rate_hz)?;
            let prepared = prepare(&vectors, config)?;
            rankings = prepared.rankings;
            for (s, data) in &prepared.sets {
                for &n in &sweep.device_counts {
                    let subsets = device_subsets(&data.classes, n, sweep.device_subsets, config.eval.seed)?;
                    let reports = subsets
                        .iter()
                        .map(|keep| classify::evaluate(&data.restrict_classes(keep)?, &config.classifier, config.eval))
                        .collect::<Result<Vec<_>>>()?;
                    entries.push(ResultEntry::pooled("subset", *s, Some(n as f64), reports));
                }
            }
        }
        Recipe::VaryTrainRatio => {
            let vectors = featurize(traces, config.rate_hz)?;
            let prepared = prepare(&vectors, config)?;
            rankings = prepared.rankings;
            for (s, data) in &prepared.sets {
                for &ratio in &sweep.train_ratios {
                    let opts = EvalOptions { split: SplitRule::Fraction(ratio), ..config.eval };
                    let report = classify::evaluate(data, &config.classifier, opts)?;
                    entries.push(ResultEntry::single("split", *s, Some(ratio), report));
                }
            }
        }
        Recipe::FeatureSweep => {
            let vectors = featurize(traces, config.rate_hz)?;
            for &s in &config.streams {
                let data = stream_dataset(&vectors, s)?;
                let ranking = selection::jmi_rank(&data, config.selection.bins, data.feature_ids.len())?;
                let ks: Vec<usize> = sweep.top_ks.iter().copied().filter(|&k| k <= data.feature_ids.len()).collect();
                let points = selection::sweep_topk(&ranking, &data, &config.classifier, &ks, config.eval)?;
                for p in points {
                    entries.push(ResultEntry::single("top_k", s, Some(p.k as f64), p.report));
                }
                rankings.insert(s, ranking);
            }
        }
    }
    let mut devices: Vec<&str> = traces.iter().map(|t| t.device_id()).collect();
    devices.sort_unstable();
    devices.dedup();
    Ok(RecipeReport {
        recipe: config.recipe,
        config_sha256: config.hash(),
        n_traces: traces.len(),
        n_devices: devices.len(),
        entries,
        rankings,
    })
}

/// Runs a recipe on an already loaded corpus, without writing files.
pub fn run_on(config: &ExperimentConfig, corpus: &Corpus) -> Result<RecipeReport> {
    config.validate()?;
    with_pool(config.parallel, || run_entries(config, corpus))
}

/// Runs `f` on a pool of `threads` workers, or the global pool.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build a pool of {n} threads: {e}")))?
            .install(f),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    files.push(name.to_string());
    Ok(())
}

/// Loads the data, runs the recipe and writes the report, CSVs and manifest
/// into `config.output`.
pub fn run_recipe(config: &ExperimentConfig) -> Result<(RecipeReport, Manifest)> {
    config.validate()?;
    let (report, profiles) = with_pool(config.parallel, || {
        let corpus = load_corpus(&config.source)?;
        Ok((run_entries(config, &corpus)?, corpus.profiles))
    })?;
    let out = &config.output;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    let report_bytes = serde_json::to_vec_pretty(&report)?;
    write_file(out, REPORT_FILE, &report_bytes, &mut files)?;
    write_file(out, SUMMARY_FILE, report.summary_csv().as_bytes(), &mut files)?;
    if let Some(curve) = report.curve_csv() {
        write_file(out, CURVE_FILE, curve.as_bytes(), &mut files)?;
    }
    if !report.rankings.is_empty() {
        write_file(out, RANKING_FILE, &serde_json::to_vec_pretty(&report.rankings)?, &mut files)?;
    }
    if let (DataSource::Synthetic(_), Some(p)) = (&config.source, &profiles) {
        write_file(out, FLEET_FILE, &serde_json::to_vec_pretty(p)?, &mut files)?;
    }
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        recipe: config.recipe,
        config_sha256: config.hash(),
        seeds: config.seeds(),
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        report_sha256: hex(&Sha256::digest(&report_bytes)),
        files,
        config: config.clone(),
    };
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok((report, manifest))
}
