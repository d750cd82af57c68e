use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sensorprint::calibrate::{self, CalibrationModel, SensorKind};
use sensorprint::classify::{self, ClassifierConfig, ConfusionCounts, EvalOptions, EvalReport, LabeledDataset, SplitRule};
use sensorprint::experiment::{self, ExperimentConfig, Recipe, StreamSet, SynthConfig};
use sensorprint::features::{self, FeatureVector};
use sensorprint::obfuscate::ObfuscationPolicy;
use sensorprint::preprocess::DEFAULT_RATE_HZ;
use sensorprint::selection::{self, FeatureRanking};
use sensorprint::synth::{self, AccelCalibrationPlan, GyroCalibrationPlan};
use sensorprint::trace::{self, AudioMode, Placement, SensorTrace, TraceFormat};
use sensorprint::{Error, Result};

const POLICY_FILE: &str = "policy.json";

#[derive(Parser)]
#[command(name = "sensorprint", version, about = "Motion-sensor device fingerprinting toolkit")]
struct Cli {
    /// JSON config for the subcommand; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bound the worker pool to N threads.
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic device fleet and its recording sessions.
    Synth(SynthArgs),
    /// Validate trace files and rewrite them in a normalized form.
    Ingest(IngestArgs),
    /// Extract features from a directory of traces into a CSV.
    Featurize(FeaturizeArgs),
    /// Rank features by greedy joint mutual information.
    Select(SelectArgs),
    /// Train on one feature CSV and predict the devices of another.
    Train(TrainArgs),
    /// Repeated random-split evaluation of a feature CSV.
    Evaluate(EvaluateArgs),
    /// Estimate or apply calibration models.
    #[command(subcommand)]
    Calibrate(CalibrateCommand),
    /// Obfuscate a directory of traces.
    Obfuscate(ObfuscateArgs),
    /// Run an experiment recipe end to end.
    Recipe(RecipeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    sessions_per_device: Option<usize>,
    #[arg(long, value_name = "desk|hand")]
    scenario: Option<Placement>,
    #[arg(long, value_name = "none|sine20k|song")]
    audio: Option<AudioMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "json")]
    format: TraceFormat,
    /// Also write accelerometer and gyroscope calibration sessions per device.
    #[arg(long)]
    with_calibration: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// A trace file or a directory of them.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: TraceFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct FeaturizeConfig {
    rate_hz: f64,
    streams: StreamSet,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig { rate_hz: DEFAULT_RATE_HZ, streams: StreamSet::Both }
    }
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resampling rate for spectral features, Hz.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_name = "accel|gyro|both")]
    streams: Option<StreamSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct SelectConfig {
    top_k: usize,
    bins: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig { top_k: 100, bins: selection::DEFAULT_BINS }
    }
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ClassifierKind {
    Bagged,
    Knn,
    Gnb,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bagged" => Ok(ClassifierKind::Bagged),
            "knn" => Ok(ClassifierKind::Knn),
            "gnb" => Ok(ClassifierKind::Gnb),
            other => Err(Error::InvalidArgument(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
struct ModelConfig {
    classifier: ClassifierConfig,
    eval: EvalOptions,
    /// `<ranking.json>:<k>` restricts the features to a ranking's top k.
    features: Option<String>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_name = "bagged|knn|gnb")]
    classifier: Option<ClassifierKind>,
    /// Trees in the bagged ensemble.
    #[arg(long)]
    trees: Option<usize>,
    /// Neighbours for k-NN.
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to the top k features of a ranking: `<ranking.json>:<k>`.
    #[arg(long = "select", value_name = "RANKING:K")]
    select: Option<String>,
}

impl ModelArgs {
    fn apply(&self, c: &mut ModelConfig) {
        if let Some(kind) = self.classifier {
            c.classifier = match kind {
                ClassifierKind::Bagged => match c.classifier {
                    ClassifierConfig::Bagged(b) => ClassifierConfig::Bagged(b),
                    _ => ClassifierConfig::default(),
                },
                ClassifierKind::Knn => ClassifierConfig::Knn { k: 1 },
                ClassifierKind::Gnb => ClassifierConfig::Gnb,
            };
        }
        match &mut c.classifier {
            ClassifierConfig::Bagged(b) => {
                if let Some(t) = self.trees {
                    b.n_trees = t;
                }
            }
            ClassifierConfig::Knn { k } => {
                if let Some(n) = self.neighbors {
                    *k = n;
                }
            }
            ClassifierConfig::Gnb => {}
        }
        if let Some(s) = self.seed {
            c.eval.seed = s;
        }
        if let Some(f) = &self.select {
            c.features = Some(f.clone());
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training feature CSV.
    #[arg(long)]
    features: PathBuf,
    /// Feature CSV whose rows are to be identified.
    #[arg(long)]
    predict: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Predictions CSV; a report JSON is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    reps: Option<usize>,
    /// Fraction of each device's rows used for training.
    #[arg(long, conflicts_with = "train_per_class")]
    train_ratio: Option<f64>,
    /// Exact number of training rows per device.
    #[arg(long)]
    train_per_class: Option<usize>,
    /// Report JSON; the CSV row is printed to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CalibrateCommand {
    /// Estimate offset and gain from a calibration session directory.
    Estimate {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correct a trace with one or more models.
    Apply {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ObfuscateArgs {
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    inject_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: TraceFormat,
}

#[derive(Args)]
struct RecipeArgs {
    /// Recipe name; overrides the config's.
    name: Option<Recipe>,
    /// Read traces from this directory instead of synthesizing them.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Ground-truth fleet file for `--in` traces.
    #[arg(long)]
    fleet: Option<PathBuf>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    sessions_per_device: Option<usize>,
    #[arg(long)]
    synth_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', value_name = "SET,...")]
    streams: Option<Vec<StreamSet>>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    inject_prob: Option<f64>,
    #[arg(long)]
    obfuscation_seed: Option<u64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        location: format!("{}: line {}, column {}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| io_err(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| io_err(p, e)),
        _ => Ok(()),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn config_or_default<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map(read_json).transpose().map(Option::unwrap_or_default)
}

fn trace_file_name(t: &SensorTrace, format: TraceFormat) -> String {
    let ext = match format {
        TraceFormat::Json => "json",
        TraceFormat::Csv => "csv",
    };
    format!("{}_{}.{ext}", t.device_id(), t.session_id())
}

fn save_traces(traces: &[SensorTrace], dir: &Path, format: TraceFormat) -> Result<()> {
    create_dir(dir)?;
    for t in traces {
        trace::save_trace(t, &dir.join(trace_file_name(t, format)), format)?;
    }
    Ok(())
}

fn load_traces(path: &Path) -> Result<Vec<SensorTrace>> {
    if path.is_dir() {
        let traces = trace::load_dir(path, &[experiment::FLEET_FILE, POLICY_FILE])?;
        if traces.is_empty() {
            return Err(Error::Validation(format!("no trace files in {}", path.display())));
        }
        Ok(traces)
    } else {
        Ok(vec![trace::load_trace(path)?])
    }
}

fn load_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    features::read_feature_csv(&bytes)
}

/// Applies `<ranking.json>:<k>` to a dataset.
fn restrict(data: LabeledDataset, spec: &Option<String>) -> Result<LabeledDataset> {
    let Some(spec) = spec else { return Ok(data) };
    let (path, k) = spec
        .rsplit_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("--select {spec:?} is not <ranking.json>:<k>")))?;
    let k: usize = k
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("--select: {k:?} is not a count")))?;
    let ranking: FeatureRanking = read_json(Path::new(path))?;
    if k == 0 || k > ranking.features.len() {
        return Err(Error::InvalidArgument(format!("--select: k = {k} outside 1..={}", ranking.features.len())));
    }
    data.select(&ranking.top(k))
}

fn cmd_synth(args: SynthArgs, config: &Option<PathBuf>) -> Result<()> {
    let mut c: SynthConfig = config_or_default(config)?;
    if let Some(n) = args.devices {
        c.devices = n;
    }
    if let Some(n) = args.sessions_per_device {
        c.sessions.sessions_per_device = n;
    }
    if let Some(p) = args.scenario {
        c.sessions.scenario.placement = p;
    }
    if let Some(a) = args.audio {
        c.sessions.scenario.audio_mode = a;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    let corpus = experiment::load_corpus(&experiment::DataSource::Synthetic(c.clone()))?;
    let profiles = corpus.profiles.expect("synthetic corpus has profiles");
    save_traces(&corpus.traces, &args.out, args.format)?;
    write_json(&args.out.join(experiment::FLEET_FILE), &profiles)?;
    if args.with_calibration {
        let root = args.out.join("calibration");
        for p in &profiles {
            let seed = sensorprint::rng::derive_str(c.seed, &[&p.device_id, "calibration"]);
            let accel = synth::simulate_accel_calibration(p, &AccelCalibrationPlan::default(), seed)?;
            let gyro = synth::simulate_gyro_calibration(p, &GyroCalibrationPlan::realistic(), seed)?;
            calibrate::save_session(&accel, &root.join(&p.device_id).join("accel"))?;
            calibrate::save_session(&gyro, &root.join(&p.device_id).join("gyro"))?;
        }
    }
    println!("wrote {} traces of {} devices to {}", corpus.traces.len(), profiles.len(), args.out.display());
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let traces = load_traces(&args.input)?;
    save_traces(&traces, &args.out, args.format)?;
    let mut devices: Vec<&str> = traces.iter().map(|t| t.device_id()).collect();
    devices.sort_unstable();
    devices.dedup();
    println!("ingested {} traces of {} devices", traces.len(), devices.len());
    Ok(())
}

fn cmd_featurize(args: FeaturizeArgs, config: &Option<PathBuf>) -> Result<()> {
    let mut c: FeaturizeConfig = config_or_default(config)?;
    if let Some(r) = args.rate {
        c.rate_hz = r;
    }
    if let Some(s) = args.streams {
        c.streams = s;
    }
    if !(c.rate_hz > 0.0 && c.rate_hz.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {}", c.rate_hz)));
    }
    let traces = load_traces(&args.input)?;
    let rows = features::extract_all(&traces, c.streams.streams(), c.rate_hz)?;
    write_bytes(&args.out, &features::write_feature_csv(&rows)?)?;
    println!("wrote {} feature rows of {} features", rows.len(), rows[0].ids.len());
    Ok(())
}

fn cmd_select(args: SelectArgs, config: &Option<PathBuf>) -> Result<()> {
    let mut c: SelectConfig = config_or_default(config)?;
    if let Some(k) = args.top_k {
        c.top_k = k;
    }
    if let Some(b) = args.bins {
        c.bins = b;
    }
    let data = LabeledDataset::from_vectors(&load_features(&args.features)?)?;
    let ranking = selection::jmi_rank(&data, c.bins, c.top_k)?;
    write_json(&args.out, &ranking)?;
    for r in ranking.features.iter().take(10) {
        println!("{}\t{:.6}", r.feature, r.score);
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictionReport {
    classifier: String,
    n_train: usize,
    n_predicted: usize,
    /// Rows whose device appears in training, scored against their labels.
    n_scored: usize,
    avg_precision: Option<f64>,
    avg_recall: Option<f64>,
    avg_f: Option<f64>,
}

fn cmd_train(args: TrainArgs, config: &Option<PathBuf>) -> Result<()> {
    let mut c: ModelConfig = config_or_default(config)?;
    args.model.apply(&mut c);
    let train = restrict(LabeledDataset::from_vectors(&load_features(&args.features)?)?, &c.features)?;
    let queries = load_features(&args.predict)?;
    let model = classify::train(&train, &c.classifier, c.eval.seed)?;
    let mut csv = String::from("device_id,session_id,predicted\n");
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for q in &queries {
        let row = train
            .feature_ids
            .iter()
            .map(|&id| q.get(id).ok_or_else(|| Error::Validation(format!("feature {id} missing from {}", args.predict.display()))))
            .collect::<Result<Vec<f64>>>()?;
        let p = model.predict(&row);
        csv += &format!("{},{},{}\n", q.device_id, q.session_id, train.classes[p]);
        if let Some(t) = train.classes.iter().position(|c| *c == q.device_id) {
            truth.push(t);
            predicted.push(p);
        }
    }
    write_bytes(&args.out, csv.as_bytes())?;
    let metrics = (!truth.is_empty())
        .then(|| ConfusionCounts::from_predictions(train.n_classes(), &truth, &predicted).metrics());
    let report = PredictionReport {
        classifier: c.classifier.name().to_string(),
        n_train: train.len(),
        n_predicted: queries.len(),
        n_scored: truth.len(),
        avg_precision: metrics.as_ref().map(|m| m.avg_precision),
        avg_recall: metrics.as_ref().map(|m| m.avg_recall),
        avg_f: metrics.as_ref().map(|m| m.avg_f),
    };
    write_json(&args.out.with_extension("report.json"), &report)?;
    match report.avg_f {
        Some(f) => println!("predicted {} rows; AvgF {f:.4} over {} scored", report.n_predicted, report.n_scored),
        None => println!("predicted {} rows", report.n_predicted),
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, config: &Option<PathBuf>) -> Result<()> {
    let mut c: ModelConfig = config_or_default(config)?;
    args.model.apply(&mut c);
    if let Some(r) = args.reps {
        c.eval.repetitions = r;
    }
    if let Some(f) = args.train_ratio {
        c.eval.split = SplitRule::Fraction(f);
    }
    if let Some(k) = args.train_per_class {
        c.eval.split = SplitRule::PerClass(k);
    }
    let data = restrict(LabeledDataset::from_vectors(&load_features(&args.features)?)?, &c.features)?;
    let report = classify::evaluate(&data, &c.classifier, c.eval)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!("{}", EvalReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}

fn cmd_calibrate(command: CalibrateCommand) -> Result<()> {
    match command {
        CalibrateCommand::Estimate { session, out } => {
            let model = calibrate::estimate(&calibrate::load_session(&session)?)?;
            let json = serde_json::to_string_pretty(&model)?;
            match out {
                Some(path) => write_bytes(&path, json.as_bytes())?,
                None => println!("{json}"),
            }
        }
        CalibrateCommand::Apply { models, input, out } => {
            let models = models.iter().map(|p| read_json(p)).collect::<Result<Vec<CalibrationModel>>>()?;
            for sensor in [SensorKind::Accel, SensorKind::Gyro] {
                if models.iter().filter(|m| m.sensor == sensor).count() > 1 {
                    return Err(Error::InvalidArgument(format!("more than one {sensor} model given")));
                }
            }
            let corrected = calibrate::apply_calibration(&trace::load_trace(&input)?, &models)?;
            let format = TraceFormat::from_path(&out).unwrap_or(TraceFormat::Json);
            ensure_parent(&out)?;
            trace::save_trace(&corrected, &out, format)?;
        }
    }
    Ok(())
}

fn cmd_obfuscate(args: ObfuscateArgs, config: &Option<PathBuf>) -> Result<()> {
    let mut policy: ObfuscationPolicy = config_or_default(config)?;
    if let Some(s) = args.scale {
        policy.range_scale = s;
    }
    if let Some(p) = args.inject_prob {
        policy.injection_prob = p;
    }
    if let Some(s) = args.seed {
        policy.seed = s;
    }
    policy.validate()?;
    let traces = load_traces(&args.input)?;
    let out = experiment::obfuscate_all(&traces, &policy)?;
    save_traces(&out, &args.out, args.format)?;
    write_json(&args.out.join(POLICY_FILE), &policy)?;
    println!("obfuscated {} traces", out.len());
    Ok(())
}

fn cmd_recipe(args: RecipeArgs, config: &Option<PathBuf>, parallel: Option<usize>) -> Result<()> {
    let mut c: ExperimentConfig = config_or_default(config)?;
    if let Some(r) = args.name {
        c.recipe = r;
    }
    if let Some(dir) = args.input {
        c.source = experiment::DataSource::Traces { dir, fleet: args.fleet };
    } else if let experiment::DataSource::Synthetic(s) = &mut c.source {
        if let Some(n) = args.devices {
            s.devices = n;
        }
        if let Some(n) = args.sessions_per_device {
            s.sessions.sessions_per_device = n;
        }
        if let Some(seed) = args.synth_seed {
            s.seed = seed;
        }
    }
    if let Some(s) = args.streams {
        c.streams = s;
    }
    let mut model = ModelConfig { classifier: c.classifier, eval: c.eval, features: None };
    args.model.apply(&mut model);
    c.classifier = model.classifier;
    c.eval = model.eval;
    if model.features.is_some() {
        return Err(Error::InvalidArgument("recipes select features with --top-k, not --select".into()));
    }
    if let Some(r) = args.reps {
        c.eval.repetitions = r;
    }
    if let Some(k) = args.top_k {
        c.selection.top_k = Some(k);
    }
    if let Some(s) = args.scale {
        c.obfuscation.range_scale = s;
    }
    if let Some(p) = args.inject_prob {
        c.obfuscation.injection_prob = p;
    }
    if let Some(s) = args.obfuscation_seed {
        c.obfuscation.seed = s;
    }
    if let Some(r) = args.rate {
        c.rate_hz = r;
    }
    if let Some(o) = args.out {
        c.output = o;
    }
    if parallel.is_some() {
        c.parallel = parallel;
    }
    let (report, _) = experiment::run_recipe(&c)?;
    for e in &report.entries {
        let x = e.x.map(|x| format!(" x={x}")).unwrap_or_default();
        println!("{} {}{x}: AvgF {:.4} ± {:.4}", e.condition, e.streams, e.avg_f, e.avg_f_ci95);
    }
    println!("reports in {}", c.output.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.parallel {
        if n == 0 {
            return Err(Error::InvalidArgument("--parallel must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("cannot size the worker pool: {e}")))?;
    }
    let config = &cli.config;
    match cli.command {
        Command::Synth(a) => cmd_synth(a, config),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Featurize(a) => cmd_featurize(a, config),
        Command::Select(a) => cmd_select(a, config),
        Command::Train(a) => cmd_train(a, config),
        Command::Evaluate(a) => cmd_evaluate(a, config),
        Command::Calibrate(c) => cmd_calibrate(c),
        Command::Obfuscate(a) => cmd_obfuscate(a, config),
        Command::Recipe(a) => cmd_recipe(a, config, cli.parallel),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
