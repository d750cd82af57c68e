use std::path::Path;
use std::process::{Command, Output};

fn sensorprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensorprint")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sensorprint(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    sensorprint(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let traces = d.join("traces");
    ok(&["synth", "--devices", "4", "--sessions-per-device", "4", "--seed", "3", "--with-calibration", "--out", s(&traces)]);
    assert!(traces.join("fleet.json").is_file());
    assert!(traces.join("dev000_s03.json").is_file());

    let accel_model = d.join("accel.json");
    let gyro_model = d.join("gyro.json");
    let cal = traces.join("calibration/dev001");
    ok(&["calibrate", "estimate", "--session", s(&cal.join("accel")), "--out", s(&accel_model)]);
    ok(&["calibrate", "estimate", "--session", s(&cal.join("gyro")), "--out", s(&gyro_model)]);
    let fixed = d.join("fixed.csv");
    ok(&[
        "calibrate", "apply", "--model", s(&accel_model), "--model", s(&gyro_model),
        "--in", s(&traces.join("dev001_s00.json")), "--out", s(&fixed),
    ]);
    assert!(fixed.is_file());
    assert_eq!(code(&["calibrate", "apply", "--model", s(&accel_model), "--model", s(&accel_model),
        "--in", s(&traces.join("dev001_s00.json")), "--out", s(&fixed)]), 2);

    let feats = d.join("features.csv");
    ok(&["featurize", "--in", s(&traces), "--out", s(&feats)]);
    let csv = std::fs::read_to_string(&feats).unwrap();
    assert_eq!(csv.lines().count(), 17);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 102);

    let ranking = d.join("ranking.json");
    ok(&["select", "--features", s(&feats), "--top-k", "12", "--out", s(&ranking)]);
    let sel = format!("{}:5", s(&ranking));
    let eval = ok(&["evaluate", "--features", s(&feats), "--reps", "2", "--train-per-class", "2", "--select", &sel]);
    let row: Vec<&str> = eval.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1..4], ["4", "5", "2"]);
    let f: f64 = row[6].parse().unwrap();
    assert!((0.0..=1.0).contains(&f));

    let preds = d.join("preds.csv");
    ok(&["train", "--features", s(&feats), "--predict", s(&feats), "--classifier", "knn", "--neighbors", "1", "--out", s(&preds)]);
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 17);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("preds.report.json")).unwrap()).unwrap();
    // 1-NN on its own training rows recovers every label
    assert_eq!(report["avg_f"], 1.0);

    let obf = d.join("obf");
    ok(&["obfuscate", "--scale", "10", "--inject-prob", "0.4", "--seed", "1", "--in", s(&traces), "--out", s(&obf), "--format", "csv"]);
    assert!(obf.join("policy.json").is_file());
    let ingested = d.join("ingested");
    let msg = ok(&["ingest", "--in", s(&obf), "--out", s(&ingested)]);
    assert!(msg.contains("16 traces of 4 devices"), "{msg}");
}

#[test]
fn recipe_reports_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["recipe", "baseline", "--devices", "4", "--sessions-per-device", "4", "--reps", "2", "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let a = run("a", &[]);
    let b = run("b", &["--parallel", "1"]);
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a.join("report.json")), read(&b.join("report.json")));
    assert_eq!(read(&a.join("summary.csv")), read(&b.join("summary.csv")));
    let manifest: serde_json::Value = serde_json::from_slice(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["recipe"], "baseline");
    assert!(manifest["config_sha256"].as_str().unwrap().len() == 64);

    let c = run("c", &["--synth-seed", "8"]);
    assert_ne!(read(&a.join("report.json")), read(&c.join("report.json")));
}

#[test]
fn exit_codes_separate_input_from_runtime_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&["recipe", "no-such-recipe"]), 2);
    assert_eq!(code(&["featurize", "--in", s(&d.join("missing")), "--out", s(&d.join("f.csv"))]), 2);
    assert_eq!(code(&["evaluate", "--features", s(&d.join("missing.csv"))]), 3);
    let bad = d.join("bad.json");
    std::fs::write(&bad, br#"{"device_id":"d","session_id":"s","audio_mode":"none","placement":"desk","samples":[[0,1,2]]}"#).unwrap();
    assert_eq!(code(&["featurize", "--in", s(&bad), "--out", s(&d.join("f.csv"))]), 2);
    assert_eq!(code(&["obfuscate", "--scale", "0.5", "--in", s(&bad), "--out", s(&d.join("o"))]), 2);
    assert_eq!(code(&["--parallel", "0", "recipe"]), 2);
}
