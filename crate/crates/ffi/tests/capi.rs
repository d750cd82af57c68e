use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sensorprint::calibrate::{self, CalibrationModel, SensorKind};
use sensorprint::features;
use sensorprint::obfuscate::{self, ObfuscationPolicy};
use sensorprint::preprocess::StreamKind;
use sensorprint::synth::{self, Scenario};
use sensorprint::trace;
use sensorprint_ffi::*;

fn sample_json() -> Vec<u8> {
    let fleet = synth::generate_fleet(2, 3).unwrap();
    let t = synth::simulate_trace(&fleet[0], &Scenario::default(), "s00", 7).unwrap();
    trace::write_json(&t)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sp_last_error()) }.to_string_lossy().into_owned()
}

fn load(json: &[u8]) -> *mut SpTrace {
    let mut h = ptr::null_mut();
    let st = unsafe { sp_trace_from_json(json.as_ptr(), json.len(), &mut h) };
    assert_eq!(st, SpStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    h
}

fn to_json(h: *const SpTrace) -> Vec<u8> {
    let mut buf = SpBuffer { data: ptr::null_mut(), len: 0 };
    assert_eq!(unsafe { sp_trace_to_json(h, &mut buf) }, SpStatus::Ok);
    let out = unsafe { std::slice::from_raw_parts(buf.data, buf.len) }.to_vec();
    unsafe { sp_buffer_free(&mut buf) };
    assert!(buf.data.is_null() && buf.len == 0);
    out
}

fn features_of(h: *const SpTrace, mask: u32) -> Vec<f64> {
    let mut n = 0;
    assert_eq!(unsafe { sp_feature_count(mask, &mut n) }, SpStatus::Ok);
    let mut out = vec![0.0; n];
    let mut written = 0;
    let st = unsafe { sp_extract_features(h, mask, 100.0, out.as_mut_ptr(), out.len(), &mut written) };
    assert_eq!(st, SpStatus::Ok, "{}", last_error());
    assert_eq!(written, n);
    out
}

#[test]
fn json_round_trip_matches_core() {
    let json = sample_json();
    let h = load(&json);
    assert_eq!(to_json(h), json);
    let mut n = 0;
    assert_eq!(unsafe { sp_trace_len(h, &mut n) }, SpStatus::Ok);
    assert_eq!(n, trace::parse_json(&json).unwrap().len());
    unsafe { sp_trace_free(h) };
}

#[test]
fn csv_and_samples_constructors_agree_with_json() {
    let json = sample_json();
    let core = trace::parse_json(&json).unwrap();
    let (body, meta) = trace::write_csv(&core);
    let mut h = ptr::null_mut();
    let st = unsafe { sp_trace_from_csv(body.as_ptr(), body.len(), meta.as_ptr(), meta.len(), &mut h) };
    assert_eq!(st, SpStatus::Ok, "{}", last_error());
    assert_eq!(trace::parse_json(&to_json(h)).unwrap(), core);

    let mut rows = vec![0.0; 7 * core.len()];
    let mut written = 0;
    let st = unsafe { sp_trace_samples(h, rows.as_mut_ptr(), rows.len(), &mut written) };
    assert_eq!(st, SpStatus::Ok);
    assert_eq!(written, rows.len());
    unsafe { sp_trace_free(h) };

    let dev = CString::new(core.device_id()).unwrap();
    let sid = CString::new(core.session_id()).unwrap();
    let mut g = ptr::null_mut();
    let st = unsafe { sp_trace_from_samples(dev.as_ptr(), sid.as_ptr(), rows.as_ptr(), core.len(), &mut g) };
    assert_eq!(st, SpStatus::Ok, "{}", last_error());
    let rebuilt = trace::parse_json(&to_json(g)).unwrap();
    assert_eq!(rebuilt.samples(), core.samples());
    unsafe { sp_trace_free(g) };
}

#[test]
fn capture_page_document_survives_pipeline() {
    let mut rows = Vec::new();
    for i in 0..500 {
        let t = i as f64 * 10.0 + if i % 3 == 0 { 0.4 } else { 0.0 };
        let w = (i as f64 * 0.37).sin();
        rows.push(format!(
            "[{t},{},{},{},{},{},{}]",
            0.01 * w,
            -0.02 + 0.005 * w,
            9.79 + 0.01 * w,
            0.002 * w,
            -0.001,
            0.003 * w
        ));
    }
    let doc = format!(
        r#"{{"device_id":"c-8812734410","session_id":"1718000000000","audio_mode":"none","placement":"desk","rotation_unit":"deg/s","user_agent":"Mozilla/5.0","samples":[{}]}}"#,
        rows.join(",")
    );
    let h = load(doc.as_bytes());
    let f = features_of(h, SP_STREAM_ALL);
    assert_eq!(f.len(), 100);
    assert!(f.iter().all(|v| v.is_finite()));
    let mut p = sp_obfuscation_defaults();
    p.seed = 4;
    p.injection_prob = 0.3;
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { sp_obfuscate(h, &p, &mut o) }, SpStatus::Ok, "{}", last_error());
    assert!(features_of(o, SP_STREAM_ALL).iter().all(|v| v.is_finite()));
    unsafe {
        sp_trace_free(o);
        sp_trace_free(h);
    }
}

#[test]
fn features_match_core_for_each_mask() {
    let json = sample_json();
    let core = trace::parse_json(&json).unwrap();
    let h = load(&json);
    for mask in 1..=SP_STREAM_ALL {
        let kinds: Vec<StreamKind> = StreamKind::ALL.into_iter().filter(|k| mask & (1 << k.index()) != 0).collect();
        let want = features::extract(&core, &kinds, 100.0).unwrap();
        assert_eq!(features_of(h, mask), want.values, "mask {mask}");
        let ids = features::feature_ids(&kinds);
        for (i, id) in ids.iter().enumerate() {
            let mut buf = SpBuffer { data: ptr::null_mut(), len: 0 };
            assert_eq!(unsafe { sp_feature_name(mask, i, &mut buf) }, SpStatus::Ok);
            let name = unsafe { CStr::from_ptr(buf.data as *const _) }.to_str().unwrap().to_string();
            assert_eq!(name.len(), buf.len);
            assert_eq!(name, id.to_string());
            unsafe { sp_buffer_free(&mut buf) };
        }
        let mut buf = SpBuffer { data: ptr::null_mut(), len: 0 };
        assert_eq!(unsafe { sp_feature_name(mask, ids.len(), &mut buf) }, SpStatus::InvalidArgument);
    }
    unsafe { sp_trace_free(h) };
}

#[test]
fn obfuscation_matches_core_and_is_seeded() {
    let json = sample_json();
    let core = trace::parse_json(&json).unwrap();
    let h = load(&json);
    let mut p = sp_obfuscation_defaults();
    p.range_scale = 10.0;
    p.injection_prob = 0.4;
    p.seed = 99;
    let policy = ObfuscationPolicy { range_scale: 10.0, injection_prob: 0.4, seed: 99, ..ObfuscationPolicy::default() };
    let want = trace::write_json(&obfuscate::obfuscate(&core, &policy).unwrap());
    for _ in 0..2 {
        let mut o = ptr::null_mut();
        assert_eq!(unsafe { sp_obfuscate(h, &p, &mut o) }, SpStatus::Ok);
        assert_eq!(to_json(o), want);
        unsafe { sp_trace_free(o) };
    }
    p.gain = [1.2, 0.8];
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { sp_obfuscate(h, &p, &mut o) }, SpStatus::InvalidArgument);
    assert!(o.is_null());
    assert!(last_error().contains("gain"));
    unsafe { sp_trace_free(h) };
}

#[test]
fn calibration_inverts_planted_affine() {
    let json = sample_json();
    let core = trace::parse_json(&json).unwrap();
    let h = load(&json);
    let accel = SpCalibration { offset: [0.1, -0.2, 0.3], gain: [1.01, 0.99, 1.02] };
    let gyro = SpCalibration { offset: [0.01, 0.02, -0.01], gain: [1.0, 1.05, 0.97] };
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { sp_calibrate(h, &accel, &gyro, &mut c) }, SpStatus::Ok);
    let got = trace::parse_json(&to_json(c)).unwrap();
    let models = [
        CalibrationModel { sensor: SensorKind::Accel, offset: accel.offset, gain: accel.gain },
        CalibrationModel { sensor: SensorKind::Gyro, offset: gyro.offset, gain: gyro.gain },
    ];
    assert_eq!(got, calibrate::apply_calibration(&core, &models).unwrap());
    for (a, b) in got.samples().iter().zip(core.samples()) {
        for k in 0..3 {
            assert!((a.accel[k] * accel.gain[k] + accel.offset[k] - b.accel[k]).abs() < 1e-12);
            assert!((a.gyro[k] * gyro.gain[k] + gyro.offset[k] - b.gyro[k]).abs() < 1e-12);
        }
    }
    unsafe { sp_trace_free(c) };

    let mut same = ptr::null_mut();
    assert_eq!(unsafe { sp_calibrate(h, ptr::null(), ptr::null(), &mut same) }, SpStatus::Ok);
    assert_eq!(to_json(same), json);
    unsafe { sp_trace_free(same) };

    let zero = SpCalibration { offset: [0.0; 3], gain: [0.0, 1.0, 1.0] };
    let mut bad = ptr::null_mut();
    assert_ne!(unsafe { sp_calibrate(h, &zero, ptr::null(), &mut bad) }, SpStatus::Ok);
    assert!(bad.is_null());
    unsafe { sp_trace_free(h) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut h = ptr::null_mut();
    let junk = b"{not json";
    assert_eq!(unsafe { sp_trace_from_json(junk.as_ptr(), junk.len(), &mut h) }, SpStatus::Parse);
    assert!(h.is_null());
    assert!(last_error().contains("line 1"));

    let nan = br#"{"device_id":"d","session_id":"s","audio_mode":"none","placement":"desk","samples":[[0,0,0,9.8,0,0,0],[5,"NaN",0,9.8,0,0,0]]}"#;
    assert_eq!(unsafe { sp_trace_from_json(nan.as_ptr(), nan.len(), &mut h) }, SpStatus::Validation);

    assert_eq!(unsafe { sp_trace_from_json(ptr::null(), 4, &mut h) }, SpStatus::NullPointer);
    let mut n = 0;
    assert_eq!(unsafe { sp_trace_len(ptr::null(), &mut n) }, SpStatus::NullPointer);
    assert_eq!(unsafe { sp_feature_count(0, &mut n) }, SpStatus::InvalidArgument);
    assert_eq!(unsafe { sp_feature_count(16, &mut n) }, SpStatus::InvalidArgument);

    let json = sample_json();
    let t = load(&json);
    assert_eq!(last_error(), "");
    let mut small = [0.0; 10];
    let mut written = 0;
    let st = unsafe { sp_extract_features(t, SP_STREAM_ALL, 100.0, small.as_mut_ptr(), small.len(), &mut written) };
    assert_eq!(st, SpStatus::BufferTooSmall);
    assert_eq!(written, 4 * SP_FEATURES_PER_STREAM);
    assert!(small.iter().all(|&v| v == 0.0));
    let st = unsafe { sp_extract_features(t, SP_STREAM_GYRO_X, -1.0, small.as_mut_ptr(), 0, &mut written) };
    assert_eq!(st, SpStatus::BufferTooSmall);
    let mut buf = [0.0; 25];
    let st = unsafe { sp_extract_features(t, SP_STREAM_GYRO_X, -1.0, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(st, SpStatus::InvalidArgument, "{}", last_error());
    unsafe {
        sp_trace_free(t);
        sp_trace_free(ptr::null_mut());
        sp_buffer_free(ptr::null_mut());
    }
}

#[test]
fn last_error_is_per_thread() {
    let mut h = ptr::null_mut();
    let junk = b"[]";
    assert_ne!(unsafe { sp_trace_from_json(junk.as_ptr(), junk.len(), &mut h) }, SpStatus::Ok);
    assert!(!last_error().is_empty());
    std::thread::spawn(|| assert_eq!(last_error(), "")).join().unwrap();
}

#[test]
fn generated_header_compiles() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/sensorprint.h");
    let text = std::fs::read_to_string(&header).expect("header not generated");
    for sym in [
        "typedef struct SpTrace SpTrace",
        "SP_STATUS_BUFFER_TOO_SMALL",
        "sp_trace_from_json",
        "sp_extract_features",
        "sp_obfuscate",
        "sp_calibrate",
        "sp_last_error",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let src = tempfile_path("use_header.c");
    std::fs::write(
        &src,
        "#include \"sensorprint.h\"\nint main(void) { SpObfuscationParams p = sp_obfuscation_defaults(); size_t n = 0;\n\
         return (int)sp_feature_count(SP_STREAM_ALL, &n) + (int)(p.range_scale != 1.0); }\n",
    )
    .unwrap();
    let out = match Command::new("cc").arg("-fsyntax-only").arg("-I").arg(dir.join("include")).arg(&src).output() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("skipping C compile check: cc unavailable ({e})");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempfile_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sensorprint-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}
