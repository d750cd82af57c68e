use proptest::prelude::*;

use sensorprint::calibrate::{self, CalibrationModel, SensorKind, GRAVITY};
use sensorprint::obfuscate::{self, Interval, ObfuscationPolicy, MIN_GAIN};
use sensorprint::trace::{Sample, SensorTrace, TraceMeta};

fn ramp(n: usize, session: &str) -> SensorTrace {
    let samples = (0..n)
        .map(|i| {
            let x = i as f64;
            Sample::new(x * 10.0, [0.1 + 0.01 * x, -0.2 - 0.02 * x, 9.81 + 0.001 * x], [0.01 * x, 0.02, -0.03 * x])
        })
        .collect();
    SensorTrace::new(TraceMeta::new("dev", session), samples).unwrap()
}

#[test]
fn injection_count_is_binomial() {
    // 1001 samples give 1000 injection opportunities at Pr = 0.5
    let base = ramp(1001, "s");
    let counts: Vec<f64> = (0..100)
        .map(|seed| {
            let policy = ObfuscationPolicy { injection_prob: 0.5, seed, ..ObfuscationPolicy::default() };
            (obfuscate::inject(&base, &policy).unwrap().len() - 1001) as f64
        })
        .collect();
    let sd = (1000.0f64 * 0.25).sqrt();
    for c in &counts {
        assert!((c - 500.0).abs() < 5.0 * sd, "count {c}");
    }
    let mean = counts.iter().sum::<f64>() / 100.0;
    assert!((mean - 500.0).abs() < 4.0 * sd / 10.0, "mean {mean}");
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 99.0;
    assert!(var > 0.5 * 250.0 && var < 1.6 * 250.0, "variance {var}");
}

proptest! {
    #[test]
    fn session_affine_draws_stay_in_range(seed in any::<u64>(), scale in 1.0f64..60.0) {
        let base = ramp(20, "s1");
        let policy = ObfuscationPolicy { range_scale: scale, seed, ..ObfuscationPolicy::default() };
        let r = policy.effective_ranges().unwrap();
        let out = obfuscate::session_affine(&base, &policy).unwrap();
        prop_assert_eq!(out.len(), base.len());
        let (s0, s1) = (&base.samples()[0], &base.samples()[10]);
        let (o0, o1) = (&out.samples()[0], &out.samples()[10]);
        for k in 0..3 {
            let g = (o1.accel[k] - o0.accel[k]) / (s1.accel[k] - s0.accel[k]);
            let o = o0.accel[k] - g * s0.accel[k];
            prop_assert!(g >= r.gain.lo() - 1e-9 && g <= r.gain.hi() + 1e-9);
            prop_assert!(o >= r.accel_offset.lo() - 1e-9 && o <= r.accel_offset.hi() + 1e-9);
        }
        prop_assert_eq!(out.times(), base.times());
    }

    #[test]
    fn scaled_ranges_keep_midpoint(lo in -5.0f64..5.0, w in 0.0f64..3.0, f in 1.0f64..100.0) {
        let i = Interval::new(lo, lo + w).unwrap();
        let s = obfuscate::scale_range(i, f).unwrap();
        prop_assert!((s.midpoint() - i.midpoint()).abs() < 1e-9);
        prop_assert!(((s.hi() - s.lo()) - f * w).abs() < 1e-9 * (1.0 + f * w));
        let g = obfuscate::scale_range(Interval::new(0.95, 1.05).unwrap(), f).unwrap();
        let policy = ObfuscationPolicy { range_scale: f, ..ObfuscationPolicy::default() };
        let eff = policy.effective_ranges().unwrap();
        prop_assert!(eff.gain.lo() >= MIN_GAIN);
        prop_assert!(eff.gain.hi() == g.hi());
    }

    #[test]
    fn injection_keeps_originals_in_order(seed in any::<u64>(), p in 0.0f64..1.0) {
        let base = ramp(60, "s2");
        let policy = ObfuscationPolicy { injection_prob: p, range_scale: 10.0, seed, ..ObfuscationPolicy::default() };
        let out = obfuscate::inject(&base, &policy).unwrap();
        let times = out.times();
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
        let affine = obfuscate::session_affine(&base, &policy).unwrap();
        let kept: Vec<&Sample> = out.samples().iter().filter(|s| base.times().contains(&s.t)).collect();
        prop_assert_eq!(kept.len(), base.len());
        for (a, b) in kept.iter().zip(affine.samples()) {
            prop_assert_eq!(*a, b);
        }
        prop_assert_eq!(obfuscate::inject(&base, &policy).unwrap(), out);
    }

    #[test]
    fn accel_algebra_round_trips(o in -1.0f64..1.0, s in 0.5f64..1.5) {
        let (got_o, got_s) = calibrate::accel_from_means(o + s * GRAVITY, o - s * GRAVITY);
        prop_assert!((got_o - o).abs() < 1e-12 && (got_s - s).abs() < 1e-12);
    }

    #[test]
    fn gyro_algebra_round_trips(o in -0.2f64..0.2, s in 0.5f64..1.5, t1 in 0.3f64..5.0, t2 in 0.3f64..5.0, theta in 0.5f64..7.0) {
        let (got_o, got_s) = calibrate::gyro_from_angles(o * t1 + s * theta, o * t2 - s * theta, t1, t2, theta).unwrap();
        prop_assert!((got_o - o).abs() < 1e-9 && (got_s - s).abs() < 1e-9);
    }

    #[test]
    fn correction_inverts_planted_affine(
        ao in prop::array::uniform3(-0.5f64..0.5), ag in prop::array::uniform3(0.8f64..1.2),
        go in prop::array::uniform3(-0.1f64..0.1), gg in prop::array::uniform3(0.8f64..1.2),
    ) {
        let truth = ramp(30, "s3");
        let planted: Vec<Sample> = truth.samples().iter().map(|s| {
            let mut d = *s;
            for k in 0..3 {
                d.accel[k] = s.accel[k] * ag[k] + ao[k];
                d.gyro[k] = s.gyro[k] * gg[k] + go[k];
            }
            d
        }).collect();
        let raw = truth.with_samples(planted).unwrap();
        let models = [
            CalibrationModel { sensor: SensorKind::Accel, offset: ao, gain: ag },
            CalibrationModel { sensor: SensorKind::Gyro, offset: go, gain: gg },
        ];
        let fixed = calibrate::apply_calibration(&raw, &models).unwrap();
        for (a, b) in fixed.samples().iter().zip(truth.samples()) {
            for k in 0..3 {
                prop_assert!((a.accel[k] - b.accel[k]).abs() < 1e-9);
                prop_assert!((a.gyro[k] - b.gyro[k]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn obfuscation_is_keyed_by_session() {
    let policy = ObfuscationPolicy { seed: 5, ..ObfuscationPolicy::default() };
    let a = obfuscate::session_affine(&ramp(10, "a"), &policy).unwrap();
    let b = obfuscate::session_affine(&ramp(10, "b"), &policy).unwrap();
    assert_ne!(a.samples(), b.samples());
    assert_eq!(obfuscate::session_affine(&ramp(10, "a"), &policy).unwrap(), a);
}
