use proptest::prelude::*;

use sensorprint::features::{self, FrameSeries, Spectrum, ROLLOFF_FRACTION};
use sensorprint::preprocess::{self, StreamKind, UniformStream};
use sensorprint::trace::{Sample, SensorTrace, TraceMeta};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn arb_signal() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 16..200)
}

fn uniform(values: Vec<f64>) -> UniformStream {
    let n = values.len();
    UniformStream { kind: StreamKind::GyroX, rate: 100.0, values, origin_duration_s: (n - 1) as f64 / 100.0 }
}

/// Textbook population moments, accumulated independently of the library.
fn naive_moments(v: &[f64]) -> (f64, f64, f64, f64) {
    let n = v.len() as f64;
    let mut s1 = 0.0;
    for x in v {
        s1 += x;
    }
    let mean = s1 / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in v {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    (mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2))
}

proptest! {
    #[test]
    fn accel_magnitude_features_ignore_orientation(
        rows in prop::collection::vec(prop::array::uniform3(-12.0f64..12.0), 40..120),
        q in prop::array::uniform4(0.1f64..1.0),
    ) {
        let r = rotation(q);
        let build = |rot: Option<[[f64; 3]; 3]>| {
            let samples = rows.iter().enumerate().map(|(i, a)| {
                let a = match rot {
                    Some(m) => [0, 1, 2].map(|k| m[k][0] * a[0] + m[k][1] * a[1] + m[k][2] * a[2]),
                    None => *a,
                };
                Sample::new(i as f64 * 10.0, a, [0.0; 3])
            }).collect();
            SensorTrace::new(TraceMeta::new("d", "s"), samples).unwrap()
        };
        let plain = features::stream_features(&build(None), StreamKind::AccelMagnitude, 100.0).unwrap();
        let turned = features::stream_features(&build(Some(r)), StreamKind::AccelMagnitude, 100.0).unwrap();
        for (i, (a, b)) in plain.iter().zip(&turned).enumerate() {
            prop_assert!(close(*a, *b, 1e-6), "feature {i}: {a} vs {b}");
        }
    }

    #[test]
    fn temporal_moments_match_textbook(v in arb_signal()) {
        prop_assume!(v.iter().any(|x| *x != v[0]));
        let f = features::temporal_features(&v).unwrap();
        let (mean, std, skew, kurt) = naive_moments(&v);
        prop_assert!(close(f.mean, mean, 1e-12));
        prop_assert!(close(f.std_dev, std, 1e-12));
        prop_assert!(close(f.skewness, skew, 1e-9));
        prop_assert!(close(f.kurtosis, kurt, 1e-9));
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        prop_assert!(close(f.rms, rms, 1e-12));
        prop_assert!(f.kurtosis >= 1.0 - 1e-9 && f.kurtosis >= f.skewness * f.skewness + 1.0 - 1e-9);
        prop_assert_eq!(f.nonneg_count, v.iter().filter(|x| **x >= 0.0).count() as f64);
    }

    #[test]
    fn temporal_features_are_scale_aware(v in arb_signal(), c in prop_oneof![0.01f64..100.0, -100.0f64..-0.01]) {
        prop_assume!(v.iter().any(|x| *x != v[0]));
        let a = features::temporal_features(&v).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let b = features::temporal_features(&scaled).unwrap();
        prop_assert!(close(b.mean, c * a.mean, 1e-9));
        prop_assert!(close(b.std_dev, c.abs() * a.std_dev, 1e-9));
        prop_assert!(close(b.avg_dev, c.abs() * a.avg_dev, 1e-9));
        prop_assert!(close(b.rms, c.abs() * a.rms, 1e-9));
        prop_assert!(close(b.skewness, c.signum() * a.skewness, 1e-6));
        prop_assert!(close(b.kurtosis, a.kurtosis, 1e-6));
        let (hi, lo) = if c > 0.0 { (a.max, a.min) } else { (a.min, a.max) };
        prop_assert!(close(b.max, c * hi, 1e-12) && close(b.min, c * lo, 1e-12));
    }

    #[test]
    fn spectral_shape_ignores_amplitude(v in arb_signal(), c in 0.01f64..100.0) {
        let a = uniform(v.clone());
        let b = uniform(v.iter().map(|x| c * x).collect());
        let (sa, sb) = (features::fft_spectrum(&a).unwrap(), features::fft_spectrum(&b).unwrap());
        prop_assume!(sa.total() > 1e-9);
        let fa = features::spectral_features(&sa, &features::frame_series(&a, features::FRAME_MS));
        let fb = features::spectral_features(&sb, &features::frame_series(&b, features::FRAME_MS));
        for (x, y) in [(fa.centroid, fb.centroid), (fa.spread, fb.spread), (fa.entropy, fb.entropy),
                       (fa.flatness, fb.flatness), (fa.low_energy_rate, fb.low_energy_rate)] {
            prop_assert!(close(x, y, 1e-6), "{x} vs {y}");
        }
        prop_assert!(close(fb.brightness, c * fa.brightness, 1e-9));
        prop_assert!(close(fb.spec_rms, c * fa.spec_rms, 1e-9));
    }

    #[test]
    fn spectral_moments_and_rolloff_match_brute_force(
        m in prop::collection::vec(0.0f64..5.0, 4..80),
        df in 0.1f64..5.0,
    ) {
        let total: f64 = m.iter().sum();
        prop_assume!(total > 1e-6);
        let f: Vec<f64> = (1..=m.len()).map(|k| k as f64 * df).collect();
        let spec = Spectrum::from_magnitudes(f.clone(), m.clone()).unwrap();
        let frames = FrameSeries { rms: vec![1.0, 1.0], power_spectra: vec![vec![1.0], vec![1.0]] };
        let s = features::spectral_features(&spec, &frames);

        let centroid = f.iter().zip(&m).map(|(f, m)| f * m).sum::<f64>() / total;
        let var = f.iter().zip(&m).map(|(f, m)| (f - centroid).powi(2) * m).sum::<f64>() / total;
        prop_assert!(close(s.centroid, centroid, 1e-9));
        prop_assert!(close(s.spread, var.sqrt(), 1e-9));

        // smallest frequency whose prefix mass reaches the fraction
        let rolloff = (0..m.len())
            .find(|&k| m[..=k].iter().sum::<f64>() >= ROLLOFF_FRACTION * total)
            .map(|k| f[k])
            .unwrap();
        prop_assert_eq!(s.rolloff, rolloff);

        let entropy: f64 = m.iter().filter(|x| **x > 0.0).map(|x| { let p = x / total; -p * p.log2() }).sum();
        prop_assert!(close(s.entropy, entropy, 1e-9));
        prop_assert!(s.entropy <= (m.len() as f64).log2() + 1e-9);
        prop_assert!((0.0..=1.0).contains(&s.flatness));
    }
}

#[test]
fn spline_reconstructs_sinusoid() {
    let f0 = 2.0;
    let t_ms: Vec<f64> = (0..=600).map(|i| i as f64 * 10.0 + if i % 2 == 1 { 3.0 } else { 0.0 }).collect();
    let values: Vec<f64> = t_ms.iter().map(|t| (2.0 * std::f64::consts::PI * f0 * t / 1000.0).sin()).collect();
    let series = preprocess::IrregularSeries { t_ms, values };
    let out = preprocess::cubic_spline_resample(&series, StreamKind::GyroX, 100.0).unwrap();
    assert_eq!(out.values.len(), 601);
    // natural end conditions bend the first and last intervals; check the interior
    let worst = out.values[5..out.values.len() - 5]
        .iter()
        .enumerate()
        .map(|(i, v)| (v - (2.0 * std::f64::consts::PI * f0 * (i + 5) as f64 / 100.0).sin()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "max error {worst}");
}

#[test]
fn constant_signal_has_degenerate_features() {
    let t = features::temporal_features(&[3.5; 50]).unwrap();
    assert_eq!((t.mean, t.std_dev, t.avg_dev, t.skewness, t.kurtosis), (3.5, 0.0, 0.0, 0.0, 0.0));
    assert_eq!((t.rms, t.max, t.min, t.zcr, t.nonneg_count), (3.5, 3.5, 3.5, 0.0, 50.0));
    let u = uniform(vec![3.5; 64]);
    let s = features::spectral_features(&features::fft_spectrum(&u).unwrap(), &features::frame_series(&u, features::FRAME_MS));
    assert_eq!(s.centroid, 0.0);
    assert_eq!(s.flatness, 1.0);
    assert_eq!(s.spec_rms, 0.0);
}

#[test]
fn zero_crossings_by_hand() {
    let zcr = |v: &[f64]| features::temporal_features(v).unwrap().zcr;
    assert_eq!(zcr(&[1.0, -1.0, 1.0, -1.0]), 3.0 / 4.0);
    assert_eq!(zcr(&[1.0, 2.0, 3.0, 4.0]), 0.0);
    assert_eq!(zcr(&[-1.0, 0.0, 1.0, 0.0, -1.0]), 2.0 / 5.0);
}

#[test]
fn white_noise_flatness_matches_rayleigh_ratio() {
    use rand_distr::{Distribution, StandardNormal};
    // magnitudes of white-noise DFT bins are Rayleigh distributed; their
    // geometric over arithmetic mean tends to 2 e^(-γ/2) / √π
    let expected = 2.0 * (-0.577_215_664_901_532_9f64 / 2.0).exp() / std::f64::consts::PI.sqrt();
    let mut total = 0.0;
    for seed in 0..50 {
        let mut rng = sensorprint::rng::rng(seed);
        let v: Vec<f64> = (0..1024).map(|_| StandardNormal.sample(&mut rng)).collect();
        let u = uniform(v);
        let s = features::spectral_features(&features::fft_spectrum(&u).unwrap(), &features::frame_series(&u, features::FRAME_MS));
        total += s.flatness;
    }
    let mean = total / 50.0;
    assert!((mean - expected).abs() < 0.01, "mean flatness {mean}, expected {expected:.4}");
}
