use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(len: usize, seed: u64, sr: u32) -> AudioBuffer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), sr).unwrap()
}

#[test]
fn equal_power_at_zero_db_gives_unit_gain() {
    let s = AudioBuffer::new(vec![0.5, -0.5, 0.5, -0.5], 8).unwrap();
    let n = AudioBuffer::new(vec![-0.5, 0.5, 0.5, 0.5], 8).unwrap();
    let m = mix_at_snr(&s, &n, 0.0).unwrap();
    assert_eq!(m.gain, 1.0);
    assert_eq!(m.peak_scale, 1.0);
    assert_eq!(m.mixed.samples, [0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn four_times_speech_power_gives_gain_two() {
    let s = AudioBuffer::new(vec![0.4f64, -0.4], 8).unwrap();
    let n = AudioBuffer::new(vec![0.2, 0.2], 8).unwrap();
    assert!((mix_at_snr(&s, &n, 0.0).unwrap().gain - 2.0).abs() < 1e-15);
}

#[test]
fn mixing_errors() {
    let s = noise(10, 1, 8);
    assert_eq!(
        mix_at_snr(&s, &AudioBuffer::silence(4, 8), 0.0).unwrap_err(),
        SignalError::SilentNoise
    );
    assert_eq!(
        mix_at_snr(&s, &noise(4, 2, 16), 0.0).unwrap_err(),
        SignalError::SampleRateMismatch(8, 16)
    );
}

#[test]
fn clipping_mixture_is_scaled_and_keeps_snr() {
    let s = AudioBuffer::new(vec![0.9, -0.9, 0.9, 0.1], 8).unwrap();
    let n = AudioBuffer::new(vec![0.5, -0.5, 0.3], 8).unwrap();
    let m = mix_at_snr(&s, &n, -3.0).unwrap();
    assert!(m.peak_scale < 1.0);
    assert!(m.mixed.peak() <= 1.0 + 1e-15);
    assert!((measured_snr_db(&m) + 3.0).abs() < 1e-9);
}

#[test]
fn early_window_at_24k() {
    let mut taps = vec![0.0; 5000];
    taps[100] = 1.0;
    taps[3000] = 0.5;
    let rir = Rir::new(taps.clone(), 24_000).unwrap();
    assert_eq!(rir.direct_path_index, 100);
    let split = split_early_reflections(&rir).unwrap();
    assert_eq!(split.early.len(), 1200);
    assert_eq!(split.early, taps[100..1300]);
    assert_eq!(split.reconstruct(), taps);
}

#[test]
fn delta_rir_split_and_apply() {
    let rir = Rir::delta(24_000, 1.0);
    let split = split_early_reflections(&rir).unwrap();
    assert_eq!(split.early, [1.0]);
    assert!(split.late.is_empty());
    let s = noise(300, 3, 24_000);
    assert_eq!(apply_rir(&s, &rir).unwrap(), s);
    let half = apply_rir(&s, &Rir::delta(24_000, 0.5)).unwrap();
    assert!(half.samples.iter().zip(&s.samples).all(|(a, b)| *a == b * 0.5));
}

#[test]
fn bad_direct_path() {
    assert_eq!(
        Rir::with_direct_path(vec![1.0f32; 3], 8, 3).unwrap_err(),
        SignalError::DirectPathOutOfRange { index: 3, len: 3 }
    );
}

#[test]
fn fft_convolution_matches_direct() {
    let x = noise(3000, 4, 8).samples;
    let h = noise(700, 5, 8).samples;
    let a = convolve_full(&x, &h);
    let b = convolve_direct(&x, &h);
    let worst = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst}");
}

#[test]
fn early_plus_late_equals_full_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let taps: Vec<f64> = (0..2400)
        .map(|i| rng.random_range(-1.0..1.0) * (-(i as f64) / 600.0).exp())
        .collect();
    let rir = Rir::with_direct_path(taps, 24_000, 40).unwrap();
    let split = split_early_reflections(&rir).unwrap();
    let speech = noise(4000, 7, 24_000);
    let full = apply_rir(&speech, &rir).unwrap();
    let mut parts = vec![0.0; speech.len()];
    let dp = rir.direct_path_index;
    for k in 0..rir.taps.len() {
        let tap = if k < dp {
            split.pre[k]
        } else if k - dp < split.early.len() {
            split.early[k - dp]
        } else {
            split.late[k - dp - split.late_offset()]
        };
        for n in 0..speech.len() {
            if let Some(i) = (n + dp).checked_sub(k) {
                if i < speech.len() {
                    parts[n] += tap * speech.samples[i];
                }
            }
        }
    }
    let worst = parts
        .iter()
        .zip(&full.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn window_counts() {
    assert_eq!(window_offsets(124_800, TRAINING_WINDOW, 31_200), [0, 31_200, 62_400]);
    assert_eq!(window_offsets(62_400, TRAINING_WINDOW, 31_200), [0]);
    assert!(window_offsets(62_399, TRAINING_WINDOW, 31_200).is_empty());
    let a = AudioBuffer::<f32>::silence(124_800, 24_000);
    assert_eq!(sliding_windows(&a, TRAINING_WINDOW, 0.5).len(), 3);
}

#[test]
fn augmentation_with_probabilities_zero_is_identity() {
    let s = noise(2000, 8, 24_000);
    let spec = AugmentSpec {
        reverb_probability: 0.0,
        noise_probability: 0.0,
        ..Default::default()
    };
    let p = augment_pair(&s, &[noise(500, 9, 24_000)], &[Rir::delta(24_000, 1.0)], &spec).unwrap();
    assert_eq!(p.input, s);
    assert_eq!(p.reference, s);
}

#[test]
fn forced_reverb_with_delta_is_identity() {
    let s = noise(2000, 10, 24_000);
    let spec = AugmentSpec {
        reverb_probability: 1.0,
        noise_probability: 0.0,
        ..Default::default()
    };
    let p = augment_pair(&s, &[], &[Rir::delta(24_000, 1.0)], &spec).unwrap();
    assert!(p.metadata.reverb.is_some());
    assert_eq!(p.input, s);
    assert_eq!(p.reference, s);
}

#[test]
fn augmentation_is_deterministic() {
    let s = noise(3000, 11, 24_000);
    let pool = [noise(700, 12, 24_000), noise(5000, 13, 24_000)];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let taps: Vec<f64> = (0..1500).map(|_| rng.random_range(-0.3..0.3)).collect();
    let rirs = [Rir::new(taps, 24_000).unwrap()];
    let spec = AugmentSpec {
        reverb_probability: 1.0,
        noise_probability: 1.0,
        seed: 77,
        ..Default::default()
    };
    let a = augment_pair(&s, &pool, &rirs, &spec).unwrap();
    let b = augment_pair(&s, &pool, &rirs, &spec).unwrap();
    assert_eq!(a, b);
    let n = a.metadata.noise.as_ref().unwrap();
    assert!((n.measured_snr_db - n.snr_db).abs() < 0.01);
}

#[test]
fn invalid_spec() {
    let spec = AugmentSpec {
        snr_range_db: (30.0, -5.0),
        ..Default::default()
    };
    assert!(spec.validate().is_err());
}

#[test]
fn sampled_snrs_are_uniform() {
    let s = noise(64, 15, 24_000);
    let pool = [noise(64, 16, 24_000)];
    let base = AugmentSpec {
        noise_probability: 1.0,
        reverb_probability: 0.0,
        ..Default::default()
    };
    let n = 10_000;
    let mut u: Vec<f64> = (0..n)
        .map(|i| {
            let p = augment_pair(&s, &pool, &[], &base.for_utterance(i)).unwrap();
            (p.metadata.noise.unwrap().snr_db + 5.0) / 35.0
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
        .fold(0.0, f64::max);
    assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
}

proptest! {
    #[test]
    fn recomputed_snr_matches_target(seed in any::<u64>(), snr in -5.0f64..30.0, len in 50usize..400) {
        let s = noise(len, seed, 24_000);
        let n = noise(len / 2 + 1, seed ^ 1, 24_000);
        let m = mix_at_snr_with_offset(&s, &n, snr, (seed % 97) as usize).unwrap();
        prop_assert!((measured_snr_db(&m) - snr).abs() < 0.01);
        for ((&x, &a), &b) in m.mixed.samples.iter().zip(&m.speech).zip(&m.noise) {
            prop_assert_eq!(x, a + b);
        }
    }
}
