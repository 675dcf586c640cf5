use super::{check_rates, SignalError};
use crate::audio::{mean_square, AudioBuffer};
use crate::scalar::Scalar;

/// A noisy mixture with the components it was built from.
///
/// `mixed[i] == speech[i] + noise[i]` exactly; both components already
/// include the noise gain and any peak scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture<T> {
    pub mixed: AudioBuffer<T>,
    pub speech: Vec<T>,
    pub noise: Vec<T>,
    /// Gain applied to the tiled noise before peak scaling.
    pub gain: T,
    /// Factor applied to both components so that `|mixed| <= 1`; 1 if the
    /// mixture did not clip.
    pub peak_scale: T,
    pub snr_db: f64,
}

/// [`mix_at_snr_with_offset`] starting the noise at its first sample.
pub fn mix_at_snr<T: Scalar>(
    speech: &AudioBuffer<T>,
    noise: &AudioBuffer<T>,
    snr_db: f64,
) -> Result<Mixture<T>, SignalError> {
    mix_at_snr_with_offset(speech, noise, snr_db, 0)
}

/// Adds `noise`, tiled circularly from `offset` to the speech length, so
/// that `10·log10(P_speech / (g²·P_noise)) = snr_db`. Powers are mean
/// squares over the full utterance. If the mixture peaks above 1, both
/// components are scaled down together.
pub fn mix_at_snr_with_offset<T: Scalar>(
    speech: &AudioBuffer<T>,
    noise: &AudioBuffer<T>,
    snr_db: f64,
    offset: usize,
) -> Result<Mixture<T>, SignalError> {
    check_rates(speech.sample_rate, noise.sample_rate)?;
    if noise.is_empty() {
        return Err(SignalError::SilentNoise);
    }
    let tiled: Vec<T> = (0..speech.len())
        .map(|i| noise.samples[(offset + i) % noise.len()])
        .collect();
    let p_noise = mean_square(&tiled);
    if p_noise <= T::zero() {
        return Err(SignalError::SilentNoise);
    }
    let p_speech = mean_square(&speech.samples);
    let gain = (p_speech / p_noise).sqrt() * T::of(10f64.powf(-snr_db / 20.0));
    let mut s = speech.samples.clone();
    let mut n: Vec<T> = tiled.into_iter().map(|v| v * gain).collect();
    let peak = s.iter().zip(&n).fold(T::zero(), |m, (&a, &b)| m.max((a + b).abs()));
    let peak_scale = if peak > T::one() { T::one() / peak } else { T::one() };
    if peak_scale != T::one() {
        s.iter_mut().chain(n.iter_mut()).for_each(|v| *v *= peak_scale);
    }
    let mixed = s.iter().zip(&n).map(|(&a, &b)| a + b).collect();
    Ok(Mixture {
        mixed: AudioBuffer {
            samples: mixed,
            sample_rate: speech.sample_rate,
        },
        speech: s,
        noise: n,
        gain,
        peak_scale,
        snr_db,
    })
}

/// SNR recomputed from the stored components.
pub fn measured_snr_db<T: Scalar>(m: &Mixture<T>) -> f64 {
    let ps = mean_square(&m.speech).as_f64();
    let pn = mean_square(&m.noise).as_f64();
    10.0 * (ps / pn).log10()
}
