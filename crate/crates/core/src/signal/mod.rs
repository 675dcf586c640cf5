//! Augmentation and windowing: noise mixing at a target SNR, room impulse
//! responses and their early-reflection part, sliding training windows.

mod augment;
mod convolve;
mod mix;
mod rir;

use thiserror::Error;

pub use augment::{augment_pair, derive_seed, AugmentMetadata, AugmentSpec, AugmentedPair, NoiseEvent, ReverbEvent};
pub use convolve::{convolve_direct, convolve_full};
pub use mix::{measured_snr_db, mix_at_snr, mix_at_snr_with_offset, Mixture};
pub use rir::{apply_rir, split_early_reflections, EarlyLateSplit, Rir, EARLY_REFLECTION_SECS};

use crate::audio::AudioBuffer;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("noise has zero power")]
    SilentNoise,
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("direct path index {index} outside an RIR of {len} taps")]
    DirectPathOutOfRange { index: usize, len: usize },
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(&'static str),
}

/// Training window length in samples (2.6 s at 24 kHz).
pub const TRAINING_WINDOW: usize = 62_400;

/// Start offsets of every window of `window` samples, `hop` apart, that
/// lies fully inside a signal of `len` samples.
pub fn window_offsets(len: usize, window: usize, hop: usize) -> Vec<usize> {
    assert!(window > 0 && hop > 0, "window and hop must be positive");
    if len < window {
        return Vec::new();
    }
    (0..=(len - window) / hop).map(|i| i * hop).collect()
}

/// Windows of `window` samples with fractional `overlap` in `[0, 1)`.
pub fn sliding_windows<T: Scalar>(signal: &AudioBuffer<T>, window: usize, overlap: f64) -> Vec<AudioBuffer<T>> {
    assert!((0.0..1.0).contains(&overlap), "overlap must lie in [0, 1)");
    let hop = ((window as f64 * (1.0 - overlap)).round() as usize).max(1);
    window_offsets(signal.len(), window, hop)
        .into_iter()
        .map(|o| AudioBuffer {
            samples: signal.samples[o..o + window].to_vec(),
            sample_rate: signal.sample_rate,
        })
        .collect()
}

pub(crate) fn check_rates(a: u32, b: u32) -> Result<(), SignalError> {
    if a != b {
        return Err(SignalError::SampleRateMismatch(a, b));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
