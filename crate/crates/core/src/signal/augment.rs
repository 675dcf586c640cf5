use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_rir, mix_at_snr_with_offset, split_early_reflections, Rir, SignalError};
use crate::audio::AudioBuffer;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub reverb_probability: f64,
    pub noise_probability: f64,
    pub snr_range_db: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            reverb_probability: 0.5,
            noise_probability: 0.8,
            snr_range_db: (-5.0, 30.0),
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.reverb_probability) || !unit.contains(&self.noise_probability) {
            return Err(SignalError::InvalidSpec("probabilities must lie in [0, 1]"));
        }
        let (lo, hi) = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SignalError::InvalidSpec("SNR range must be finite and ordered"));
        }
        Ok(())
    }

    /// The same spec with the seed for utterance `index`.
    pub fn for_utterance(&self, index: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, index),
            ..*self
        }
    }
}

/// Mixes a base seed with an utterance index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverbEvent {
    pub rir_index: usize,
    pub direct_path_index: usize,
    pub early_taps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEvent {
    pub noise_index: usize,
    pub snr_db: f64,
    pub offset: usize,
    pub gain: f64,
    pub measured_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentMetadata {
    pub seed: u64,
    pub reverb: Option<ReverbEvent>,
    pub noise: Option<NoiseEvent>,
    /// Scale applied to input and reference after mixing (1 if none).
    pub peak_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair<T> {
    pub input: AudioBuffer<T>,
    pub reference: AudioBuffer<T>,
    pub metadata: AugmentMetadata,
}

/// Builds a degraded input and its training reference from clean speech.
///
/// Random draws happen in a fixed order whatever the outcome (reverb coin,
/// RIR choice, noise coin, noise choice, SNR, noise offset), so one seed
/// always maps to one augmentation. With reverb, the input gets the full
/// RIR and the reference its early part. With noise, one noise source is
/// mixed into the input at an SNR relative to the (possibly reverberant)
/// input. An empty pool disables the corresponding step.
pub fn augment_pair<T: Scalar>(
    speech: &AudioBuffer<T>,
    noise_pool: &[AudioBuffer<T>],
    rir_pool: &[Rir<T>],
    spec: &AugmentSpec,
) -> Result<AugmentedPair<T>, SignalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let reverb_coin = rng.random_bool(spec.reverb_probability);
    let rir_pick = rng.random_range(0..rir_pool.len().max(1));
    let noise_coin = rng.random_bool(spec.noise_probability);
    let noise_pick = rng.random_range(0..noise_pool.len().max(1));
    let (lo, hi) = spec.snr_range_db;
    let snr_db = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let offset_draw: u64 = rng.random();

    let mut input = speech.clone();
    let mut reference = speech.clone();
    let mut reverb = None;
    if reverb_coin && !rir_pool.is_empty() {
        let rir = &rir_pool[rir_pick];
        let split = split_early_reflections(rir)?;
        input = apply_rir(speech, rir)?;
        reference = apply_rir(speech, &split.early_rir())?;
        reverb = Some(ReverbEvent {
            rir_index: rir_pick,
            direct_path_index: rir.direct_path_index,
            early_taps: split.early.len(),
        });
    }

    let mut noise = None;
    let mut peak_scale = T::one();
    if noise_coin && !noise_pool.is_empty() {
        let source = &noise_pool[noise_pick];
        let offset = (offset_draw % source.len().max(1) as u64) as usize;
        let m = mix_at_snr_with_offset(&input, source, snr_db, offset)?;
        peak_scale = m.peak_scale;
        noise = Some(NoiseEvent {
            noise_index: noise_pick,
            snr_db,
            offset,
            gain: m.gain.as_f64(),
            measured_snr_db: super::measured_snr_db(&m),
        });
        input = m.mixed;
        if peak_scale != T::one() {
            reference.samples.iter_mut().for_each(|v| *v *= peak_scale);
        }
    }

    Ok(AugmentedPair {
        input,
        reference,
        metadata: AugmentMetadata {
            seed: spec.seed,
            reverb,
            noise,
            peak_scale: peak_scale.as_f64(),
        },
    })
}
