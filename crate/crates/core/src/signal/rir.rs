use super::{check_rates, convolve_full, SignalError};
use crate::audio::AudioBuffer;
use crate::scalar::Scalar;

/// Length of the early-reflection window after the direct path.
pub const EARLY_REFLECTION_SECS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Rir<T> {
    pub taps: Vec<T>,
    pub sample_rate: u32,
    pub direct_path_index: usize,
}

impl<T: Scalar> Rir<T> {
    /// Direct path at the first tap of largest magnitude.
    pub fn new(taps: Vec<T>, sample_rate: u32) -> Result<Self, SignalError> {
        let index = taps
            .iter()
            .enumerate()
            .fold(
                (0, T::zero()),
                |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) },
            )
            .0;
        Self::with_direct_path(taps, sample_rate, index)
    }

    pub fn with_direct_path(taps: Vec<T>, sample_rate: u32, direct_path_index: usize) -> Result<Self, SignalError> {
        if direct_path_index >= taps.len() {
            return Err(SignalError::DirectPathOutOfRange {
                index: direct_path_index,
                len: taps.len(),
            });
        }
        Ok(Self {
            taps,
            sample_rate,
            direct_path_index,
        })
    }

    pub fn delta(sample_rate: u32, amplitude: T) -> Self {
        Self {
            taps: vec![amplitude],
            sample_rate,
            direct_path_index: 0,
        }
    }

    pub fn early_len(&self) -> usize {
        (EARLY_REFLECTION_SECS * self.sample_rate as f64).round() as usize
    }
}

/// Partition of an RIR around its direct path:
/// `taps == pre ++ early ++ late`.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyLateSplit<T> {
    /// Taps before the direct path.
    pub pre: Vec<T>,
    /// Up to `0.05·fs` taps starting at the direct path.
    pub early: Vec<T>,
    /// Everything after the early window.
    pub late: Vec<T>,
    pub direct_path_index: usize,
    pub sample_rate: u32,
}

impl<T: Scalar> EarlyLateSplit<T> {
    /// The early part as an RIR whose direct path is its first tap.
    pub fn early_rir(&self) -> Rir<T> {
        Rir {
            taps: self.early.clone(),
            sample_rate: self.sample_rate,
            direct_path_index: 0,
        }
    }

    /// Offset of the first late tap from the direct path.
    pub fn late_offset(&self) -> usize {
        self.early.len()
    }

    pub fn reconstruct(&self) -> Vec<T> {
        [&self.pre[..], &self.early, &self.late].concat()
    }
}

pub fn split_early_reflections<T: Scalar>(rir: &Rir<T>) -> Result<EarlyLateSplit<T>, SignalError> {
    let dp = rir.direct_path_index;
    if dp >= rir.taps.len() {
        return Err(SignalError::DirectPathOutOfRange {
            index: dp,
            len: rir.taps.len(),
        });
    }
    let end = (dp + rir.early_len()).min(rir.taps.len());
    Ok(EarlyLateSplit {
        pre: rir.taps[..dp].to_vec(),
        early: rir.taps[dp..end].to_vec(),
        late: rir.taps[end..].to_vec(),
        direct_path_index: dp,
        sample_rate: rir.sample_rate,
    })
}

/// Convolves with `rir`, shifted so the direct path has zero delay, and
/// truncated to the speech length.
pub fn apply_rir<T: Scalar>(speech: &AudioBuffer<T>, rir: &Rir<T>) -> Result<AudioBuffer<T>, SignalError> {
    check_rates(speech.sample_rate, rir.sample_rate)?;
    if rir.direct_path_index >= rir.taps.len() {
        return Err(SignalError::DirectPathOutOfRange {
            index: rir.direct_path_index,
            len: rir.taps.len(),
        });
    }
    let full = convolve_full(&speech.samples, &rir.taps);
    let dp = rir.direct_path_index;
    let samples = (0..speech.len())
        .map(|n| full.get(n + dp).copied().unwrap_or_else(T::zero))
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: speech.sample_rate,
    })
}
