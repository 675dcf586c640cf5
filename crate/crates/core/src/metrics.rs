//! STFT, mel filterbanks and the multi-scale mel-spectrogram distance.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::scalar::Scalar;

/// Floor applied before taking the log of mel magnitudes.
pub const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("signal of {len} samples is too short for window {window}")]
    SignalTooShort { len: usize, window: usize },
    #[error("signals differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sample rate {found} Hz does not match the configured {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("invalid STFT setup: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MelScaleConfig {
    pub window_lengths: Vec<usize>,
    pub mel_bins: Vec<usize>,
    pub sample_rate: u32,
}

impl Default for MelScaleConfig {
    fn default() -> Self {
        Self {
            window_lengths: vec![64, 128, 256, 512, 1024, 2048],
            mel_bins: vec![10, 20, 40, 80, 160, 320],
            sample_rate: 24_000,
        }
    }
}

impl MelScaleConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.window_lengths.len() != self.mel_bins.len() || self.window_lengths.is_empty() {
            return Err(MetricError::InvalidConfig(
                "window and mel lists must be non-empty and equal in length",
            ));
        }
        for (&w, &m) in self.window_lengths.iter().zip(&self.mel_bins) {
            if !w.is_power_of_two() || w < 4 {
                return Err(MetricError::InvalidConfig(
                    "window lengths must be powers of two of at least 4",
                ));
            }
            if m == 0 || m > w / 2 {
                return Err(MetricError::InvalidConfig("mel bins must lie in 1..window/2+1"));
            }
        }
        Ok(())
    }
}

/// Complex spectrogram, `frames × bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn frame(&self, t: usize) -> &[Complex<T>] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// Periodic Hann window.
pub fn hann<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Hann-windowed STFT with centered frames: the signal is reflect-padded by
/// `window/2` on both sides and frame `t` starts at `t·hop` of the padded
/// signal. Returns `1 + len/hop` frames of `window/2 + 1` bins.
pub fn stft<T: Scalar>(signal: &[T], window: usize, hop: usize) -> Result<Spectrogram<T>, MetricError> {
    if !window.is_power_of_two() || window < 2 {
        return Err(MetricError::InvalidConfig("window must be a power of two"));
    }
    if hop == 0 {
        return Err(MetricError::InvalidConfig("hop must be positive"));
    }
    let half = window / 2;
    if signal.len() <= half {
        return Err(MetricError::SignalTooShort {
            len: signal.len(),
            window,
        });
    }
    let n = signal.len();
    let padded: Vec<T> = (0..n + 2 * half)
        .map(|i| {
            let j = i as i64 - half as i64;
            let k = if j < 0 {
                -j
            } else if j >= n as i64 {
                2 * (n as i64 - 1) - j
            } else {
                j
            };
            signal[k as usize]
        })
        .collect();
    let frames = 1 + (padded.len() - window) / hop;
    let bins = half + 1;
    let w = hann::<T>(window);
    let fft = FftPlanner::<T>::new().plan_fft_forward(window);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); window];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let seg = &padded[t * hop..t * hop + window];
        for ((b, &x), &wi) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex::new(x * wi, T::zero());
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram { frames, bins, data })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, `n_mels × (window/2 + 1)`,
/// row-major, unnormalized (peak 1). Filter `m` (1-based) rises from mel
/// point `m−1` to `m` and falls to `m+1`, with points `i·mel(fs/2)/n_mels`;
/// the first filter starts at 0 Hz and the last peaks at Nyquist.
pub fn mel_filterbank<T: Scalar>(window: usize, n_mels: usize, sample_rate: u32) -> Vec<T> {
    let bins = window / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let hz: Vec<f64> = (0..=n_mels + 1)
        .map(|i| mel_to_hz(i as f64 * top / n_mels as f64))
        .collect();
    let mut fb = vec![T::zero(); n_mels * bins];
    for m in 0..n_mels {
        let (l, c, r) = (hz[m], hz[m + 1], hz[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / window as f64;
            let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
            fb[m * bins + k] = T::of(w);
        }
    }
    fb
}

/// Mel magnitudes `frames × n_mels` of `signal`.
pub fn mel_spectrogram<T: Scalar>(
    signal: &[T],
    window: usize,
    n_mels: usize,
    sample_rate: u32,
) -> Result<Vec<T>, MetricError> {
    let spec = stft(signal, window, window / 4)?;
    let fb = mel_filterbank::<T>(window, n_mels, sample_rate);
    let mut out = Vec::with_capacity(spec.frames * n_mels);
    for t in 0..spec.frames {
        let mags: Vec<T> = spec.frame(t).iter().map(|c| c.norm()).collect();
        for m in 0..n_mels {
            let row = &fb[m * spec.bins..(m + 1) * spec.bins];
            out.push(row.iter().zip(&mags).map(|(&w, &a)| w * a).sum());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleLoss {
    pub window: usize,
    pub mel_bins: usize,
    /// Mean absolute difference of log mel magnitudes.
    pub log_l1: f64,
    /// Mean squared difference of linear mel magnitudes.
    pub linear_l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MelLoss {
    pub scales: Vec<ScaleLoss>,
    /// Mean of the per-scale totals.
    pub total: f64,
}

/// Multi-scale mel distance: per scale, the mean L1 distance of
/// `ln(max(mel, 1e-5))` plus the mean squared distance of linear mel
/// magnitudes, averaged over scales. Hop is a quarter window.
pub fn multiscale_mel_loss<T: Scalar>(
    reference: &AudioBuffer<T>,
    degraded: &AudioBuffer<T>,
    config: &MelScaleConfig,
) -> Result<MelLoss, MetricError> {
    config.validate()?;
    for a in [reference, degraded] {
        if a.sample_rate != config.sample_rate {
            return Err(MetricError::SampleRateMismatch {
                expected: config.sample_rate,
                found: a.sample_rate,
            });
        }
    }
    if reference.len() != degraded.len() {
        return Err(MetricError::LengthMismatch(reference.len(), degraded.len()));
    }
    let floor = T::of(LOG_FLOOR);
    let mut scales = Vec::with_capacity(config.window_lengths.len());
    for (&window, &n_mels) in config.window_lengths.iter().zip(&config.mel_bins) {
        let a = mel_spectrogram(&reference.samples, window, n_mels, config.sample_rate)?;
        let b = mel_spectrogram(&degraded.samples, window, n_mels, config.sample_rate)?;
        let count = a.len() as f64;
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        for (&x, &y) in a.iter().zip(&b) {
            l1 += (x.max(floor).ln() - y.max(floor).ln()).abs().as_f64();
            l2 += (x - y).powi(2).as_f64();
        }
        let (log_l1, linear_l2) = (l1 / count, l2 / count);
        scales.push(ScaleLoss {
            window,
            mel_bins: n_mels,
            log_l1,
            linear_l2,
            total: log_l1 + linear_l2,
        });
    }
    let total = scales.iter().map(|s| s.total).sum::<f64>() / scales.len() as f64;
    Ok(MelLoss { scales, total })
}
