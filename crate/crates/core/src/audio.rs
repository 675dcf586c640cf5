//! Mono sample buffers and WAV file I/O.

use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("expected mono audio, found {0} channels")]
    NotMono(u16),
    #[error("unsupported WAV encoding: {bits}-bit {format}")]
    UnsupportedFormat { bits: u16, format: &'static str },
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite { index });
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![T::zero(); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square over the whole buffer (0 when empty).
    pub fn power(&self) -> T {
        mean_square(&self.samples)
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> AudioBuffer<U> {
        AudioBuffer {
            samples: self.samples.iter().map(|&s| U::of(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub(crate) fn mean_square<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().map(|&v| v * v).sum::<T>() / T::of(x.len() as f64)
}

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Reads a mono WAV file (16-bit PCM or 32-bit float) into `[-1, 1]` samples.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer<f32>, AudioError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::NotMono(spec.channels));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<Vec<_>, _>>()?,
        (hound::SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<Vec<_>, _>>()?,
        (hound::SampleFormat::Int, bits) => return Err(AudioError::UnsupportedFormat { bits, format: "int" }),
        (hound::SampleFormat::Float, bits) => return Err(AudioError::UnsupportedFormat { bits, format: "float" }),
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes a mono WAV file. 16-bit output is clipped to `[-1, 1]`.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer<f32>, encoding: WavEncoding) -> Result<(), AudioError> {
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        match encoding {
            WavEncoding::Pcm16 => writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
            WavEncoding::Float32 => writer.write_sample(s)?,
        }
    }
    writer.finalize()?;
    Ok(())
}
