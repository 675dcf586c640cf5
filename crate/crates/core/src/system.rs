//! A complete codec: encoder graph, residual quantizer and decoder graph.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::bitstream::{BitstreamError, StreamHeader};
use crate::container::{ContainerError, Part, WeightFile};
use crate::engine::{EngineError, StreamEngine, WeightSet};
use crate::graph::{builtin, parse_graph_config, AnalysisReport, ConfigError, FlopConvention, Graph, GraphError, Role};
use crate::rvq::{rvq_cost, RvqCodec, RvqConfig, RvqCost, RvqError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {source}")]
    Config {
        origin: String,
        #[source]
        source: ConfigError,
    },
    #[error("{origin}: {source}")]
    Graph {
        origin: String,
        #[source]
        source: GraphError,
    },
    #[error("system config: {0}")]
    SystemConfig(#[from] toml::de::Error),
    #[error("{0}")]
    Incompatible(String),
    #[error("audio at {found} Hz, codec expects {expected} Hz")]
    UnsupportedSampleRate { expected: u32, found: u32 },
    #[error("bitstream header does not match the codec: {0}")]
    HeaderMismatch(&'static str),
    #[error(transparent)]
    Rvq(#[from] RvqError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
}

/// Where a config argument came from: a shipped name or a file.
fn read_config(arg: &str, base: Option<&Path>) -> Result<(String, String), SystemError> {
    let stem = arg.strip_suffix(".toml").unwrap_or(arg);
    let path = match base {
        Some(b) => b.join(arg),
        None => PathBuf::from(arg),
    };
    if path.is_file() {
        let text = std::fs::read_to_string(&path).map_err(|source| SystemError::Io {
            path: path.clone(),
            source,
        })?;
        return Ok((path.display().to_string(), text));
    }
    if let Some(text) = builtin::config_text(stem) {
        return Ok((stem.to_string(), text.to_string()));
    }
    Err(SystemError::Io {
        path,
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such config file or shipped config"),
    })
}

fn graph_from_text(origin: &str, text: &str) -> Result<Graph, SystemError> {
    let spec = parse_graph_config(text).map_err(|source| SystemError::Config {
        origin: origin.into(),
        source,
    })?;
    spec.validate().map_err(|source| SystemError::Graph {
        origin: origin.into(),
        source,
    })
}

/// Loads one graph from a file path or shipped name.
pub fn load_graph(arg: &str) -> Result<Graph, SystemError> {
    let (origin, text) = read_config(arg, None)?;
    graph_from_text(&origin, &text)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    name: String,
    encoder: String,
    decoder: String,
    rvq: RvqConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub encoder: Graph,
    pub decoder: Graph,
    pub rvq: RvqConfig,
}

/// A config argument: a whole system or a single graph.
#[derive(Debug, Clone)]
pub enum LoadedConfig {
    System(SystemSpec),
    Graph(Graph),
}

/// Loads a system config, or a single graph config if the file has no
/// `encoder`/`decoder` keys. Graph paths inside a system config resolve
/// against its directory, then against the shipped configs.
pub fn load_config(arg: &str) -> Result<LoadedConfig, SystemError> {
    let (origin, text) = read_config(arg, None)?;
    let value: toml::Table = toml::from_str(&text)?;
    if !value.contains_key("encoder") {
        return Ok(LoadedConfig::Graph(graph_from_text(&origin, &text)?));
    }
    let base = Path::new(&origin)
        .parent()
        .filter(|p| p.is_dir())
        .map(Path::to_path_buf);
    SystemSpec::from_toml(&text, base.as_deref()).map(LoadedConfig::System)
}

pub fn load_system(arg: &str) -> Result<SystemSpec, SystemError> {
    match load_config(arg)? {
        LoadedConfig::System(s) => Ok(s),
        LoadedConfig::Graph(g) => Err(SystemError::Incompatible(format!(
            "{} is a single graph, a system config is needed",
            g.name
        ))),
    }
}

impl SystemSpec {
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, SystemError> {
        let f: SystemFile = toml::from_str(text)?;
        let load = |arg: &str| -> Result<Graph, SystemError> {
            let (origin, text) = read_config(arg, base)?;
            graph_from_text(&origin, &text)
        };
        let spec = Self {
            name: f.name,
            encoder: load(&f.encoder)?,
            decoder: load(&f.decoder)?,
            rvq: f.rvq,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn builtin(name: &str) -> Result<Self, SystemError> {
        load_system(name)
    }

    fn check(&self) -> Result<(), SystemError> {
        self.rvq.validate()?;
        let bad = |m: String| Err(SystemError::Incompatible(m));
        if self.encoder.role != Role::Encoder || self.decoder.role != Role::Decoder {
            return bad("encoder and decoder roles are swapped".into());
        }
        if self.encoder.embedding_dim != self.rvq.embed_dim || self.decoder.embedding_dim != self.rvq.embed_dim {
            return bad(format!(
                "embedding dims differ: encoder {}, rvq {}, decoder {}",
                self.encoder.embedding_dim, self.rvq.embed_dim, self.decoder.embedding_dim
            ));
        }
        if self.encoder.sample_rate != self.decoder.sample_rate {
            return bad("encoder and decoder sample rates differ".into());
        }
        let fr = num_rational::Ratio::from_integer(self.rvq.frame_rate as u64);
        if self.encoder.output_rate() != fr || self.decoder.input_rate() != fr {
            return bad(format!(
                "frame rates differ: encoder {}, rvq {}, decoder {}",
                self.encoder.output_rate(),
                fr,
                self.decoder.input_rate()
            ));
        }
        if self.rvq.frame_rate > u8::MAX as u32 {
            return bad("frame rate does not fit the bitstream header".into());
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> u32 {
        self.encoder.sample_rate
    }

    pub fn header(&self, k: usize) -> Result<StreamHeader, SystemError> {
        self.rvq.check_layers(k)?;
        Ok(StreamHeader::new(
            self.sample_rate(),
            self.rvq.frame_rate as u8,
            k as u8,
            self.rvq.bits_per_index() as u8,
        )?)
    }

    pub fn analyze(&self) -> SystemReport {
        self.analyze_with(FlopConvention::STANDARD)
    }

    pub fn analyze_with(&self, convention: FlopConvention) -> SystemReport {
        let encoder = self.encoder.analyze_with(convention);
        let decoder = self.decoder.analyze_with(convention);
        let rvq = rvq_cost(&self.rvq, false, convention);
        let rvq_absorbed = rvq_cost(&self.rvq, true, convention);
        let overall = OverallRow {
            buffering_latency_ms: encoder.buffering_latency_ms + decoder.buffering_latency_ms,
            algorithmic_latency_ms: round2(encoder.lookahead_ms + decoder.lookahead_ms),
            total_mflops: encoder.total_mflops + rvq_absorbed.total_mflops + decoder.total_mflops,
            total_mflops_unabsorbed: encoder.total_mflops + rvq.total_mflops + decoder.total_mflops,
            receive_side_mflops: decoder.total_mflops,
        };
        SystemReport {
            name: self.name.clone(),
            encoder,
            rvq,
            rvq_absorbed,
            decoder,
            overall,
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallRow {
    pub buffering_latency_ms: f64,
    /// Sum of the component lookaheads (the buffering row is separate).
    pub algorithmic_latency_ms: f64,
    /// Encoder + absorbed RVQ + decoder.
    pub total_mflops: f64,
    pub total_mflops_unabsorbed: f64,
    pub receive_side_mflops: f64,
}

/// Latency and complexity of a whole system, laid out like a per-track
/// summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemReport {
    pub name: String,
    pub encoder: AnalysisReport,
    pub rvq: RvqCost,
    pub rvq_absorbed: RvqCost,
    pub decoder: AnalysisReport,
    pub overall: OverallRow,
}

impl SystemReport {
    /// Rows: buffering, algorithmic (lookahead) latency and MFLOPS for the
    /// encoder, absorbed RVQ, decoder and overall.
    pub fn table(&self) -> String {
        let (e, r, d, o) = (&self.encoder, &self.rvq_absorbed, &self.decoder, &self.overall);
        let mut s = format!("{}\n", self.name);
        s += &format!(
            "{:<28}{:>10}{:>10}{:>10}{:>10}\n",
            "", "Encoder", "RVQ", "Decoder", "Overall"
        );
        s += &format!(
            "{:<28}{:>10}{:>10}{:>10}{:>10}\n",
            "Buffering Latency (ms)",
            e.buffering_latency_ms,
            r.buffering_latency_ms,
            d.buffering_latency_ms,
            o.buffering_latency_ms
        );
        s += &format!(
            "{:<28}{:>10}{:>10}{:>10}{:>10}\n",
            "Algorithmic Latency (ms)",
            e.lookahead_ms,
            r.algorithmic_latency_ms,
            d.lookahead_ms,
            o.algorithmic_latency_ms
        );
        s += &format!(
            "{:<28}{:>10.2}{:>10.2}{:>10.2}{:>10.2}\n",
            "Compute Complexity (MFLOPS)", e.total_mflops, r.total_mflops, d.total_mflops, o.total_mflops
        );
        s += &format!(
            "RVQ without absorption: {:.2} MFLOPS (overall {:.2})\n",
            self.rvq.total_mflops, o.total_mflops_unabsorbed
        );
        s += &format!(
            "encoder receptive field {} samples, stride {}; biases excluded from FLOPs\n",
            e.receptive_field, e.overall_stride
        );
        s
    }
}

/// Encoder, quantizer and decoder ready to run.
#[derive(Debug, Clone)]
pub struct Codec<T> {
    spec: SystemSpec,
    encoder: StreamEngine<T>,
    decoder: StreamEngine<T>,
    rvq: RvqCodec<T>,
}

impl<T: Scalar> Codec<T> {
    /// Seeded weights: encoder from `seed`, decoder from `seed + 1`, RVQ
    /// from `seed + 2`.
    pub fn from_seed(spec: SystemSpec, seed: u64) -> Self {
        let encoder = StreamEngine::with_seed(spec.encoder.clone(), seed);
        let decoder = StreamEngine::with_seed(spec.decoder.clone(), seed.wrapping_add(1));
        let rvq = RvqCodec::random(spec.rvq, seed.wrapping_add(2)).expect("checked config");
        Self {
            spec,
            encoder,
            decoder,
            rvq,
        }
    }

    pub fn from_parts(
        spec: SystemSpec,
        encoder: WeightSet<T>,
        decoder: WeightSet<T>,
        rvq: RvqCodec<T>,
    ) -> Result<Self, SystemError> {
        if *rvq.config() != spec.rvq {
            return Err(SystemError::Incompatible(
                "RVQ tables do not match the system config".into(),
            ));
        }
        Ok(Self {
            encoder: StreamEngine::new(spec.encoder.clone(), encoder)?,
            decoder: StreamEngine::new(spec.decoder.clone(), decoder)?,
            rvq,
            spec,
        })
    }

    /// Loads all three parts from an `LRACW` container.
    pub fn from_weight_file(spec: SystemSpec, file: &WeightFile) -> Result<Self, SystemError> {
        let enc = file.engine_weights(Part::Encoder, &spec.encoder)?.cast();
        let dec = file.engine_weights(Part::Decoder, &spec.decoder)?.cast();
        let rvq = file.rvq_codec(&spec.rvq)?.cast();
        Self::from_parts(spec, enc, dec, rvq)
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut f = WeightFile::new();
        f.set_engine(Part::Encoder, &self.encoder.weights().cast());
        f.set_engine(Part::Decoder, &self.decoder.weights().cast());
        f.set_rvq(&self.rvq.cast());
        f
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn rvq(&self) -> &RvqCodec<T> {
        &self.rvq
    }

    /// Embeddings for `audio` (interleaved, `embed_dim` per frame).
    pub fn embed(&mut self, audio: &AudioBuffer<T>) -> Result<Vec<T>, SystemError> {
        let expected = self.spec.sample_rate();
        if audio.sample_rate != expected {
            return Err(SystemError::UnsupportedSampleRate {
                expected,
                found: audio.sample_rate,
            });
        }
        self.encoder.reset();
        let mut frames = self.encoder.push(&audio.samples);
        frames.extend(self.encoder.flush());
        Ok(frames)
    }

    /// Index frames for `audio` with `k` active layers; one frame per
    /// complete stride of input.
    pub fn encode(&mut self, audio: &AudioBuffer<T>, k: usize) -> Result<Vec<Vec<u32>>, SystemError> {
        self.spec.rvq.check_layers(k)?;
        let frames = self.embed(audio)?;
        Ok(self
            .rvq
            .quantize_frames(&frames, k)?
            .into_iter()
            .map(|q| q.indices)
            .collect())
    }

    /// Audio from index frames; `stride` samples per frame.
    pub fn decode(&mut self, frames: &[Vec<u32>]) -> Result<AudioBuffer<T>, SystemError> {
        let embeddings = self.rvq.dequantize_frames(frames)?;
        Ok(self.synthesize(&embeddings))
    }

    /// Runs the decoder on interleaved embeddings.
    pub fn synthesize(&mut self, embeddings: &[T]) -> AudioBuffer<T> {
        self.decoder.reset();
        let mut samples = self.decoder.push(embeddings);
        samples.extend(self.decoder.flush());
        AudioBuffer {
            samples,
            sample_rate: self.spec.sample_rate(),
        }
    }

    /// Checks that a bitstream header was produced for this codec.
    pub fn check_header(&self, h: &StreamHeader) -> Result<(), SystemError> {
        if h.sample_rate != self.spec.sample_rate() {
            return Err(SystemError::HeaderMismatch("sample rate"));
        }
        if h.frame_rate as u32 != self.spec.rvq.frame_rate {
            return Err(SystemError::HeaderMismatch("frame rate"));
        }
        if h.bits_per_index as u32 != self.spec.rvq.bits_per_index() {
            return Err(SystemError::HeaderMismatch("bits per index"));
        }
        if h.num_layers as usize > self.spec.rvq.num_layers {
            return Err(SystemError::HeaderMismatch("more layers than the quantizer has"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_system_tables() {
        let r1 = SystemSpec::builtin("track1").unwrap().analyze();
        assert_eq!(r1.overall.buffering_latency_ms, 10.0);
        assert_eq!(r1.overall.algorithmic_latency_ms, 20.0);
        assert!((r1.overall.total_mflops - 691.35).abs() < 0.01);
        let r2 = SystemSpec::builtin("track2").unwrap().analyze();
        assert_eq!(r2.overall.buffering_latency_ms, 10.0);
        assert_eq!(r2.overall.algorithmic_latency_ms, 40.0);
        assert!((r2.overall.total_mflops - 2546.2).abs() < 0.05);
        assert!(r1.table().contains("Compute Complexity (MFLOPS)"));
    }

    #[test]
    fn single_graph_configs_are_recognised() {
        assert!(matches!(load_config("track2_decoder").unwrap(), LoadedConfig::Graph(_)));
        assert!(load_system("track2_decoder").is_err());
        assert!(load_config("no_such_config").is_err());
    }

    #[test]
    fn incompatible_halves_are_rejected() {
        let text = builtin::TRACK1_SYSTEM.replace("track1_decoder", "track2_decoder");
        assert!(matches!(
            SystemSpec::from_toml(&text, None),
            Err(SystemError::Incompatible(_))
        ));
    }

    #[test]
    fn encode_decode_lengths() {
        let spec = SystemSpec::builtin("track1").unwrap();
        let mut codec = Codec::<f32>::from_seed(spec, 0);
        let audio = AudioBuffer::new((0..2400 + 17).map(|i| (i as f32 * 0.05).sin() * 0.3).collect(), 24_000).unwrap();
        let frames = codec.encode(&audio, 3).unwrap();
        assert_eq!(frames.len(), 10);
        assert!(frames.iter().all(|f| f.len() == 3));
        let out = codec.decode(&frames).unwrap();
        assert_eq!(out.len(), 2400);
        assert!(out.samples.iter().all(|v| v.abs() <= 1.0));
        assert!(matches!(
            codec.encode(&AudioBuffer::silence(480, 16_000), 1),
            Err(SystemError::UnsupportedSampleRate { .. })
        ));
    }

    #[test]
    fn weight_file_round_trip_preserves_codec() {
        let spec = SystemSpec::builtin("track1").unwrap();
        let codec = Codec::<f32>::from_seed(spec.clone(), 5);
        let file = WeightFile::from_bytes(&codec.to_weight_file().to_bytes()).unwrap();
        let mut a = codec.clone();
        let mut b = Codec::<f32>::from_weight_file(spec, &file).unwrap();
        let audio = AudioBuffer::new((0..960).map(|i| (i as f32 * 0.01).cos() * 0.2).collect(), 24_000).unwrap();
        assert_eq!(a.encode(&audio, 6).unwrap(), b.encode(&audio, 6).unwrap());
    }
}
