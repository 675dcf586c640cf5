//! `LRACW` weight container shared by the engine halves and the RVQ.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "LRACW" | version u8 (1) | record count u32
//! record: part u8 | tag u8 | index u32 | rank u8 | dims u32 × rank | f32 × Π dims
//! ```
//!
//! `part` is 0 encoder, 1 decoder, 2 RVQ. `index` is the graph layer for
//! engine records and the quantizer layer for RVQ records. Engine weights
//! have dims `[kernel, in, out]` and biases `[out]`.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::engine::{ConvWeights, EngineError, WeightSet};
use crate::graph::Graph;
use crate::rvq::{RvqCodec, RvqConfig, RvqError, RvqLayer};

pub const MAGIC: &[u8; 5] = b"LRACW";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    Encoder = 0,
    Decoder = 1,
    Rvq = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Weight = 1,
    Bias = 2,
    InProjection = 3,
    InBias = 4,
    OutProjection = 5,
    OutBias = 6,
    Codebook = 7,
    Absorbed = 8,
}

impl Part {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Part::Encoder,
            1 => Part::Decoder,
            2 => Part::Rvq,
            _ => return None,
        })
    }
}

impl Tag {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Tag::Weight,
            2 => Tag::Bias,
            3 => Tag::InProjection,
            4 => Tag::InBias,
            5 => Tag::OutProjection,
            6 => Tag::OutBias,
            7 => Tag::Codebook,
            8 => Tag::Absorbed,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not an LRACW file")]
    BadMagic,
    #[error("unsupported LRACW version {0}")]
    UnsupportedVersion(u8),
    #[error("file ends inside {0}")]
    Truncated(&'static str),
    #[error("{0} bytes after the last record")]
    TrailingBytes(usize),
    #[error("unknown part {0}")]
    UnknownPart(u8),
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("duplicate record {part:?}/{tag:?}/{index}")]
    DuplicateRecord { part: Part, tag: Tag, index: u32 },
    #[error("missing record {part:?}/{tag:?}/{index}")]
    MissingRecord { part: Part, tag: Tag, index: u32 },
    #[error("record {part:?}/{tag:?}/{index} has dims {dims:?}, expected {expected:?}")]
    Shape {
        part: Part,
        tag: Tag,
        index: u32,
        dims: Vec<u32>,
        expected: Vec<u32>,
    },
    #[error("record {part:?}/{tag:?}/{index} does not belong to the graph")]
    UnexpectedRecord { part: Part, tag: Tag, index: u32 },
    #[error("stored absorbed table of layer {0} differs from the recomputed one")]
    AbsorbedMismatch(u32),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Rvq(#[from] RvqError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

/// In-memory container, records keyed by `(part, tag, index)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightFile {
    records: BTreeMap<(Part, Tag, u32), Record>,
}

impl WeightFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_part(&self, part: Part) -> bool {
        self.records.keys().any(|k| k.0 == part)
    }

    pub fn insert(&mut self, part: Part, tag: Tag, index: u32, dims: Vec<u32>, data: Vec<f32>) {
        assert_eq!(
            dims.iter().map(|&d| d as usize).product::<usize>(),
            data.len(),
            "record data does not match its dims"
        );
        self.records.insert((part, tag, index), Record { dims, data });
    }

    pub fn record(&self, part: Part, tag: Tag, index: u32) -> Option<&Record> {
        self.records.get(&(part, tag, index))
    }

    /// Stores an engine half, replacing earlier records of `part`.
    pub fn set_engine(&mut self, part: Part, weights: &WeightSet<f32>) {
        self.records.retain(|k, _| k.0 != part);
        for (i, w) in weights.layers.iter().enumerate() {
            if let Some(w) = w {
                let (k, ci, co) = (w.kernel as u32, w.in_channels as u32, w.out_channels as u32);
                self.insert(part, Tag::Weight, i as u32, vec![k, ci, co], w.weight.clone());
                self.insert(part, Tag::Bias, i as u32, vec![co], w.bias.clone());
            }
        }
    }

    /// Stores the quantizer, including absorbed tables when present.
    pub fn set_rvq(&mut self, codec: &RvqCodec<f32>) {
        self.records.retain(|k, _| k.0 != Part::Rvq);
        let c = codec.config();
        let (e, d, n) = (c.embed_dim as u32, c.code_dim as u32, c.codewords_per_layer as u32);
        for (i, l) in codec.layers().iter().enumerate() {
            let i = i as u32;
            self.insert(Part::Rvq, Tag::InProjection, i, vec![d, e], l.in_proj.clone());
            self.insert(Part::Rvq, Tag::InBias, i, vec![d], l.in_bias.clone());
            self.insert(Part::Rvq, Tag::OutProjection, i, vec![e, d], l.out_proj.clone());
            self.insert(Part::Rvq, Tag::OutBias, i, vec![e], l.out_bias.clone());
            self.insert(Part::Rvq, Tag::Codebook, i, vec![n, d], l.codebook.clone());
            if let Some(t) = l.absorbed() {
                self.insert(Part::Rvq, Tag::Absorbed, i, vec![n, e], t.to_vec());
            }
        }
    }

    fn take(&self, part: Part, tag: Tag, index: u32, expected: Vec<u32>) -> Result<Vec<f32>, ContainerError> {
        let r = self
            .record(part, tag, index)
            .ok_or(ContainerError::MissingRecord { part, tag, index })?;
        if r.dims != expected {
            return Err(ContainerError::Shape {
                part,
                tag,
                index,
                dims: r.dims.clone(),
                expected,
            });
        }
        Ok(r.data.clone())
    }

    /// Rebuilds the weights of one engine half for `graph`.
    pub fn engine_weights(&self, part: Part, graph: &Graph) -> Result<WeightSet<f32>, ContainerError> {
        for &(p, tag, index) in self.records.keys() {
            let belongs = p != part
                || graph
                    .layers
                    .get(index as usize)
                    .is_some_and(|l| l.conv().is_some() && matches!(tag, Tag::Weight | Tag::Bias));
            if !belongs {
                return Err(ContainerError::UnexpectedRecord { part, tag, index });
            }
        }
        let mut layers = Vec::with_capacity(graph.layers.len());
        for (i, l) in graph.layers.iter().enumerate() {
            layers.push(match l.conv() {
                None => None,
                Some(c) => {
                    let (k, ci, co) = (c.kernel as u32, c.in_channels as u32, c.out_channels as u32);
                    Some(ConvWeights {
                        kernel: c.kernel,
                        in_channels: c.in_channels,
                        out_channels: c.out_channels,
                        weight: self.take(part, Tag::Weight, i as u32, vec![k, ci, co])?,
                        bias: self.take(part, Tag::Bias, i as u32, vec![co])?,
                    })
                }
            });
        }
        let set = WeightSet { layers };
        set.check(graph)?;
        Ok(set)
    }

    /// Rebuilds the quantizer. Stored absorbed tables must equal the
    /// tables recomputed from the projections.
    pub fn rvq_codec(&self, config: &RvqConfig) -> Result<RvqCodec<f32>, ContainerError> {
        config.validate()?;
        let (e, d, n) = (
            config.embed_dim as u32,
            config.code_dim as u32,
            config.codewords_per_layer as u32,
        );
        let p = Part::Rvq;
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut absorbed = Vec::new();
        for i in 0..config.num_layers as u32 {
            layers.push(RvqLayer::new(
                self.take(p, Tag::InProjection, i, vec![d, e])?,
                self.take(p, Tag::InBias, i, vec![d])?,
                self.take(p, Tag::OutProjection, i, vec![e, d])?,
                self.take(p, Tag::OutBias, i, vec![e])?,
                self.take(p, Tag::Codebook, i, vec![n, d])?,
            ));
            if self.record(p, Tag::Absorbed, i).is_some() {
                absorbed.push(self.take(p, Tag::Absorbed, i, vec![n, e])?);
            }
        }
        if let Some(&(_, tag, index)) = self
            .records
            .keys()
            .find(|k| k.0 == p && k.2 >= config.num_layers as u32)
        {
            return Err(ContainerError::UnexpectedRecord { part: p, tag, index });
        }
        let codec = RvqCodec::from_layers(*config, layers)?;
        if absorbed.is_empty() {
            return Ok(codec);
        }
        if absorbed.len() != config.num_layers {
            return Err(ContainerError::MissingRecord {
                part: p,
                tag: Tag::Absorbed,
                index: absorbed.len() as u32,
            });
        }
        let codec = codec.absorb_projections();
        for (i, (l, stored)) in codec.layers().iter().zip(&absorbed).enumerate() {
            let same = l
                .absorbed()
                .unwrap()
                .iter()
                .zip(stored)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(ContainerError::AbsorbedMismatch(i as u32));
            }
        }
        Ok(codec)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (&(part, tag, index), r) in &self.records {
            out.push(part as u8);
            out.push(tag as u8);
            out.extend_from_slice(&index.to_le_bytes());
            out.push(r.dims.len() as u8);
            for d in &r.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(5, "magic")? != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = cur.u8("version")?;
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let count = cur.u32("record count")?;
        let mut file = WeightFile::new();
        for _ in 0..count {
            let p = cur.u8("record header")?;
            let part = Part::from_u8(p).ok_or(ContainerError::UnknownPart(p))?;
            let t = cur.u8("record header")?;
            let tag = Tag::from_u8(t).ok_or(ContainerError::UnknownTag(t))?;
            let index = cur.u32("record header")?;
            let rank = cur.u8("record header")?;
            let dims = (0..rank)
                .map(|_| cur.u32("record dims"))
                .collect::<Result<Vec<_>, _>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or(ContainerError::Truncated("record data"))?;
            let raw = cur.take(
                n.checked_mul(4).ok_or(ContainerError::Truncated("record data"))?,
                "record data",
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if file.records.insert((part, tag, index), Record { dims, data }).is_some() {
                return Err(ContainerError::DuplicateRecord { part, tag, index });
            }
        }
        if cur.pos != bytes.len() {
            return Err(ContainerError::TrailingBytes(bytes.len() - cur.pos));
        }
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(ContainerError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, ContainerError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
