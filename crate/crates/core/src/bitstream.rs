//! Framed bitstream of RVQ indices (`.lracb`).
//!
//! Layout (little-endian where multi-byte):
//!
//! | offset | size | field            |
//! |--------|------|------------------|
//! | 0      | 4    | magic `LRAC`     |
//! | 4      | 1    | version (1)      |
//! | 5      | 4    | sample rate (Hz) |
//! | 9      | 1    | frame rate (Hz)  |
//! | 10     | 1    | active layers k  |
//! | 11     | 1    | bits per index   |
//!
//! The header is followed by frames of `ceil(k * bits / 8)` bytes. Each
//! frame holds `k` indices packed MSB-first and zero-padded to a byte
//! boundary.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"LRAC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const MAX_LAYERS: u8 = 6;

#[derive(Debug, Error)]
pub enum BitstreamError {
    #[error("not an LRAC bitstream (bad magic)")]
    BadMagic,
    #[error("unsupported bitstream version {0}")]
    UnsupportedVersion(u8),
    #[error("header is {0} bytes, expected {HEADER_LEN}")]
    TruncatedHeader(usize),
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
    #[error("index {index} at position {position} does not fit in {bits} bits")]
    IndexOverflow { position: usize, index: u32, bits: u8 },
    #[error("frame is {found} bytes, expected {expected}")]
    TruncatedFrame { expected: usize, found: usize },
    #[error("frame is {found} bytes, expected {expected}")]
    OversizedFrame { expected: usize, found: usize },
    #[error("frame padding bits are not zero")]
    NonzeroPadding,
    #[error("frame holds {found} indices, header declares {expected}")]
    LayerCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub sample_rate: u32,
    pub frame_rate: u8,
    pub num_layers: u8,
    pub bits_per_index: u8,
}

impl StreamHeader {
    pub fn new(sample_rate: u32, frame_rate: u8, num_layers: u8, bits_per_index: u8) -> Result<Self, BitstreamError> {
        let h = Self {
            sample_rate,
            frame_rate,
            num_layers,
            bits_per_index,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), BitstreamError> {
        if self.sample_rate == 0 {
            return Err(BitstreamError::InvalidHeader("sample rate is zero"));
        }
        if self.frame_rate == 0 {
            return Err(BitstreamError::InvalidHeader("frame rate is zero"));
        }
        if self.num_layers == 0 || self.num_layers > MAX_LAYERS {
            return Err(BitstreamError::InvalidHeader("layer count outside 1..=6"));
        }
        if self.bits_per_index == 0 || self.bits_per_index > 24 {
            return Err(BitstreamError::InvalidHeader("bits per index outside 1..=24"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(MAGIC);
        b[4] = VERSION;
        b[5..9].copy_from_slice(&self.sample_rate.to_le_bytes());
        b[9] = self.frame_rate;
        b[10] = self.num_layers;
        b[11] = self.bits_per_index;
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, BitstreamError> {
        if b.len() < HEADER_LEN {
            if b.len() >= 4 && &b[..4] != MAGIC {
                return Err(BitstreamError::BadMagic);
            }
            return Err(BitstreamError::TruncatedHeader(b.len()));
        }
        if &b[..4] != MAGIC {
            return Err(BitstreamError::BadMagic);
        }
        if b[4] != VERSION {
            return Err(BitstreamError::UnsupportedVersion(b[4]));
        }
        let h = Self {
            sample_rate: u32::from_le_bytes(b[5..9].try_into().unwrap()),
            frame_rate: b[9],
            num_layers: b[10],
            bits_per_index: b[11],
        };
        h.validate()?;
        Ok(h)
    }

    pub fn frame_bytes(&self) -> usize {
        frame_bytes(self.num_layers as usize, self.bits_per_index)
    }
}

/// Payload size of one frame.
pub fn frame_bytes(k: usize, bits_per_index: u8) -> usize {
    (k * bits_per_index as usize).div_ceil(8)
}

/// Information bitrate: `k · bits_per_index · frame_rate` bps.
pub fn stream_bitrate(h: &StreamHeader) -> u64 {
    h.num_layers as u64 * h.bits_per_index as u64 * h.frame_rate as u64
}

/// Bitrate on the wire including frame padding (headers excluded).
pub fn wire_bitrate(h: &StreamHeader) -> u64 {
    h.frame_bytes() as u64 * 8 * h.frame_rate as u64
}

pub fn pack_frame(indices: &[u32], bits_per_index: u8) -> Result<Vec<u8>, BitstreamError> {
    let bits = bits_per_index as u32;
    let mut out = Vec::with_capacity(frame_bytes(indices.len(), bits_per_index));
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for (position, &index) in indices.iter().enumerate() {
        if bits < 32 && index >> bits != 0 {
            return Err(BitstreamError::IndexOverflow {
                position,
                index,
                bits: bits_per_index,
            });
        }
        acc = (acc << bits) | index as u64;
        filled += bits;
        while filled >= 8 {
            filled -= 8;
            out.push((acc >> filled) as u8);
        }
    }
    if filled > 0 {
        out.push((acc << (8 - filled)) as u8);
    }
    Ok(out)
}

pub fn unpack_frame(bytes: &[u8], k: usize, bits_per_index: u8) -> Result<Vec<u32>, BitstreamError> {
    let expected = frame_bytes(k, bits_per_index);
    if bytes.len() < expected {
        return Err(BitstreamError::TruncatedFrame {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(BitstreamError::OversizedFrame {
            expected,
            found: bytes.len(),
        });
    }
    let bits = bits_per_index as u32;
    let mask = (1u64 << bits) - 1;
    let mut out = Vec::with_capacity(k);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut next = bytes.iter();
    for _ in 0..k {
        while filled < bits {
            acc = (acc << 8) | *next.next().expect("length checked") as u64;
            filled += 8;
        }
        filled -= bits;
        out.push(((acc >> filled) & mask) as u32);
    }
    if acc & ((1u64 << filled) - 1) != 0 {
        return Err(BitstreamError::NonzeroPadding);
    }
    Ok(out)
}

/// Header followed by every frame.
pub fn encode_stream(header: &StreamHeader, frames: &[Vec<u32>]) -> Result<Vec<u8>, BitstreamError> {
    let mut out = Vec::with_capacity(HEADER_LEN + frames.len() * header.frame_bytes());
    let mut w = StreamWriter::new(&mut out, *header)?;
    for f in frames {
        w.write_frame(f)?;
    }
    Ok(out)
}

pub fn decode_stream(bytes: &[u8]) -> Result<(StreamHeader, Vec<Vec<u32>>), BitstreamError> {
    let mut r = StreamReader::new(bytes)?;
    let header = *r.header();
    let mut frames = Vec::new();
    while let Some(f) = r.next_frame()? {
        frames.push(f);
    }
    Ok((header, frames))
}

pub struct StreamWriter<W> {
    inner: W,
    header: StreamHeader,
    frames: u64,
}

impl<W: Write> StreamWriter<W> {
    /// Validates and writes the header.
    pub fn new(mut inner: W, header: StreamHeader) -> Result<Self, BitstreamError> {
        header.validate()?;
        inner.write_all(&header.to_bytes())?;
        Ok(Self {
            inner,
            header,
            frames: 0,
        })
    }

    pub fn write_frame(&mut self, indices: &[u32]) -> Result<(), BitstreamError> {
        let k = self.header.num_layers as usize;
        if indices.len() != k {
            return Err(BitstreamError::LayerCountMismatch {
                expected: k,
                found: indices.len(),
            });
        }
        self.inner
            .write_all(&pack_frame(indices, self.header.bits_per_index)?)?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct StreamReader<R> {
    inner: R,
    header: StreamHeader,
    buf: Vec<u8>,
}

impl<R: Read> StreamReader<R> {
    /// Reads and validates the header.
    pub fn new(mut inner: R) -> Result<Self, BitstreamError> {
        let mut b = [0u8; HEADER_LEN];
        let n = read_full(&mut inner, &mut b)?;
        let header = StreamHeader::from_bytes(&b[..n])?;
        Ok(Self {
            inner,
            buf: vec![0; header.frame_bytes()],
            header,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Next frame, `None` at a clean end of stream.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u32>>, BitstreamError> {
        let n = read_full(&mut self.inner, &mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        let h = self.header;
        unpack_frame(&self.buf[..n], h.num_layers as usize, h.bits_per_index).map(Some)
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(m) => n += m,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

/// Parameters of the committed golden streams: `k` active layers, 10-bit
/// indices, 24 kHz, 100 Hz frames, 25 frames drawn by ChaCha8 from seed
/// `1000 + k`.
pub fn golden_stream(k: u8) -> (StreamHeader, Vec<Vec<u32>>) {
    let header = StreamHeader::new(24_000, 100, k, 10).expect("valid golden header");
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
    let frames = (0..25)
        .map(|_| (0..k).map(|_| rng.random_range(0..1024u32)).collect())
        .collect();
    (header, frames)
}

/// Golden file bytes committed to the repository, for `k` in 1..=6.
pub fn golden_bytes(k: u8) -> &'static [u8] {
    const FILES: [&[u8]; 6] = [
        include_bytes!("../tests/golden/k1.lracb"),
        include_bytes!("../tests/golden/k2.lracb"),
        include_bytes!("../tests/golden/k3.lracb"),
        include_bytes!("../tests/golden/k4.lracb"),
        include_bytes!("../tests/golden/k5.lracb"),
        include_bytes!("../tests/golden/k6.lracb"),
    ];
    FILES[k as usize - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};
    use rand::Rng;

    #[test]
    fn hand_layout() {
        let b = pack_frame(&[1023, 0, 0, 0, 0, 0], 10).unwrap();
        assert_eq!(b, [0xFF, 0xC0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(pack_frame(&[0; 6], 10).unwrap(), [0u8; 8]);
        assert_eq!(pack_frame(&[1, 2], 10).unwrap(), [0x00, 0x40, 0x20]);
    }

    #[test]
    fn frame_sizes() {
        assert_eq!(frame_bytes(6, 10), 8);
        assert_eq!(frame_bytes(1, 10), 2);
        assert_eq!(frame_bytes(4, 10), 5);
    }

    #[test]
    fn overflow_truncation_padding() {
        assert!(matches!(
            pack_frame(&[0, 1024], 10),
            Err(BitstreamError::IndexOverflow {
                position: 1,
                index: 1024,
                bits: 10
            })
        ));
        let b = pack_frame(&[5, 6, 7], 10).unwrap();
        assert!(matches!(
            unpack_frame(&b[..3], 3, 10),
            Err(BitstreamError::TruncatedFrame { expected: 4, found: 3 })
        ));
        let mut bad = b.clone();
        bad[3] |= 1;
        assert!(matches!(unpack_frame(&bad, 3, 10), Err(BitstreamError::NonzeroPadding)));
        let mut long = b;
        long.push(0);
        assert!(matches!(
            unpack_frame(&long, 3, 10),
            Err(BitstreamError::OversizedFrame { .. })
        ));
    }

    #[test]
    fn bitrates() {
        let h = StreamHeader::new(24_000, 100, 6, 10).unwrap();
        assert_eq!(stream_bitrate(&h), 6000);
        assert_eq!(wire_bitrate(&h), 6400);
        assert_eq!(stream_bitrate(&StreamHeader { num_layers: 1, ..h }), 1000);
        assert_eq!(stream_bitrate(&StreamHeader { num_layers: 3, ..h }), 3000);
    }

    #[test]
    fn header_rejections() {
        let h = StreamHeader::new(24_000, 100, 6, 10).unwrap();
        let good = h.to_bytes();
        assert_eq!(StreamHeader::from_bytes(&good).unwrap(), h);
        let mut b = good;
        b[0] = b'X';
        assert!(matches!(StreamHeader::from_bytes(&b), Err(BitstreamError::BadMagic)));
        let mut b = good;
        b[4] = 2;
        assert!(matches!(
            StreamHeader::from_bytes(&b),
            Err(BitstreamError::UnsupportedVersion(2))
        ));
        let mut b = good;
        b[10] = 7;
        assert!(matches!(
            StreamHeader::from_bytes(&b),
            Err(BitstreamError::InvalidHeader(_))
        ));
        assert!(matches!(
            StreamHeader::from_bytes(&good[..5]),
            Err(BitstreamError::TruncatedHeader(5))
        ));
    }

    #[test]
    fn ten_seconds_at_six_layers() {
        let h = StreamHeader::new(24_000, 100, 6, 10).unwrap();
        let bytes = encode_stream(&h, &vec![vec![1023; 6]; 1000]).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8000);
    }

    #[test]
    fn partial_trailing_frame_is_truncation() {
        let h = StreamHeader::new(24_000, 100, 2, 10).unwrap();
        let mut bytes = encode_stream(&h, &[vec![1, 2], vec![3, 4]]).unwrap();
        bytes.pop();
        assert!(matches!(
            decode_stream(&bytes),
            Err(BitstreamError::TruncatedFrame { .. })
        ));
    }

    #[test]
    fn golden_files_match_generator() {
        for k in 1..=6 {
            let (h, frames) = golden_stream(k);
            assert_eq!(encode_stream(&h, &frames).unwrap(), golden_bytes(k), "k={k}");
        }
    }

    #[test]
    fn exhaustive_single_index_round_trip() {
        for i in 0..1024u32 {
            let b = pack_frame(&[i], 10).unwrap();
            assert_eq!(unpack_frame(&b, 1, 10).unwrap(), [i]);
        }
    }

    proptest! {
        #[test]
        fn stream_round_trip(k in 1u8..=6, bits in 1u8..=24, frames in 0usize..20, seed in any::<u64>()) {
            let h = StreamHeader::new(16_000, 50, k, bits).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<Vec<u32>> = (0..frames)
                .map(|_| (0..k).map(|_| rng.random_range(0..1u32 << bits)).collect())
                .collect();
            let bytes = encode_stream(&h, &data).unwrap();
            prop_assert_eq!(bytes.len(), HEADER_LEN + frames * h.frame_bytes());
            let (h2, back) = decode_stream(&bytes).unwrap();
            prop_assert_eq!(h2, h);
            prop_assert_eq!(back, data);
        }
    }
}
