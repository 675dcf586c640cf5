//! Residual vector quantization with per-layer projections.
//!
//! Each layer projects the running residual from `embed_dim` down to
//! `code_dim`, picks the nearest codeword, projects it back and subtracts
//! it. Residuals stay in the embedding space.

mod cost;
mod ema;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{rvq_cost, RvqCost};
pub use ema::{commitment_loss, ema_fit_step, sample_active_layers, EmaReport, EmaStats};

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RvqError {
    #[error("active layer count {k} outside 1..={max}")]
    LayerCountOutOfRange { k: usize, max: usize },
    #[error("index {index} out of range for layer {layer}")]
    IndexOutOfRange { layer: usize, index: u32 },
    #[error("expected a vector of length {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid RVQ config: {0}")]
    InvalidConfig(&'static str),
    #[error("RVQ tables for layer {layer} contain a non-finite value")]
    NonFinite { layer: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RvqConfig {
    pub num_layers: usize,
    pub codewords_per_layer: usize,
    pub embed_dim: usize,
    pub code_dim: usize,
    pub frame_rate: u32,
}

impl RvqConfig {
    pub const TRACK1: RvqConfig = RvqConfig {
        num_layers: 6,
        codewords_per_layer: 1024,
        embed_dim: 160,
        code_dim: 12,
        frame_rate: 100,
    };

    pub const TRACK2: RvqConfig = RvqConfig {
        num_layers: 6,
        codewords_per_layer: 1024,
        embed_dim: 320,
        code_dim: 24,
        frame_rate: 100,
    };

    pub fn validate(&self) -> Result<(), RvqError> {
        if self.num_layers == 0 {
            return Err(RvqError::InvalidConfig("num_layers must be positive"));
        }
        if !self.codewords_per_layer.is_power_of_two() || self.codewords_per_layer < 2 {
            return Err(RvqError::InvalidConfig(
                "codewords_per_layer must be a power of two of at least 2",
            ));
        }
        if self.codewords_per_layer > 1 << 24 {
            return Err(RvqError::InvalidConfig("codewords_per_layer above 2^24"));
        }
        if self.embed_dim == 0 || self.code_dim == 0 {
            return Err(RvqError::InvalidConfig("dimensions must be positive"));
        }
        if self.frame_rate == 0 {
            return Err(RvqError::InvalidConfig("frame_rate must be positive"));
        }
        Ok(())
    }

    pub fn bits_per_index(&self) -> u32 {
        self.codewords_per_layer.trailing_zeros()
    }

    /// Information bitrate (bps) with `k` active layers.
    pub fn bitrate(&self, k: usize) -> u64 {
        self.bits_per_index() as u64 * k as u64 * self.frame_rate as u64
    }

    pub fn check_layers(&self, k: usize) -> Result<(), RvqError> {
        if k == 0 || k > self.num_layers {
            return Err(RvqError::LayerCountOutOfRange {
                k,
                max: self.num_layers,
            });
        }
        Ok(())
    }
}

/// Tables of one quantizer layer. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqLayer<T> {
    /// `[code_dim][embed_dim]`
    pub in_proj: Vec<T>,
    pub in_bias: Vec<T>,
    /// `[embed_dim][code_dim]`
    pub out_proj: Vec<T>,
    pub out_bias: Vec<T>,
    /// `[codewords][code_dim]`
    pub codebook: Vec<T>,
    norms: Vec<T>,
    /// `[codewords][embed_dim]`: out projection (with bias) of every codeword.
    absorbed: Option<Vec<T>>,
}

impl<T: Scalar> RvqLayer<T> {
    pub fn new(in_proj: Vec<T>, in_bias: Vec<T>, out_proj: Vec<T>, out_bias: Vec<T>, codebook: Vec<T>) -> Self {
        let mut layer = Self {
            in_proj,
            in_bias,
            out_proj,
            out_bias,
            codebook,
            norms: Vec::new(),
            absorbed: None,
        };
        layer.refresh_norms_raw();
        layer
    }

    fn code_dim(&self) -> usize {
        self.in_bias.len()
    }

    pub fn codeword(&self, i: usize) -> &[T] {
        let d = self.code_dim();
        &self.codebook[i * d..(i + 1) * d]
    }

    pub fn norms(&self) -> &[T] {
        &self.norms
    }

    pub fn absorbed(&self) -> Option<&[T]> {
        self.absorbed.as_deref()
    }

    fn refresh_norms_raw(&mut self) {
        let d = self.code_dim().max(1);
        self.norms = self
            .codebook
            .chunks_exact(d)
            .map(|c| c.iter().map(|&v| v * v).sum())
            .collect();
    }

    /// Recomputes the norms and, if present, the absorbed table after the
    /// codebook or output projection changed.
    pub fn refresh(&mut self) {
        self.refresh_norms_raw();
        if self.absorbed.is_some() {
            self.absorbed = Some(self.absorbed_table());
        }
    }

    fn absorbed_table(&self) -> Vec<T> {
        let e = self.out_bias.len();
        let n = self.norms.len();
        let mut table = vec![T::zero(); n * e];
        for i in 0..n {
            self.project_out(self.codeword(i), &mut table[i * e..(i + 1) * e]);
        }
        table
    }

    fn project_in(&self, r: &[T], z: &mut [T]) {
        let e = r.len();
        for (d, zd) in z.iter_mut().enumerate() {
            let row = &self.in_proj[d * e..(d + 1) * e];
            *zd = self.in_bias[d] + row.iter().zip(r).map(|(&w, &x)| w * x).sum::<T>();
        }
    }

    fn project_out(&self, c: &[T], v: &mut [T]) {
        let d = c.len();
        for (e, ve) in v.iter_mut().enumerate() {
            let row = &self.out_proj[e * d..(e + 1) * d];
            *ve = self.out_bias[e] + row.iter().zip(c).map(|(&w, &x)| w * x).sum::<T>();
        }
    }

    /// Nearest codeword to `z` by `‖c‖² − 2 z·c`; the lowest index wins ties.
    pub fn nearest(&self, z: &[T]) -> usize {
        let two = T::of(2.0);
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, (c, &n)) in self.codebook.chunks_exact(z.len()).zip(&self.norms).enumerate() {
            let dot: T = c.iter().zip(z).map(|(&a, &b)| a * b).sum();
            let dist = n - two * dot;
            if dist < best_d {
                best_d = dist;
                best = i;
            }
        }
        best
    }

    /// Embedding-space vector for codeword `i`.
    fn back_project(&self, i: usize, v: &mut [T]) {
        match &self.absorbed {
            Some(t) => v.copy_from_slice(&t[i * v.len()..(i + 1) * v.len()]),
            None => self.project_out(self.codeword(i), v),
        }
    }
}

/// Output of [`RvqCodec::quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized<T> {
    pub indices: Vec<u32>,
    pub quantized: Vec<T>,
    /// `‖residual‖` before each active layer and after the last one.
    pub residual_norms: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvqCodec<T> {
    config: RvqConfig,
    layers: Vec<RvqLayer<T>>,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect()
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

impl<T: Scalar> RvqCodec<T> {
    /// Builds a codec from explicit layer tables, checking every shape.
    pub fn from_layers(config: RvqConfig, layers: Vec<RvqLayer<T>>) -> Result<Self, RvqError> {
        config.validate()?;
        if layers.len() != config.num_layers {
            return Err(RvqError::DimensionMismatch {
                expected: config.num_layers,
                found: layers.len(),
            });
        }
        let (e, d, n) = (config.embed_dim, config.code_dim, config.codewords_per_layer);
        for (li, l) in layers.iter().enumerate() {
            for (found, expected) in [
                (l.in_proj.len(), d * e),
                (l.in_bias.len(), d),
                (l.out_proj.len(), e * d),
                (l.out_bias.len(), e),
                (l.codebook.len(), n * d),
            ] {
                if found != expected {
                    return Err(RvqError::DimensionMismatch { expected, found });
                }
            }
            if let Some(t) = &l.absorbed {
                if t.len() != n * e {
                    return Err(RvqError::DimensionMismatch {
                        expected: n * e,
                        found: t.len(),
                    });
                }
            }
            let tables = [&l.in_proj, &l.in_bias, &l.out_proj, &l.out_bias, &l.codebook];
            if tables.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
                return Err(RvqError::NonFinite { layer: li });
            }
        }
        Ok(Self { config, layers })
    }

    /// Seeded initialization: projections and their biases uniform in
    /// `±1/sqrt(fan_in)`, codewords uniform in `±1`.
    pub fn random(config: RvqConfig, seed: u64) -> Result<Self, RvqError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, d, n) = (config.embed_dim, config.code_dim, config.codewords_per_layer);
        let be = 1.0 / (e as f64).sqrt();
        let bd = 1.0 / (d as f64).sqrt();
        let layers = (0..config.num_layers)
            .map(|_| {
                let in_proj = uniform(&mut rng, d * e, be);
                let in_bias = uniform(&mut rng, d, be);
                let out_proj = uniform(&mut rng, e * d, bd);
                let out_bias = uniform(&mut rng, e, bd);
                let codebook = uniform(&mut rng, n * d, 1.0);
                RvqLayer::new(in_proj, in_bias, out_proj, out_bias, codebook)
            })
            .collect();
        Self::from_layers(config, layers)
    }

    /// Projections with orthonormal rows (`out_proj = in_projᵀ`), zero
    /// biases and random codewords scaled by `codeword_scale`.
    /// Requires `code_dim <= embed_dim`.
    pub fn orthonormal(config: RvqConfig, seed: u64, codeword_scale: f64) -> Result<Self, RvqError> {
        config.validate()?;
        let (e, d, n) = (config.embed_dim, config.code_dim, config.codewords_per_layer);
        if d > e {
            return Err(RvqError::InvalidConfig(
                "orthonormal projections need code_dim <= embed_dim",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..config.num_layers)
            .map(|_| {
                let rows = orthonormal_rows(&mut rng, d, e);
                let mut out_proj = vec![0.0; e * d];
                for i in 0..d {
                    for j in 0..e {
                        out_proj[j * d + i] = rows[i * e + j];
                    }
                }
                let codebook = uniform(&mut rng, n * d, codeword_scale);
                RvqLayer::new(
                    rows.into_iter().map(T::of).collect(),
                    vec![T::zero(); d],
                    out_proj.into_iter().map(T::of).collect(),
                    vec![T::zero(); e],
                    codebook,
                )
            })
            .collect();
        Self::from_layers(config, layers)
    }

    pub fn config(&self) -> &RvqConfig {
        &self.config
    }

    pub fn layers(&self) -> &[RvqLayer<T>] {
        &self.layers
    }

    pub fn is_absorbed(&self) -> bool {
        self.layers.iter().all(|l| l.absorbed.is_some())
    }

    /// Replaces one codeword, keeping the derived tables consistent.
    pub fn set_codeword(&mut self, layer: usize, index: usize, value: &[T]) {
        let d = self.config.code_dim;
        assert_eq!(value.len(), d);
        let l = &mut self.layers[layer];
        l.codebook[index * d..(index + 1) * d].copy_from_slice(value);
        l.refresh();
    }

    pub(crate) fn layer_mut(&mut self, layer: usize) -> &mut RvqLayer<T> {
        &mut self.layers[layer]
    }

    /// Precomputes the receive-side tables. Selection is unchanged.
    pub fn absorb_projections(mut self) -> Self {
        for l in &mut self.layers {
            l.absorbed = Some(l.absorbed_table());
        }
        self
    }

    /// Drops the receive-side tables.
    pub fn unabsorbed(mut self) -> Self {
        for l in &mut self.layers {
            l.absorbed = None;
        }
        self
    }

    fn check_dim(&self, x: &[T]) -> Result<(), RvqError> {
        if x.len() != self.config.embed_dim {
            return Err(RvqError::DimensionMismatch {
                expected: self.config.embed_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Quantizes one embedding with the first `k` layers.
    pub fn quantize(&self, x: &[T], k: usize) -> Result<Quantized<T>, RvqError> {
        self.config.check_layers(k)?;
        self.check_dim(x)?;
        let mut residual = x.to_vec();
        let mut quantized = vec![T::zero(); x.len()];
        let mut z = vec![T::zero(); self.config.code_dim];
        let mut v = vec![T::zero(); x.len()];
        let mut indices = Vec::with_capacity(k);
        let mut residual_norms = Vec::with_capacity(k + 1);
        residual_norms.push(norm(&residual));
        for layer in &self.layers[..k] {
            layer.project_in(&residual, &mut z);
            let i = layer.nearest(&z);
            layer.back_project(i, &mut v);
            for ((q, r), &vi) in quantized.iter_mut().zip(residual.iter_mut()).zip(&v) {
                *q += vi;
                *r -= vi;
            }
            indices.push(i as u32);
            residual_norms.push(norm(&residual));
        }
        Ok(Quantized {
            indices,
            quantized,
            residual_norms,
        })
    }

    /// Sum of the back-projected codewords named by `indices`.
    pub fn dequantize(&self, indices: &[u32]) -> Result<Vec<T>, RvqError> {
        self.config.check_layers(indices.len())?;
        let e = self.config.embed_dim;
        let mut out = vec![T::zero(); e];
        let mut v = vec![T::zero(); e];
        for (layer, (l, &i)) in self.layers.iter().zip(indices).enumerate() {
            if i as usize >= self.config.codewords_per_layer {
                return Err(RvqError::IndexOutOfRange { layer, index: i });
            }
            l.back_project(i as usize, &mut v);
            for (o, &vi) in out.iter_mut().zip(&v) {
                *o += vi;
            }
        }
        Ok(out)
    }

    /// Quantizes interleaved frames of `embed_dim` values.
    pub fn quantize_frames(&self, frames: &[T], k: usize) -> Result<Vec<Quantized<T>>, RvqError> {
        let e = self.config.embed_dim;
        if !frames.len().is_multiple_of(e) {
            return Err(RvqError::DimensionMismatch {
                expected: e,
                found: frames.len() % e,
            });
        }
        frames.chunks_exact(e).map(|f| self.quantize(f, k)).collect()
    }

    /// Dequantizes a sequence of index frames into interleaved embeddings.
    pub fn dequantize_frames(&self, frames: &[Vec<u32>]) -> Result<Vec<T>, RvqError> {
        let mut out = Vec::with_capacity(frames.len() * self.config.embed_dim);
        for f in frames {
            out.extend(self.dequantize(f)?);
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> RvqCodec<U> {
        let c = |v: &[T]| -> Vec<U> { v.iter().map(|&x| U::of(x.as_f64())).collect() };
        RvqCodec {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| RvqLayer {
                    in_proj: c(&l.in_proj),
                    in_bias: c(&l.in_bias),
                    out_proj: c(&l.out_proj),
                    out_bias: c(&l.out_bias),
                    codebook: c(&l.codebook),
                    norms: c(&l.norms),
                    absorbed: l.absorbed.as_deref().map(c),
                })
                .collect(),
        }
    }
}

/// `rows` orthonormal vectors of length `cols` (Gram-Schmidt on uniform
/// draws), row-major.
fn orthonormal_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(rows * cols);
    while out.len() < rows * cols {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in out.chunks_exact(cols) {
            let dot: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(x, a)| *x -= dot * a);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.extend(v.iter().map(|x| x / n));
        }
    }
    out
}
