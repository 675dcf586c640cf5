//! Codebook fitting by exponential moving averages, and training-time
//! helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RvqCodec;
use crate::scalar::Scalar;

/// Running cluster sizes `N_i` and vector sums `m_i` for every codeword.
#[derive(Debug, Clone)]
pub struct EmaStats<T> {
    pub decay: T,
    /// Cluster sizes at or below this value mark a dead codeword.
    pub dead_threshold: T,
    /// `[layer][codeword]`
    pub cluster_size: Vec<Vec<T>>,
    /// `[layer][codeword * code_dim + j]`
    pub sums: Vec<Vec<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> EmaStats<T> {
    /// Stats consistent with the current codebooks (`N_i = 1`,
    /// `m_i = c_i`), decay 0.99 and dead threshold 1e-5. `seed` drives
    /// dead-codeword reseeding.
    pub fn new(codec: &RvqCodec<T>, seed: u64) -> Self {
        Self {
            decay: T::of(0.99),
            dead_threshold: T::of(1e-5),
            cluster_size: codec.layers().iter().map(|l| vec![T::one(); l.norms().len()]).collect(),
            sums: codec.layers().iter().map(|l| l.codebook.clone()).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_decay(mut self, decay: T) -> Self {
        self.decay = decay;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmaReport<T> {
    /// Mean residual norm over the batch before each layer and after the
    /// last, measured while fitting.
    pub mean_residual_norms: Vec<T>,
    /// Codewords reseeded from a batch vector, per layer.
    pub reseeded: Vec<usize>,
}

/// One EMA update of every layer on `batch` (interleaved embeddings).
///
/// Layers are fitted in order: residuals are assigned to their nearest
/// codewords, `N_i ← γN_i + (1−γ)n_i`, `m_i ← γm_i + (1−γ)Σ z`, and
/// `c_i ← m_i/N_i`. A codeword whose `N_i` falls to the dead threshold is
/// replaced by a random projected batch vector with `N_i = 1`. The residual
/// passed to the next layer uses the updated codebook.
///
/// Panics if `batch` is empty or not a whole number of embeddings.
pub fn ema_fit_step<T: Scalar>(codec: &mut RvqCodec<T>, stats: &mut EmaStats<T>, batch: &[T]) -> EmaReport<T> {
    let cfg = *codec.config();
    let (e, d, n) = (cfg.embed_dim, cfg.code_dim, cfg.codewords_per_layer);
    assert!(
        !batch.is_empty() && batch.len().is_multiple_of(e),
        "batch must hold whole embeddings"
    );
    let count = batch.len() / e;
    let mut residual = batch.to_vec();
    let gamma = stats.decay;
    let keep = T::one() - gamma;
    let mut mean_norms = vec![mean_norm(&residual, e)];
    let mut reseeded = Vec::with_capacity(cfg.num_layers);
    let mut z = vec![T::zero(); count * d];
    let mut assign = vec![0usize; count];
    let mut v = vec![T::zero(); e];
    for li in 0..cfg.num_layers {
        let layer = codec.layer_mut(li);
        for (j, r) in residual.chunks_exact(e).enumerate() {
            let zj = &mut z[j * d..(j + 1) * d];
            layer.project_in(r, zj);
            assign[j] = layer.nearest(zj);
        }
        let mut counts = vec![T::zero(); n];
        let mut sums = vec![T::zero(); n * d];
        for (j, &a) in assign.iter().enumerate() {
            counts[a] += T::one();
            for (s, &x) in sums[a * d..(a + 1) * d].iter_mut().zip(&z[j * d..(j + 1) * d]) {
                *s += x;
            }
        }
        let cs = &mut stats.cluster_size[li];
        let ms = &mut stats.sums[li];
        let mut dead = 0;
        for i in 0..n {
            cs[i] = gamma * cs[i] + keep * counts[i];
            for j in 0..d {
                ms[i * d + j] = gamma * ms[i * d + j] + keep * sums[i * d + j];
            }
            if cs[i] > stats.dead_threshold {
                for j in 0..d {
                    layer.codebook[i * d + j] = ms[i * d + j] / cs[i];
                }
            } else {
                let pick = stats.rng.random_range(0..count);
                cs[i] = T::one();
                ms[i * d..(i + 1) * d].copy_from_slice(&z[pick * d..(pick + 1) * d]);
                layer.codebook[i * d..(i + 1) * d].copy_from_slice(&z[pick * d..(pick + 1) * d]);
                dead += 1;
            }
        }
        layer.refresh();
        for (r, &a) in residual.chunks_exact_mut(e).zip(&assign) {
            layer.back_project(a, &mut v);
            r.iter_mut().zip(&v).for_each(|(x, &y)| *x -= y);
        }
        mean_norms.push(mean_norm(&residual, e));
        reseeded.push(dead);
    }
    EmaReport {
        mean_residual_norms: mean_norms,
        reseeded,
    }
}

fn mean_norm<T: Scalar>(x: &[T], e: usize) -> T {
    let n = x.len() / e;
    x.chunks_exact(e)
        .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
        .sum::<T>()
        / T::of(n as f64)
}

/// Mean squared error between an embedding and its quantization.
pub fn commitment_loss<T: Scalar>(embedding: &[T], quantized: &[T]) -> T {
    assert_eq!(embedding.len(), quantized.len(), "commitment loss needs equal lengths");
    crate::audio::mean_square(
        &embedding
            .iter()
            .zip(quantized)
            .map(|(&a, &b)| a - b)
            .collect::<Vec<_>>(),
    )
}

/// Quantizer dropout: a uniform draw from `1..=num_layers`.
pub fn sample_active_layers<R: Rng + ?Sized>(rng: &mut R, num_layers: usize) -> usize {
    rng.random_range(1..=num_layers)
}
