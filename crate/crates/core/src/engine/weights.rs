//! Convolution weights for a validated graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EngineError;
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Weights of one convolution layer.
///
/// `weight` is laid out `[tap][in_channel][out_channel]`. For a transposed
/// convolution the tap index is the output phase `r` in `0..stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights<T> {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvWeights<T> {
    pub fn zeros(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel,
            in_channels,
            out_channels,
            weight: vec![T::zero(); kernel * in_channels * out_channels],
            bias: vec![T::zero(); out_channels],
        }
    }

    #[inline]
    pub fn at(&self, tap: usize, ci: usize, co: usize) -> T {
        self.weight[(tap * self.in_channels + ci) * self.out_channels + co]
    }

    #[inline]
    pub fn set(&mut self, tap: usize, ci: usize, co: usize, v: T) {
        self.weight[(tap * self.in_channels + ci) * self.out_channels + co] = v;
    }

    /// Weights of one tap as an `[in][out]` row-major slice.
    #[inline]
    pub(crate) fn tap(&self, tap: usize) -> &[T] {
        let n = self.in_channels * self.out_channels;
        &self.weight[tap * n..(tap + 1) * n]
    }
}

/// One entry per graph layer; `None` for layers without weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<T> {
    pub layers: Vec<Option<ConvWeights<T>>>,
}

impl<T: Scalar> WeightSet<T> {
    /// All-zero weights shaped for `graph`.
    pub fn zeros(graph: &Graph) -> Self {
        Self {
            layers: graph
                .layers
                .iter()
                .map(|l| {
                    l.conv()
                        .map(|c| ConvWeights::zeros(c.kernel, c.in_channels, c.out_channels))
                })
                .collect(),
        }
    }

    /// Deterministic initialization: every weight and bias of a layer is
    /// drawn uniformly from `±1/sqrt(kernel * in_channels)` by a ChaCha8
    /// stream seeded with `seed`, layer by layer, weights before biases.
    /// Values are drawn in `f64` and rounded, so the `f32` and `f64` sets of
    /// one seed agree to `f32` precision.
    pub fn random(graph: &Graph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = Self::zeros(graph);
        for w in set.layers.iter_mut().flatten() {
            let bound = 1.0 / ((w.kernel * w.in_channels) as f64).sqrt();
            for v in w.weight.iter_mut().chain(w.bias.iter_mut()) {
                *v = T::of(rng.random_range(-bound..=bound));
            }
        }
        set
    }

    /// Checks that the set matches the shape of every layer of `graph` and
    /// holds only finite values.
    pub fn check(&self, graph: &Graph) -> Result<(), EngineError> {
        if self.layers.len() != graph.layers.len() {
            return Err(EngineError::LayerCount {
                expected: graph.layers.len(),
                found: self.layers.len(),
            });
        }
        for (layer, (spec, w)) in graph.layers.iter().zip(&self.layers).enumerate() {
            match (spec.conv(), w) {
                (None, None) => {}
                (Some(c), Some(w)) => {
                    let ok = w.kernel == c.kernel
                        && w.in_channels == c.in_channels
                        && w.out_channels == c.out_channels
                        && w.weight.len() == c.kernel * c.in_channels * c.out_channels
                        && w.bias.len() == c.out_channels;
                    if !ok {
                        return Err(EngineError::ShapeMismatch { layer });
                    }
                    if w.weight.iter().chain(&w.bias).any(|v| !v.is_finite()) {
                        return Err(EngineError::NonFiniteWeight { layer });
                    }
                }
                _ => return Err(EngineError::ShapeMismatch { layer }),
            }
        }
        Ok(())
    }

    pub fn zero_biases(&mut self) {
        for w in self.layers.iter_mut().flatten() {
            w.bias.iter_mut().for_each(|b| *b = T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> WeightSet<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::of(x.as_f64())).collect();
        WeightSet {
            layers: self
                .layers
                .iter()
                .map(|w| {
                    w.as_ref().map(|w| ConvWeights {
                        kernel: w.kernel,
                        in_channels: w.in_channels,
                        out_channels: w.out_channels,
                        weight: conv(&w.weight),
                        bias: conv(&w.bias),
                    })
                })
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|w| w.weight.len() + w.bias.len())
            .sum()
    }
}
