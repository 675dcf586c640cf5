//! Whole-signal reference execution.

use super::{activate, WeightSet};
use crate::audio::AudioBuffer;
use crate::graph::{Graph, LayerSpec};
use crate::scalar::Scalar;

/// Runs `graph` over the complete interleaved `input` in one pass, layer by
/// layer, with zero padding on both sides.
///
/// Panics if `weights` do not match `graph` or `input` is not a whole
/// number of frames.
pub fn run_offline<T: Scalar>(graph: &Graph, weights: &WeightSet<T>, input: &[T]) -> Vec<T> {
    weights.check(graph).expect("weights must match the graph");
    let cin0 = graph.input_channels();
    assert_eq!(input.len() % cin0, 0, "input must hold whole frames");
    let mut x = input.to_vec();
    let mut len = input.len() / cin0;
    let mut saved: Vec<Vec<T>> = Vec::new();
    for (layer, w) in graph.layers.iter().zip(&weights.layers) {
        match layer {
            LayerSpec::Conv(c) | LayerSpec::StridedConv(c) => {
                let w = w.as_ref().unwrap();
                let (k, s, d) = (c.kernel as i64, c.stride as i64, c.dilation as i64);
                let la = c.lookahead() as i64;
                let out_len = len / c.stride;
                let mut y = vec![T::zero(); out_len * c.out_channels];
                for t in 0..out_len {
                    let last = t as i64 * s + s - 1 + la;
                    for co in 0..c.out_channels {
                        let mut acc = w.bias[co];
                        for j in 0..k {
                            let idx = last - (k - 1 - j) * d;
                            if idx < 0 || idx >= len as i64 {
                                continue;
                            }
                            for ci in 0..c.in_channels {
                                acc += w.at(j as usize, ci, co) * x[idx as usize * c.in_channels + ci];
                            }
                        }
                        y[t * c.out_channels + co] = acc;
                    }
                }
                x = y;
                len = out_len;
            }
            LayerSpec::TransposedConv(c) => {
                let w = w.as_ref().unwrap();
                let s = c.stride;
                let mut y = vec![T::zero(); len * s * c.out_channels];
                for n in 0..len {
                    for r in 0..s {
                        for co in 0..c.out_channels {
                            let mut acc = w.bias[co];
                            for ci in 0..c.in_channels {
                                acc += w.at(r, ci, co) * x[n * c.in_channels + ci];
                            }
                            y[(n * s + r) * c.out_channels + co] = acc;
                        }
                    }
                }
                x = y;
                len *= s;
            }
            LayerSpec::Activation { activation } => {
                for v in &mut x {
                    *v = activate(*activation, *v);
                }
            }
            LayerSpec::SkipBegin => saved.push(x.clone()),
            LayerSpec::SkipEnd => {
                let s = saved.pop().unwrap();
                for (v, r) in x.iter_mut().zip(s) {
                    *v += r;
                }
            }
        }
    }
    x
}

/// [`run_offline`] for mono audio.
pub fn run_offline_audio<T: Scalar>(graph: &Graph, weights: &WeightSet<T>, audio: &AudioBuffer<T>) -> Vec<T> {
    run_offline(graph, weights, &audio.samples)
}
