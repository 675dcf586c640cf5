//! Streaming execution of a validated graph.
//!
//! [`StreamEngine`] accepts input in arbitrary chunks and emits every output
//! position as soon as all inputs it depends on have arrived. After
//! [`StreamEngine::flush`] the concatenated output equals
//! [`run_offline`] on the concatenated input.
//!
//! Signals are interleaved: position `t`, channel `c` lives at
//! `x[t * channels + c]`.

mod offline;
mod weights;

use std::collections::VecDeque;

use thiserror::Error;

pub use offline::{run_offline, run_offline_audio};
pub use weights::{ConvWeights, WeightSet};

use crate::audio::AudioBuffer;
use crate::graph::{ActivationKind, ConvSpec, FlopConvention, Graph, LayerSpec};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("weights for layer {layer} do not match its shape")]
    ShapeMismatch { layer: usize },
    #[error("weights for layer {layer} contain a non-finite value")]
    NonFiniteWeight { layer: usize },
    #[error("weight set has {found} layers, graph has {expected}")]
    LayerCount { expected: usize, found: usize },
    #[error("audio at {found} Hz pushed into a graph expecting {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
}

#[inline]
pub(crate) fn activate<T: Scalar>(kind: ActivationKind, x: T) -> T {
    match kind {
        ActivationKind::Elu => {
            if x > T::zero() {
                x
            } else {
                x.exp_m1()
            }
        }
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::None => x,
    }
}

/// Input-side history of a (possibly strided) convolution.
#[derive(Debug, Clone, Default)]
struct ConvState<T> {
    /// Retained input frames, oldest first.
    buf: Vec<T>,
    /// Absolute input index of the first retained frame.
    buf_start: u64,
    received: u64,
    emitted: u64,
}

#[derive(Debug, Clone)]
enum Node<T> {
    Conv(ConvState<T>),
    Stateless,
    Skip(usize),
}

/// Incremental executor for one graph and weight set.
#[derive(Debug, Clone)]
pub struct StreamEngine<T> {
    graph: Graph,
    weights: WeightSet<T>,
    nodes: Vec<Node<T>>,
    fifos: Vec<VecDeque<T>>,
    macs: Vec<u64>,
    flushed: bool,
}

impl<T: Scalar> StreamEngine<T> {
    pub fn new(graph: Graph, weights: WeightSet<T>) -> Result<Self, EngineError> {
        weights.check(&graph)?;
        let mut open = Vec::new();
        let mut n_fifos = 0;
        let nodes = graph
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(_) | LayerSpec::StridedConv(_) => Node::Conv(ConvState::default()),
                LayerSpec::SkipBegin => {
                    open.push(n_fifos);
                    n_fifos += 1;
                    Node::Skip(n_fifos - 1)
                }
                LayerSpec::SkipEnd => Node::Skip(open.pop().expect("validated graph")),
                _ => Node::Stateless,
            })
            .collect();
        Ok(Self {
            macs: vec![0; graph.layers.len()],
            graph,
            weights,
            nodes,
            fifos: vec![VecDeque::new(); n_fifos],
            flushed: false,
        })
    }

    /// Engine with [`WeightSet::random`] weights.
    pub fn with_seed(graph: Graph, seed: u64) -> Self {
        let weights = WeightSet::random(&graph, seed);
        Self::new(graph, weights).expect("generated weights match the graph")
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn weights(&self) -> &WeightSet<T> {
        &self.weights
    }

    pub fn input_channels(&self) -> usize {
        self.graph.input_channels()
    }

    pub fn output_channels(&self) -> usize {
        self.graph.output_channels()
    }

    pub fn is_flushed(&self) -> bool {
        self.flushed
    }

    /// Feeds interleaved input frames and returns every output frame that
    /// became computable.
    ///
    /// Panics if `input` is not a whole number of frames or the engine has
    /// been flushed.
    pub fn push(&mut self, input: &[T]) -> Vec<T> {
        assert!(!self.flushed, "push after flush; call reset first");
        let cin = self.input_channels();
        assert_eq!(input.len() % cin, 0, "input must hold whole frames of {cin} channels");
        self.run(input.to_vec(), false)
    }

    /// [`push`](Self::push) for mono audio at the graph sample rate.
    pub fn push_samples(&mut self, chunk: &AudioBuffer<T>) -> Result<Vec<T>, EngineError> {
        if chunk.sample_rate != self.graph.sample_rate {
            return Err(EngineError::SampleRateMismatch {
                expected: self.graph.sample_rate,
                found: chunk.sample_rate,
            });
        }
        Ok(self.push(&chunk.samples))
    }

    /// Ends the stream: pending outputs are computed with zero right
    /// padding. Further pushes panic until [`reset`](Self::reset).
    pub fn flush(&mut self) -> Vec<T> {
        assert!(!self.flushed, "engine already flushed");
        let out = self.run(Vec::new(), true);
        self.flushed = true;
        out
    }

    /// Clears all history and counters, keeping the weights.
    pub fn reset(&mut self) {
        for node in &mut self.nodes {
            if let Node::Conv(s) = node {
                *s = ConvState::default();
            }
        }
        self.fifos.iter_mut().for_each(VecDeque::clear);
        self.macs.iter_mut().for_each(|m| *m = 0);
        self.flushed = false;
    }

    /// Multiply-accumulates executed per layer since the last reset.
    pub fn layer_macs(&self) -> &[u64] {
        &self.macs
    }

    pub fn macs_executed(&self) -> u64 {
        self.macs.iter().sum()
    }

    pub fn flops_executed(&self) -> u64 {
        self.flops_executed_with(FlopConvention::STANDARD)
    }

    pub fn flops_executed_with(&self, convention: FlopConvention) -> u64 {
        self.macs_executed() * convention.flops_per_mac
    }

    fn run(&mut self, mut x: Vec<T>, finishing: bool) -> Vec<T> {
        for i in 0..self.graph.layers.len() {
            x = match &self.graph.spec().layers[i] {
                LayerSpec::Conv(c) | LayerSpec::StridedConv(c) => {
                    let Node::Conv(state) = &mut self.nodes[i] else {
                        unreachable!()
                    };
                    let w = self.weights.layers[i].as_ref().expect("checked");
                    conv_step(c, w, state, &x, finishing, &mut self.macs[i])
                }
                LayerSpec::TransposedConv(c) => {
                    let w = self.weights.layers[i].as_ref().expect("checked");
                    transposed_step(c, w, &x, &mut self.macs[i])
                }
                LayerSpec::Activation { activation } => {
                    x.iter_mut().for_each(|v| *v = activate(*activation, *v));
                    x
                }
                LayerSpec::SkipBegin => {
                    let Node::Skip(f) = self.nodes[i] else { unreachable!() };
                    self.fifos[f].extend(x.iter().copied());
                    x
                }
                LayerSpec::SkipEnd => {
                    let Node::Skip(f) = self.nodes[i] else { unreachable!() };
                    let fifo = &mut self.fifos[f];
                    for v in x.iter_mut() {
                        *v += fifo.pop_front().expect("skip branch never outruns its source");
                    }
                    x
                }
            };
        }
        x
    }
}

fn conv_step<T: Scalar>(
    c: &ConvSpec,
    w: &ConvWeights<T>,
    st: &mut ConvState<T>,
    input: &[T],
    finishing: bool,
    macs: &mut u64,
) -> Vec<T> {
    let (cin, cout) = (c.in_channels, c.out_channels);
    let (k, s, d, la) = (
        c.kernel as i64,
        c.stride as u64,
        c.dilation as i64,
        c.lookahead() as u64,
    );
    st.buf.extend_from_slice(input);
    st.received += (input.len() / cin) as u64;

    // Output t reads inputs up to t*s + s-1 + la; padding beyond the end is
    // only known to be zero once the stream is finishing.
    let target = if finishing {
        st.received / s
    } else {
        st.received.saturating_sub(la) / s
    };
    let offset = (s as i64 - 1) + la as i64 - (k - 1) * d;
    let mut out = Vec::with_capacity((target - st.emitted) as usize * cout);
    for t in st.emitted..target {
        let base = t as i64 * s as i64 + offset;
        let start = out.len();
        out.extend_from_slice(&w.bias);
        let y = &mut out[start..];
        for j in 0..k {
            let idx = base + j * d;
            if idx < 0 || idx as u64 >= st.received {
                continue;
            }
            let pos = (idx as u64 - st.buf_start) as usize * cin;
            let frame = &st.buf[pos..pos + cin];
            let tap = w.tap(j as usize);
            for (ci, &xv) in frame.iter().enumerate() {
                let row = &tap[ci * cout..(ci + 1) * cout];
                for (yo, &wv) in y.iter_mut().zip(row) {
                    *yo += wv * xv;
                }
            }
        }
        *macs += c.macs_per_output(false);
    }
    st.emitted = target;

    let keep_from = (target as i64 * s as i64 + offset).clamp(0, st.received as i64) as u64;
    if keep_from > st.buf_start {
        st.buf.drain(..(keep_from - st.buf_start) as usize * cin);
        st.buf_start = keep_from;
    }
    out
}

fn transposed_step<T: Scalar>(c: &ConvSpec, w: &ConvWeights<T>, input: &[T], macs: &mut u64) -> Vec<T> {
    let (cin, cout, s) = (c.in_channels, c.out_channels, c.stride);
    let frames = input.len() / cin;
    let mut out = Vec::with_capacity(frames * s * cout);
    for frame in input.chunks_exact(cin) {
        for r in 0..s {
            let start = out.len();
            out.extend_from_slice(&w.bias);
            let y = &mut out[start..];
            let tap = w.tap(r);
            for (ci, &xv) in frame.iter().enumerate() {
                let row = &tap[ci * cout..(ci + 1) * cout];
                for (yo, &wv) in y.iter_mut().zip(row) {
                    *yo += wv * xv;
                }
            }
            *macs += c.macs_per_output(true);
        }
    }
    out
}

#[cfg(test)]
mod tests;
