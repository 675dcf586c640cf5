//! Declarative description of one codec half (encoder or decoder) and its
//! validation rules.
//!
//! A [`GraphSpec`] is a flat, ordered list of layers. Residual sub-blocks are
//! written as plain layers bracketed by [`LayerSpec::SkipBegin`] and
//! [`LayerSpec::SkipEnd`]; the skip addition is free in every cost model.
//! [`GraphSpec::validate`] turns a spec into a [`Graph`], which is what the
//! analyzer and the streaming engine accept.

mod analysis;
pub mod builtin;
mod config;
pub mod random;

use std::ops::Deref;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{AnalysisReport, FlopConvention, Latency, LayerCost};
pub use config::{parse_graph_config, ConfigError, ResidualSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Causal,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Elu,
    Tanh,
    None,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

fn is_causal(a: &Alignment) -> bool {
    *a == Alignment::Causal
}

/// Geometry of a convolution-like layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub kernel: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub stride: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default, skip_serializing_if = "is_causal")]
    pub alignment: Alignment,
}

impl ConvSpec {
    pub fn new(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel,
            stride: 1,
            dilation: 1,
            in_channels,
            out_channels,
            alignment: Alignment::Causal,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn centered(mut self) -> Self {
        self.alignment = Alignment::Center;
        self
    }

    /// Number of input positions spanned by the dilated kernel.
    pub fn extent(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1
    }

    /// Future input positions (at the layer input rate) an output depends on.
    pub fn lookahead(&self) -> usize {
        match self.alignment {
            Alignment::Causal => 0,
            Alignment::Center => (self.kernel - 1) * self.dilation / 2,
        }
    }

    /// Multiply-accumulates per output position.
    pub fn macs_per_output(&self, transposed: bool) -> u64 {
        let taps = if transposed { 1 } else { self.kernel };
        (taps * self.in_channels * self.out_channels) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvSpec),
    StridedConv(ConvSpec),
    TransposedConv(ConvSpec),
    Activation { activation: ActivationKind },
    SkipBegin,
    SkipEnd,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv(_) => "conv",
            LayerSpec::StridedConv(_) => "strided_conv",
            LayerSpec::TransposedConv(_) => "transposed_conv",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::SkipBegin => "skip_begin",
            LayerSpec::SkipEnd => "skip_end",
        }
    }

    /// The convolution geometry, for layers that carry weights.
    pub fn conv(&self) -> Option<&ConvSpec> {
        match self {
            LayerSpec::Conv(c) | LayerSpec::StridedConv(c) | LayerSpec::TransposedConv(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_transposed(&self) -> bool {
        matches!(self, LayerSpec::TransposedConv(_))
    }

    /// Downsampling factor applied by this layer (1 if none).
    pub fn down(&self) -> u64 {
        match self {
            LayerSpec::Conv(c) | LayerSpec::StridedConv(c) => c.stride as u64,
            _ => 1,
        }
    }

    /// Upsampling factor applied by this layer (1 if none).
    pub fn up(&self) -> u64 {
        match self {
            LayerSpec::TransposedConv(c) => c.stride as u64,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub name: String,
    /// Audio sample rate: the input rate of an encoder, the output rate of a
    /// decoder.
    pub sample_rate: u32,
    pub role: Role,
    /// Encoder output / decoder input channels.
    pub embedding_dim: usize,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("channel mismatch at layer {layer}: expected {expected} input channels, found {found}")]
    ChannelMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: transposed convolution kernel {kernel} must equal its stride {stride}")]
    TransposedKernelStrideMismatch { layer: usize, kernel: usize, stride: usize },
    #[error("layer {layer}: unbalanced skip connection")]
    UnbalancedSkip { layer: usize },
    #[error("layer {layer}: center alignment needs an odd kernel extent, got {extent}")]
    EvenCenterExtent { layer: usize, extent: usize },
    #[error("layer {layer}: skip connections cannot span a rate change")]
    StrideInsideSkip { layer: usize },
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: &'static str },
    #[error("graph ends with {found} channels, expected {expected}")]
    OutputChannelMismatch { expected: usize, found: usize },
    #[error("downsampling {down} and upsampling {up} do not give an integral {role:?} stride")]
    FractionalStride { down: u64, up: u64, role: Role },
    #[error("sample rate must be positive")]
    InvalidSampleRate,
}

impl GraphSpec {
    /// Channels entering the first layer.
    pub fn input_channels(&self) -> usize {
        match self.role {
            Role::Encoder => 1,
            Role::Decoder => self.embedding_dim,
        }
    }

    /// Channels leaving the last layer.
    pub fn output_channels(&self) -> usize {
        match self.role {
            Role::Encoder => self.embedding_dim,
            Role::Decoder => 1,
        }
    }

    pub fn validate(self) -> Result<Graph, GraphError> {
        if self.sample_rate == 0 {
            return Err(GraphError::InvalidSampleRate);
        }
        let mut channels = self.input_channels();
        let mut skips: Vec<(usize, usize)> = Vec::new();
        let mut has_conv = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(c) = layer.conv() {
                has_conv = true;
                if c.kernel == 0 || c.stride == 0 || c.dilation == 0 {
                    return Err(GraphError::InvalidLayer {
                        layer: i,
                        reason: "kernel, stride and dilation must be positive",
                    });
                }
                if c.in_channels == 0 || c.out_channels == 0 {
                    return Err(GraphError::InvalidLayer {
                        layer: i,
                        reason: "channel counts must be positive",
                    });
                }
                if c.in_channels != channels {
                    return Err(GraphError::ChannelMismatch {
                        layer: i,
                        expected: channels,
                        found: c.in_channels,
                    });
                }
                if c.alignment == Alignment::Center && c.extent() % 2 == 0 {
                    return Err(GraphError::EvenCenterExtent {
                        layer: i,
                        extent: c.extent(),
                    });
                }
                channels = c.out_channels;
            }
            match layer {
                LayerSpec::Conv(c) if c.stride != 1 => {
                    return Err(GraphError::InvalidLayer {
                        layer: i,
                        reason: "plain convolutions have stride 1; use strided_conv",
                    });
                }
                LayerSpec::TransposedConv(c) => {
                    if c.kernel != c.stride {
                        return Err(GraphError::TransposedKernelStrideMismatch {
                            layer: i,
                            kernel: c.kernel,
                            stride: c.stride,
                        });
                    }
                    if c.dilation != 1 || c.alignment != Alignment::Causal {
                        return Err(GraphError::InvalidLayer {
                            layer: i,
                            reason: "transposed convolutions are causal and undilated",
                        });
                    }
                }
                LayerSpec::SkipBegin => skips.push((i, channels)),
                LayerSpec::SkipEnd => {
                    let (begin, ch) = skips.pop().ok_or(GraphError::UnbalancedSkip { layer: i })?;
                    if ch != channels {
                        return Err(GraphError::ChannelMismatch {
                            layer: i,
                            expected: ch,
                            found: channels,
                        });
                    }
                    if let Some(j) = (begin..i).find(|&j| {
                        let l = &self.layers[j];
                        l.down() != 1 || l.up() != 1
                    }) {
                        return Err(GraphError::StrideInsideSkip { layer: j });
                    }
                }
                _ => {}
            }
        }
        if let Some(&(begin, _)) = skips.last() {
            return Err(GraphError::UnbalancedSkip { layer: begin });
        }
        if has_conv && channels != self.output_channels() {
            return Err(GraphError::OutputChannelMismatch {
                expected: self.output_channels(),
                found: channels,
            });
        }
        let down: u64 = self.layers.iter().map(LayerSpec::down).product();
        let up: u64 = self.layers.iter().map(LayerSpec::up).product();
        let integral = match self.role {
            Role::Encoder => down.is_multiple_of(up),
            Role::Decoder => up.is_multiple_of(down),
        };
        if !integral {
            return Err(GraphError::FractionalStride {
                down,
                up,
                role: self.role,
            });
        }
        Ok(Graph { spec: self })
    }
}

/// Returns the spec unchanged when every structural invariant holds.
pub fn validate_graph(spec: GraphSpec) -> Result<Graph, GraphError> {
    spec.validate()
}

/// A [`GraphSpec`] that passed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    spec: GraphSpec,
}

impl Deref for Graph {
    type Target = GraphSpec;

    fn deref(&self) -> &GraphSpec {
        &self.spec
    }
}

impl Graph {
    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn into_spec(self) -> GraphSpec {
        self.spec
    }

    /// Product of downsampling strides over product of upsampling strides,
    /// oriented by role: the downsampling factor of an encoder, the
    /// upsampling factor of a decoder.
    pub fn overall_stride(&self) -> u64 {
        let down: u64 = self.layers.iter().map(LayerSpec::down).product();
        let up: u64 = self.layers.iter().map(LayerSpec::up).product();
        match self.role {
            Role::Encoder => down / up,
            Role::Decoder => up / down,
        }
    }

    /// Rate (Hz) of the signal entering the graph.
    pub fn input_rate(&self) -> Ratio<u64> {
        let sr = Ratio::from_integer(self.sample_rate as u64);
        match self.role {
            Role::Encoder => sr,
            Role::Decoder => sr / self.overall_stride(),
        }
    }

    /// Rate (Hz) of the signal leaving the graph: the frame rate of an
    /// encoder, the sample rate of a decoder.
    pub fn output_rate(&self) -> Ratio<u64> {
        let sr = Ratio::from_integer(self.sample_rate as u64);
        match self.role {
            Role::Encoder => sr / self.overall_stride(),
            Role::Decoder => sr,
        }
    }

    /// Input and output rate of every layer.
    pub fn layer_rates(&self) -> Vec<(Ratio<u64>, Ratio<u64>)> {
        let mut rate = self.input_rate();
        self.layers
            .iter()
            .map(|l| {
                let out = rate * l.up() / l.down();
                let pair = (rate, out);
                rate = out;
                pair
            })
            .collect()
    }

    /// Output length of every layer for an input of `len` positions.
    pub fn layer_lengths(&self, len: u64) -> Vec<u64> {
        let mut n = len;
        self.layers
            .iter()
            .map(|l| {
                n = n * l.up() / l.down();
                n
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder(layers: Vec<LayerSpec>, dim: usize) -> GraphSpec {
        GraphSpec {
            name: "t".into(),
            sample_rate: 24000,
            role: Role::Encoder,
            embedding_dim: dim,
            layers,
        }
    }

    #[test]
    fn empty_graph_is_identity() {
        let g = encoder(vec![], 1).validate().unwrap();
        assert_eq!(g.overall_stride(), 1);
        assert!(g.layers.is_empty());
    }

    #[test]
    fn rejects_transposed_kernel_stride_mismatch() {
        let spec = GraphSpec {
            role: Role::Decoder,
            ..encoder(
                vec![LayerSpec::TransposedConv(ConvSpec::new(8, 1, 1).with_stride(5))],
                1,
            )
        };
        assert_eq!(
            spec.validate().unwrap_err(),
            GraphError::TransposedKernelStrideMismatch {
                layer: 0,
                kernel: 8,
                stride: 5
            }
        );
    }

    #[test]
    fn rejects_channel_mismatch() {
        let spec = encoder(
            vec![
                LayerSpec::Conv(ConvSpec::new(7, 1, 8)),
                LayerSpec::Conv(ConvSpec::new(3, 4, 8)),
            ],
            8,
        );
        assert!(matches!(
            spec.validate(),
            Err(GraphError::ChannelMismatch {
                layer: 1,
                expected: 8,
                found: 4
            })
        ));
    }

    #[test]
    fn rejects_unbalanced_skips() {
        let open = encoder(vec![LayerSpec::SkipBegin], 1);
        assert_eq!(open.validate().unwrap_err(), GraphError::UnbalancedSkip { layer: 0 });
        let close = encoder(vec![LayerSpec::SkipEnd], 1);
        assert_eq!(close.validate().unwrap_err(), GraphError::UnbalancedSkip { layer: 0 });
    }

    #[test]
    fn rejects_even_center_extent() {
        let spec = encoder(vec![LayerSpec::Conv(ConvSpec::new(4, 1, 1).centered())], 1);
        assert!(matches!(
            spec.validate(),
            Err(GraphError::EvenCenterExtent { layer: 0, extent: 4 })
        ));
        // kernel 2 dilated by 2 spans 3 positions, which has a midpoint
        let ok = encoder(
            vec![LayerSpec::Conv(ConvSpec::new(2, 1, 1).with_dilation(2).centered())],
            1,
        );
        assert_eq!(ok.validate().unwrap().layers[0].conv().unwrap().lookahead(), 1);
    }

    #[test]
    fn rejects_stride_inside_skip() {
        let spec = encoder(
            vec![
                LayerSpec::SkipBegin,
                LayerSpec::StridedConv(ConvSpec::new(2, 1, 1).with_stride(2)),
                LayerSpec::SkipEnd,
            ],
            1,
        );
        assert_eq!(spec.validate().unwrap_err(), GraphError::StrideInsideSkip { layer: 1 });
    }

    #[test]
    fn rejects_wrong_embedding_dim() {
        let spec = encoder(vec![LayerSpec::Conv(ConvSpec::new(7, 1, 8))], 16);
        assert_eq!(
            spec.validate().unwrap_err(),
            GraphError::OutputChannelMismatch { expected: 16, found: 8 }
        );
    }

    #[test]
    fn rates_and_lengths() {
        let g = encoder(
            vec![
                LayerSpec::Conv(ConvSpec::new(7, 1, 8)),
                LayerSpec::StridedConv(ConvSpec::new(6, 8, 16).with_stride(3)),
                LayerSpec::StridedConv(ConvSpec::new(8, 16, 32).with_stride(4)),
            ],
            32,
        )
        .validate()
        .unwrap();
        assert_eq!(g.overall_stride(), 12);
        assert_eq!(g.output_rate(), Ratio::from_integer(2000));
        assert_eq!(g.layer_lengths(100), vec![100, 33, 8]);
    }
}
