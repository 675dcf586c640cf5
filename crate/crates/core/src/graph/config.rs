//! TOML graph configuration files.
//!
//! A config file is a [`GraphSpec`] whose layer list may also contain
//! `kind = "residual"` entries. Each residual entry expands to
//! `skip_begin, (activation, conv) * n, skip_end` so shipped configs stay
//! short while the analyzer and engine only ever see primitive layers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ActivationKind, Alignment, ConvSpec, GraphSpec, LayerSpec, Role};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("residual entry {entry}: {reason}")]
    Residual { entry: usize, reason: &'static str },
}

fn elu() -> ActivationKind {
    ActivationKind::Elu
}

/// A residual sub-block: `len(kernels)` dilated convolutions at a fixed
/// channel count, each preceded by an activation, wrapped by a skip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualSpec {
    pub channels: usize,
    pub kernels: Vec<usize>,
    pub dilations: Vec<usize>,
    #[serde(default)]
    pub alignments: Vec<Alignment>,
    #[serde(default = "elu")]
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ConfigLayer {
    Conv(ConvSpec),
    StridedConv(ConvSpec),
    TransposedConv(ConvSpec),
    Activation { activation: ActivationKind },
    SkipBegin,
    SkipEnd,
    Residual(ResidualSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphConfig {
    name: String,
    sample_rate: u32,
    role: Role,
    embedding_dim: usize,
    #[serde(default)]
    layers: Vec<ConfigLayer>,
}

impl ResidualSpec {
    fn expand(&self, entry: usize, out: &mut Vec<LayerSpec>) -> Result<(), ConfigError> {
        if self.kernels.is_empty() {
            return Err(ConfigError::Residual {
                entry,
                reason: "needs at least one convolution",
            });
        }
        if self.dilations.len() != self.kernels.len() {
            return Err(ConfigError::Residual {
                entry,
                reason: "kernels and dilations differ in length",
            });
        }
        if !self.alignments.is_empty() && self.alignments.len() != self.kernels.len() {
            return Err(ConfigError::Residual {
                entry,
                reason: "kernels and alignments differ in length",
            });
        }
        out.push(LayerSpec::SkipBegin);
        for (i, (&k, &d)) in self.kernels.iter().zip(&self.dilations).enumerate() {
            if self.activation != ActivationKind::None {
                out.push(LayerSpec::Activation {
                    activation: self.activation,
                });
            }
            let mut conv = ConvSpec::new(k, self.channels, self.channels).with_dilation(d);
            conv.alignment = self.alignments.get(i).copied().unwrap_or_default();
            out.push(LayerSpec::Conv(conv));
        }
        out.push(LayerSpec::SkipEnd);
        Ok(())
    }
}

/// Parses a graph config, expanding residual entries. The result is not yet
/// validated.
pub fn parse_graph_config(text: &str) -> Result<GraphSpec, ConfigError> {
    let cfg: GraphConfig = toml::from_str(text)?;
    let mut layers = Vec::with_capacity(cfg.layers.len() * 4);
    for (i, entry) in cfg.layers.into_iter().enumerate() {
        match entry {
            ConfigLayer::Conv(c) => layers.push(LayerSpec::Conv(c)),
            ConfigLayer::StridedConv(c) => layers.push(LayerSpec::StridedConv(c)),
            ConfigLayer::TransposedConv(c) => layers.push(LayerSpec::TransposedConv(c)),
            ConfigLayer::Activation { activation } => layers.push(LayerSpec::Activation { activation }),
            ConfigLayer::SkipBegin => layers.push(LayerSpec::SkipBegin),
            ConfigLayer::SkipEnd => layers.push(LayerSpec::SkipEnd),
            ConfigLayer::Residual(r) => r.expand(i, &mut layers)?,
        }
    }
    Ok(GraphSpec {
        name: cfg.name,
        sample_rate: cfg.sample_rate,
        role: cfg.role,
        embedding_dim: cfg.embedding_dim,
        layers,
    })
}

impl GraphSpec {
    /// Serializes the primitive layer list. Residual entries are not
    /// re-folded.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("graph specs always serialize")
    }
}
