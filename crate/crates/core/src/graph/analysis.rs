//! Static stride, receptive-field, latency and complexity analysis.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{Graph, LayerSpec, Role};

/// Operation-counting rules used by every cost figure in the toolkit.
///
/// The default counts a multiply-accumulate as two FLOPs, a codeword distance
/// as `2 * dim` FLOPs (dot-product form with precomputed norms), and
/// nonlinearities, comparisons, bias additions and skip additions as free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopConvention {
    pub flops_per_mac: u64,
    pub distance_flops_per_dim: u64,
}

impl FlopConvention {
    pub const STANDARD: FlopConvention = FlopConvention {
        flops_per_mac: 2,
        distance_flops_per_dim: 2,
    };
}

impl Default for FlopConvention {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: usize,
    pub kind: String,
    pub macs_per_output: u64,
    pub output_rate_hz: f64,
    pub flops_per_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    /// Input accumulation needed before one output frame exists.
    pub buffering_ms: f64,
    /// Future context consumed by center-aligned layers.
    pub lookahead_ms: f64,
    /// `buffering_ms + lookahead_ms`.
    pub algorithmic_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub name: String,
    pub role: Role,
    pub sample_rate: u32,
    pub overall_stride: u64,
    pub frame_rate_hz: f64,
    pub receptive_field: u64,
    pub receptive_field_span: u64,
    pub buffering_latency_ms: f64,
    pub lookahead_ms: f64,
    pub algorithmic_latency_ms: f64,
    pub per_layer_flops: Vec<LayerCost>,
    pub total_flops_per_second: f64,
    pub total_mflops: f64,
    pub convention: FlopConvention,
    pub bias_flops_included: bool,
}

/// Rounds to 0.01 ms.
fn round_ms(ms: f64) -> f64 {
    (ms * 100.0).round() / 100.0
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn sorted_unique(mut v: Vec<i64>) -> Vec<i64> {
    v.sort_unstable();
    v.dedup();
    v
}

impl Graph {
    /// Input positions that can influence output position `output_index`,
    /// ignoring signal boundaries. Positions are relative to the graph input.
    pub fn influence_set(&self, output_index: i64) -> Vec<i64> {
        let mut set = vec![output_index];
        let mut saved: Vec<Vec<i64>> = Vec::new();
        for layer in self.layers.iter().rev() {
            set = match layer {
                LayerSpec::Conv(c) | LayerSpec::StridedConv(c) => {
                    let s = c.stride as i64;
                    let d = c.dilation as i64;
                    let first = s - 1 + c.lookahead() as i64 - (c.kernel as i64 - 1) * d;
                    let mut out = Vec::with_capacity(set.len() * c.kernel);
                    for &t in &set {
                        let base = t * s + first;
                        out.extend((0..c.kernel as i64).map(|j| base + j * d));
                    }
                    sorted_unique(out)
                }
                LayerSpec::TransposedConv(c) => {
                    let s = c.stride as i64;
                    sorted_unique(set.iter().map(|&t| t.div_euclid(s)).collect())
                }
                LayerSpec::Activation { .. } => set,
                // walking backwards, the end of a skip is where the bypass
                // branch leaves the main path
                LayerSpec::SkipEnd => {
                    saved.push(set.clone());
                    set
                }
                LayerSpec::SkipBegin => {
                    let mut merged = saved.pop().expect("validated skips are balanced");
                    merged.extend(set);
                    sorted_unique(merged)
                }
            };
        }
        set
    }

    /// Number of distinct input samples that can influence one output
    /// position, maximised over the output phases of upsampling layers.
    pub fn receptive_field(&self) -> u64 {
        self.receptive_field_with_span().0
    }

    /// `(distinct count, first-to-last span)` of the widest influence set.
    pub fn receptive_field_with_span(&self) -> (u64, u64) {
        let period: u64 = self.layers.iter().map(LayerSpec::up).product();
        (0..period as i64)
            .map(|t| {
                let set = self.influence_set(t);
                let span = (set[set.len() - 1] - set[0] + 1) as u64;
                (set.len() as u64, span)
            })
            .max()
            .unwrap_or((1, 1))
    }

    /// Buffering, lookahead and algorithmic latency in milliseconds.
    pub fn latency(&self) -> Latency {
        let buffering = match self.role {
            Role::Encoder => Ratio::from_integer(self.overall_stride() * 1000) / self.sample_rate as u64,
            Role::Decoder => Ratio::from_integer(0),
        };
        let lookahead = self
            .layers
            .iter()
            .zip(self.layer_rates())
            .filter_map(|(l, (rate_in, _))| {
                let la = l.conv()?.lookahead() as u64;
                Some(Ratio::from_integer(la * 1000) / rate_in)
            })
            .fold(Ratio::from_integer(0), |acc, x| acc + x);
        Latency {
            buffering_ms: round_ms(ratio_f64(buffering)),
            lookahead_ms: round_ms(ratio_f64(lookahead)),
            algorithmic_ms: round_ms(ratio_f64(buffering + lookahead)),
        }
    }

    /// Exact FLOPs per second of processed audio, per layer.
    pub fn layer_flops_exact(&self, convention: FlopConvention) -> Vec<Ratio<u64>> {
        self.layers
            .iter()
            .zip(self.layer_rates())
            .map(|(l, (_, rate_out))| match l.conv() {
                Some(c) => rate_out * (c.macs_per_output(l.is_transposed()) * convention.flops_per_mac),
                None => Ratio::from_integer(0),
            })
            .collect()
    }

    pub fn flops_per_second_exact(&self, convention: FlopConvention) -> Ratio<u64> {
        self.layer_flops_exact(convention)
            .into_iter()
            .fold(Ratio::from_integer(0), |acc, x| acc + x)
    }

    /// FLOPs needed to process `input_len` input positions with the
    /// zero-padded, flushed execution contract of the engine.
    pub fn flops_for_input(&self, input_len: u64, convention: FlopConvention) -> u64 {
        self.layers
            .iter()
            .zip(self.layer_lengths(input_len))
            .map(|(l, n)| match l.conv() {
                Some(c) => n * c.macs_per_output(l.is_transposed()) * convention.flops_per_mac,
                None => 0,
            })
            .sum()
    }

    pub fn analyze(&self) -> AnalysisReport {
        self.analyze_with(FlopConvention::STANDARD)
    }

    pub fn analyze_with(&self, convention: FlopConvention) -> AnalysisReport {
        let rates = self.layer_rates();
        let exact = self.layer_flops_exact(convention);
        let per_layer_flops: Vec<LayerCost> = self
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let c = l.conv()?;
                Some(LayerCost {
                    layer: i,
                    kind: l.kind_name().to_string(),
                    macs_per_output: c.macs_per_output(l.is_transposed()),
                    output_rate_hz: ratio_f64(rates[i].1),
                    flops_per_second: ratio_f64(exact[i]),
                })
            })
            .collect();
        let total = ratio_f64(self.flops_per_second_exact(convention));
        let latency = self.latency();
        let (rf, span) = self.receptive_field_with_span();
        AnalysisReport {
            name: self.name.clone(),
            role: self.role,
            sample_rate: self.sample_rate,
            overall_stride: self.overall_stride(),
            frame_rate_hz: ratio_f64(match self.role {
                Role::Encoder => self.output_rate(),
                Role::Decoder => self.input_rate(),
            }),
            receptive_field: rf,
            receptive_field_span: span,
            buffering_latency_ms: latency.buffering_ms,
            lookahead_ms: latency.lookahead_ms,
            algorithmic_latency_ms: latency.algorithmic_ms,
            per_layer_flops,
            total_flops_per_second: total,
            total_mflops: total / 1e6,
            convention,
            bias_flops_included: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ConvSpec, GraphSpec};

    fn graph(role: Role, sample_rate: u32, dim: usize, layers: Vec<LayerSpec>) -> Graph {
        GraphSpec {
            name: "t".into(),
            sample_rate,
            role,
            embedding_dim: dim,
            layers,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn single_conv_receptive_field_and_flops() {
        let g = graph(Role::Encoder, 24000, 8, vec![LayerSpec::Conv(ConvSpec::new(7, 1, 8))]);
        assert_eq!(g.receptive_field(), 7);
        let r = g.analyze();
        assert_eq!(r.total_flops_per_second, 2_688_000.0);
        assert_eq!(r.per_layer_flops.len(), 1);
    }

    #[test]
    fn dilated_pair_receptive_field() {
        let g = graph(
            Role::Encoder,
            24000,
            1,
            vec![
                LayerSpec::Conv(ConvSpec::new(3, 1, 1)),
                LayerSpec::Conv(ConvSpec::new(3, 1, 1).with_dilation(3)),
            ],
        );
        assert_eq!(g.receptive_field_with_span(), (9, 9));
    }

    #[test]
    fn dilation_gaps_are_not_counted() {
        let g = graph(
            Role::Encoder,
            24000,
            1,
            vec![LayerSpec::Conv(ConvSpec::new(2, 1, 1).with_dilation(3))],
        );
        assert_eq!(g.receptive_field_with_span(), (2, 4));
    }

    #[test]
    fn identity_graph() {
        let g = graph(Role::Encoder, 24000, 1, vec![]);
        let r = g.analyze();
        assert_eq!(r.total_mflops, 0.0);
        assert_eq!(r.receptive_field, 1);
        assert_eq!(g.overall_stride(), 1);
    }

    #[test]
    fn causal_graph_latency_is_buffering() {
        let g = graph(
            Role::Encoder,
            24000,
            4,
            vec![
                LayerSpec::Conv(ConvSpec::new(5, 1, 2)),
                LayerSpec::StridedConv(ConvSpec::new(8, 2, 4).with_stride(4)),
            ],
        );
        let l = g.latency();
        assert_eq!(l.buffering_ms, l.algorithmic_ms);
        assert_eq!(l.lookahead_ms, 0.0);
    }

    #[test]
    fn center_lookahead_converts_to_input_time() {
        // 20 samples of lookahead at 2 kHz is 10 ms
        let g = graph(
            Role::Encoder,
            24000,
            1,
            vec![
                LayerSpec::StridedConv(ConvSpec::new(12, 1, 1).with_stride(12)),
                LayerSpec::Conv(ConvSpec::new(5, 1, 1).with_dilation(5).centered()),
                LayerSpec::Conv(ConvSpec::new(5, 1, 1).with_dilation(5).centered()),
            ],
        );
        let l = g.latency();
        assert_eq!(l.buffering_ms, 0.5);
        assert_eq!(l.lookahead_ms, 10.0);
        assert_eq!(l.algorithmic_ms, 10.5);
    }

    #[test]
    fn transposed_cost_uses_input_rate_times_kernel() {
        let g = graph(
            Role::Decoder,
            24000,
            160,
            vec![LayerSpec::TransposedConv(ConvSpec::new(240, 160, 1).with_stride(240))],
        );
        // 2 * kernel * in * out * input_rate
        assert_eq!(g.analyze().total_flops_per_second, 2.0 * 240.0 * 160.0 * 100.0);
        assert_eq!(g.receptive_field(), 1);
    }

    #[test]
    fn finite_run_cost_matches_rate_cost_over_one_second() {
        let g = graph(
            Role::Encoder,
            2400,
            4,
            vec![
                LayerSpec::Conv(ConvSpec::new(3, 1, 2)),
                LayerSpec::StridedConv(ConvSpec::new(4, 2, 4).with_stride(2)),
            ],
        );
        let per_second = g.flops_per_second_exact(FlopConvention::STANDARD);
        assert_eq!(
            per_second.to_integer(),
            g.flops_for_input(2400, FlopConvention::STANDARD)
        );
    }
}
