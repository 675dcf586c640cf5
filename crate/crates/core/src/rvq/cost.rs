use serde::Serialize;

use super::RvqConfig;
use crate::graph::FlopConvention;

/// Static complexity of an RVQ at its frame rate, all layers active.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RvqCost {
    pub absorbed: bool,
    pub input_projection_flops_per_frame: u64,
    pub search_flops_per_frame: u64,
    pub output_projection_flops_per_frame: u64,
    pub flops_per_frame: u64,
    pub flops_per_second: u64,
    pub total_mflops: f64,
    pub buffering_latency_ms: f64,
    pub algorithmic_latency_ms: f64,
}

/// Per layer and frame: the input projection (`embed_dim·code_dim` MACs),
/// one distance per codeword (`distance_flops_per_dim·code_dim` FLOPs) and,
/// unless absorbed, the output projection (`code_dim·embed_dim` MACs).
/// Argmin, residual updates and table lookups are free.
pub fn rvq_cost(config: &RvqConfig, absorbed: bool, convention: FlopConvention) -> RvqCost {
    let (e, d, n) = (
        config.embed_dim as u64,
        config.code_dim as u64,
        config.codewords_per_layer as u64,
    );
    let layers = config.num_layers as u64;
    let input = layers * convention.flops_per_mac * e * d;
    let search = layers * convention.distance_flops_per_dim * d * n;
    let output = if absorbed {
        0
    } else {
        layers * convention.flops_per_mac * d * e
    };
    let per_frame = input + search + output;
    let per_second = per_frame * config.frame_rate as u64;
    RvqCost {
        absorbed,
        input_projection_flops_per_frame: input,
        search_flops_per_frame: search,
        output_projection_flops_per_frame: output,
        flops_per_frame: per_frame,
        flops_per_second: per_second,
        total_mflops: per_second as f64 / 1e6,
        buffering_latency_ms: 0.0,
        algorithmic_latency_ms: 0.0,
    }
}
