//! Shipped codec configurations, embedded at build time.

use super::{parse_graph_config, Graph};

pub const TRACK1_ENCODER: &str = include_str!("../../configs/track1_encoder.toml");
pub const TRACK1_DECODER: &str = include_str!("../../configs/track1_decoder.toml");
pub const TRACK2_ENCODER: &str = include_str!("../../configs/track2_encoder.toml");
pub const TRACK2_DECODER: &str = include_str!("../../configs/track2_decoder.toml");
pub const TRACK1_SYSTEM: &str = include_str!("../../configs/track1.toml");
pub const TRACK2_SYSTEM: &str = include_str!("../../configs/track2.toml");

pub const GRAPH_NAMES: [&str; 4] = ["track1_encoder", "track1_decoder", "track2_encoder", "track2_decoder"];

/// Text of a shipped graph or system config by file stem.
pub fn config_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "track1_encoder" => TRACK1_ENCODER,
        "track1_decoder" => TRACK1_DECODER,
        "track2_encoder" => TRACK2_ENCODER,
        "track2_decoder" => TRACK2_DECODER,
        "track1" => TRACK1_SYSTEM,
        "track2" => TRACK2_SYSTEM,
        _ => return None,
    })
}

/// A shipped graph, parsed and validated.
///
/// # Panics
/// If `name` is not one of [`GRAPH_NAMES`]; shipped configs are always valid.
pub fn graph(name: &str) -> Graph {
    let text = config_text(name).unwrap_or_else(|| panic!("no shipped graph named {name}"));
    parse_graph_config(text)
        .expect("shipped config parses")
        .validate()
        .expect("shipped config is valid")
}
