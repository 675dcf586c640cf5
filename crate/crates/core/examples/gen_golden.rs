//! Regenerates the committed bitstream golden files and their index lists.
//!
//! cargo run -p lrac-core --example gen_golden -- crates/core/tests/golden

use lrac::bitstream::{encode_stream, golden_stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/golden".into());
    std::fs::create_dir_all(&dir)?;
    for k in 1..=6u8 {
        let (header, frames) = golden_stream(k);
        std::fs::write(format!("{dir}/k{k}.lracb"), encode_stream(&header, &frames)?)?;
        std::fs::write(format!("{dir}/k{k}.json"), serde_json::to_string(&frames)? + "\n")?;
    }
    Ok(())
}
