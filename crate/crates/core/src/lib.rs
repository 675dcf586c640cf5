//! Low-latency neural speech codec toolkit.
//!
//! * [`graph`]: declarative codec graphs, static latency, receptive-field
//!   and FLOP analysis, shipped configs.
//! * [`engine`]: streaming and offline execution of a graph.
//! * [`rvq`]: residual vector quantizer with EMA codebook fitting.
//! * [`bitstream`]: the `.lracb` index stream.
//! * [`signal`]: noise mixing, room impulse responses, training windows.
//! * [`metrics`]: STFT, mel filterbanks, multi-scale mel distance.
//! * [`system`]: encoder + quantizer + decoder, combined reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the deployment type `f32`.

pub mod audio;
pub mod bitstream;
pub mod container;
pub mod engine;
pub mod graph;
pub mod metrics;
pub mod rvq;
pub mod scalar;
pub mod selfcheck;
pub mod signal;
pub mod system;

pub use audio::{read_wav, write_wav, AudioBuffer, WavEncoding};
pub use engine::{run_offline, StreamEngine, WeightSet};
pub use graph::{Graph, GraphSpec};
pub use rvq::{RvqCodec, RvqConfig};
pub use scalar::Scalar;
pub use system::{Codec, SystemSpec};

pub type Audio = AudioBuffer<f32>;
pub type Engine = StreamEngine<f32>;
pub type Weights = WeightSet<f32>;
pub type Rvq = RvqCodec<f32>;
pub type Rir = signal::Rir<f32>;
pub type LracCodec = Codec<f32>;
