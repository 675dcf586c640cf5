//! `lrac fit-rvq`: EMA codebook fitting.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use lrac::container::WeightFile;
use lrac::rvq::{ema_fit_step, EmaStats};
use lrac::system::load_system;
use lrac::{read_wav, LracCodec};

use crate::output::write_atomic;

#[derive(Args)]
pub struct FitArgs {
    #[arg(long, default_value = "track1")]
    config: String,
    /// Starting weights; seeded random weights when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Speech WAVs to embed with the encoder. Without any, frames are drawn
    /// from a synthetic Gaussian mixture.
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Mixture components for synthetic frames.
    #[arg(long, default_value_t = 32)]
    components: usize,
    /// Synthetic frames per epoch.
    #[arg(long, default_value_t = 4096)]
    frames: usize,
    /// Standard deviation of each mixture component.
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    #[arg(long, default_value_t = 8)]
    epochs: usize,
    /// Frames per EMA update.
    #[arg(long, default_value_t = 512)]
    batch: usize,
    #[arg(long, default_value_t = 0.99)]
    decay: f32,
    /// Store absorbed output-projection tables with the codebooks.
    #[arg(long)]
    absorb: bool,
    #[arg(long)]
    output: PathBuf,
}

fn gaussian_mixture(rng: &mut ChaCha8Rng, dim: usize, components: usize, frames: usize, spread: f64) -> Vec<f32> {
    let centers: Vec<f64> = (0..components * dim).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = Vec::with_capacity(frames * dim);
    for _ in 0..frames {
        let c = rng.random_range(0..components);
        for j in 0..dim {
            let noise: f64 = StandardNormal.sample(rng);
            out.push((centers[c * dim + j] + spread * noise) as f32);
        }
    }
    out
}

pub fn fit_rvq(args: &FitArgs) -> Result<()> {
    if args.epochs == 0 || args.batch == 0 {
        bail!("--epochs and --batch must be positive");
    }
    if !(0.0..1.0).contains(&args.decay) {
        bail!("--decay must lie in [0, 1)");
    }
    if args.input.is_empty() && (args.components == 0 || args.frames == 0) {
        bail!("--components and --frames must be positive");
    }
    let spec = load_system(&args.config)?;
    let base = match &args.weights {
        Some(path) => WeightFile::read(path).with_context(|| format!("reading {}", path.display()))?,
        None => LracCodec::from_seed(spec.clone(), args.seed).to_weight_file(),
    };
    let mut codec = LracCodec::from_weight_file(spec.clone(), &base)?;
    let dim = spec.rvq.embed_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let mut frames = Vec::new();
    for path in &args.input {
        let audio = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
        frames.extend(codec.embed(&audio)?);
    }
    let from_audio = !frames.is_empty();
    if !args.input.is_empty() && !from_audio {
        bail!("inputs are shorter than one frame");
    }

    let mut rvq = codec.rvq().clone().unabsorbed();
    let mut stats = EmaStats::new(&rvq, args.seed).with_decay(args.decay);
    for epoch in 0..args.epochs {
        if !from_audio {
            frames = gaussian_mixture(&mut rng, dim, args.components, args.frames, args.spread);
        }
        let mut order: Vec<usize> = (0..frames.len() / dim).collect();
        order.shuffle(&mut rng);
        let mut norms = vec![0.0f64; spec.rvq.num_layers + 1];
        let mut reseeded = 0;
        for chunk in order.chunks(args.batch) {
            let batch: Vec<f32> = chunk
                .iter()
                .flat_map(|&i| frames[i * dim..(i + 1) * dim].iter().copied())
                .collect();
            let report = ema_fit_step(&mut rvq, &mut stats, &batch);
            for (acc, &n) in norms.iter_mut().zip(&report.mean_residual_norms) {
                *acc += n as f64 * chunk.len() as f64;
            }
            reseeded += report.reseeded.iter().sum::<usize>();
        }
        let total = order.len() as f64;
        let line: Vec<String> = norms.iter().map(|n| format!("{:.5}", n / total)).collect();
        println!(
            "epoch {:>3}  residual norms {}  reseeded {reseeded}",
            epoch + 1,
            line.join(" ")
        );
    }

    if args.absorb {
        rvq = rvq.absorb_projections();
    }
    let mut file = base;
    file.set_rvq(&rvq);
    write_atomic(&args.output, &file.to_bytes())
}
