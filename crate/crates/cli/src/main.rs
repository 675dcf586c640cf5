//! `lrac`: analyze, run and verify the codec toolkit from the shell.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage, config or input error.

mod fit;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lrac::bitstream::{decode_stream, encode_stream};
use lrac::container::WeightFile;
use lrac::graph::Graph;
use lrac::metrics::{multiscale_mel_loss, MelScaleConfig};
use lrac::selfcheck::{run_selfcheck, SelfcheckOptions};
use lrac::signal::{augment_pair, AugmentSpec, Rir};
use lrac::system::{load_config, load_system, LoadedConfig, SystemSpec};
use lrac::{read_wav, Audio, LracCodec, WavEncoding};

use output::{write_atomic, write_wav_atomic};

#[derive(Parser)]
#[command(name = "lrac", version, about = "Low-latency speech codec toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Machine,
}

#[derive(Args)]
struct CodecArgs {
    /// System config: a file path or a shipped name (track1, track2).
    #[arg(long, default_value = "track1")]
    config: String,
    /// LRACW weights file; seeded random weights when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Latency, receptive field and complexity report.
    Analyze {
        /// System or graph config: a file path or a shipped name.
        #[arg(long, default_value = "track1")]
        config: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// WAV to `.lracb` bitstream.
    Encode {
        #[command(flatten)]
        codec: CodecArgs,
        /// Active quantizer layers (1 kbps each at 100 Hz).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
        layers: u8,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// `.lracb` bitstream to 32-bit float WAV.
    Decode {
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Encode and decode in memory, optionally scoring the result.
    Roundtrip {
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
        layers: u8,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        #[arg(long, value_enum, default_value_t = Format::Machine)]
        format: Format,
    },
    /// Build (input, reference) training pairs from clean speech.
    Augment {
        /// Clean speech WAV files.
        #[arg(long, required = true, num_args = 1..)]
        speech: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        noise: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        rir: Vec<PathBuf>,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        reverb_probability: f64,
        #[arg(long, default_value_t = 0.8)]
        noise_probability: f64,
        #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
        snr_min: f64,
        #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
        snr_max: f64,
    },
    /// Fit RVQ codebooks by EMA and write a complete weights file.
    FitRvq(fit::FitArgs),
    /// Run the built-in verification suite.
    Selfcheck {
        /// Directory with golden `.lracb` files to verify instead of the
        /// embedded copies.
        #[arg(long)]
        golden_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random graphs per oracle check.
        #[arg(long, default_value_t = 20)]
        graphs: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Mel,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 2, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let mut message = String::new();
            for cause in f.error.chain() {
                let text = cause.to_string();
                if !message.contains(&text) {
                    if !message.is_empty() {
                        message += ": ";
                    }
                    message += &text;
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analyze { config, format } => analyze(&config, format)?,
        Command::Encode {
            codec,
            layers,
            input,
            output,
        } => encode(&codec, layers as usize, &input, &output)?,
        Command::Decode { codec, input, output } => decode(&codec, &input, &output)?,
        Command::Roundtrip {
            codec,
            layers,
            input,
            output,
            metric,
            format,
        } => roundtrip(&codec, layers as usize, &input, output.as_deref(), metric, format)?,
        Command::Augment {
            speech,
            noise,
            rir,
            output_dir,
            seed,
            reverb_probability,
            noise_probability,
            snr_min,
            snr_max,
        } => {
            let spec = AugmentSpec {
                reverb_probability,
                noise_probability,
                snr_range_db: (snr_min, snr_max),
                seed,
            };
            augment(&speech, &noise, &rir, &output_dir, &spec)?
        }
        Command::FitRvq(args) => fit::fit_rvq(&args)?,
        Command::Selfcheck {
            golden_dir,
            seed,
            graphs,
            format,
        } => selfcheck(golden_dir, seed, graphs, format)?,
    }
    Ok(())
}

fn analyze(config: &str, format: Format) -> Result<()> {
    match load_config(config)? {
        LoadedConfig::System(spec) => {
            let report = spec.analyze();
            match format {
                Format::Table => print!("{}", report.table()),
                _ => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        LoadedConfig::Graph(graph) => {
            let report = graph.analyze();
            match format {
                Format::Table => print!("{}", graph_table(&graph)),
                _ => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
    }
    Ok(())
}

fn graph_table(graph: &Graph) -> String {
    let r = graph.analyze();
    let mut s = format!("{} ({:?}, {} Hz)\n", r.name, r.role, r.sample_rate);
    s += &format!("{:<26}{}\n", "overall stride", r.overall_stride);
    s += &format!("{:<26}{}\n", "frame rate (Hz)", r.frame_rate_hz);
    s += &format!(
        "{:<26}{} (span {})\n",
        "receptive field", r.receptive_field, r.receptive_field_span
    );
    s += &format!("{:<26}{}\n", "buffering latency (ms)", r.buffering_latency_ms);
    s += &format!("{:<26}{}\n", "lookahead (ms)", r.lookahead_ms);
    s += &format!("{:<26}{}\n", "algorithmic latency (ms)", r.algorithmic_latency_ms);
    s += &format!("{:<26}{:.3}\n", "complexity (MFLOPS)", r.total_mflops);
    s
}

fn codec(args: &CodecArgs) -> Result<LracCodec> {
    let spec: SystemSpec = load_system(&args.config)?;
    match &args.weights {
        Some(path) => {
            let file = WeightFile::read(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(LracCodec::from_weight_file(spec, &file)?)
        }
        None => Ok(LracCodec::from_seed(spec, args.seed)),
    }
}

fn read_audio(path: &Path) -> Result<Audio> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn encode(args: &CodecArgs, layers: usize, input: &Path, output: &Path) -> Result<()> {
    let mut codec = codec(args)?;
    let header = codec.spec().header(layers)?;
    let audio = read_audio(input)?;
    let frames = codec.encode(&audio, layers)?;
    write_atomic(output, &encode_stream(&header, &frames)?)?;
    eprintln!(
        "{} frames, {} bps",
        frames.len(),
        lrac::bitstream::stream_bitrate(&header)
    );
    Ok(())
}

fn decode(args: &CodecArgs, input: &Path, output: &Path) -> Result<()> {
    let mut codec = codec(args)?;
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let (header, frames) = decode_stream(&bytes).with_context(|| format!("decoding {}", input.display()))?;
    codec.check_header(&header)?;
    let audio = codec.decode(&frames)?;
    write_wav_atomic(output, &audio, WavEncoding::Float32)
}

fn roundtrip(
    args: &CodecArgs,
    layers: usize,
    input: &Path,
    output: Option<&Path>,
    metric: Option<Metric>,
    format: Format,
) -> Result<()> {
    let mut codec = codec(args)?;
    let audio = read_audio(input)?;
    let frames = codec.encode(&audio, layers)?;
    let decoded = codec.decode(&frames)?;
    if let Some(path) = output {
        write_wav_atomic(path, &decoded, WavEncoding::Float32)?;
    }
    if metric == Some(Metric::Mel) {
        let reference = Audio {
            samples: audio.samples[..decoded.len()].to_vec(),
            sample_rate: audio.sample_rate,
        };
        let loss = multiscale_mel_loss(&reference, &decoded, &MelScaleConfig::default())?;
        match format {
            Format::Table => {
                println!(
                    "{:>8}{:>8}{:>14}{:>14}{:>14}",
                    "window", "mels", "log_l1", "linear_l2", "total"
                );
                for s in &loss.scales {
                    println!(
                        "{:>8}{:>8}{:>14.6}{:>14.6}{:>14.6}",
                        s.window, s.mel_bins, s.log_l1, s.linear_l2, s.total
                    );
                }
                println!("total {:.6}", loss.total);
            }
            _ => println!("{}", serde_json::to_string_pretty(&loss)?),
        }
    }
    Ok(())
}

fn augment(speech: &[PathBuf], noise: &[PathBuf], rir: &[PathBuf], out: &Path, spec: &AugmentSpec) -> Result<()> {
    spec.validate()?;
    let noise_pool = noise.iter().map(|p| read_audio(p)).collect::<Result<Vec<_>>>()?;
    let rir_pool = rir
        .iter()
        .map(|p| {
            let a = read_audio(p)?;
            Rir::new(a.samples, a.sample_rate).with_context(|| format!("RIR {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = speech.iter().map(|p| read_audio(p)).collect::<Result<Vec<_>>>()?;
    let mut stems = std::collections::HashSet::new();
    for p in speech {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !stems.insert(stem.clone()) {
            bail!("two speech files share the name {stem}");
        }
    }
    let pairs = inputs
        .par_iter()
        .zip(speech)
        .enumerate()
        .map(|(i, (audio, path))| {
            let pair = augment_pair(audio, &noise_pool, &rir_pool, &spec.for_utterance(i as u64))
                .with_context(|| format!("augmenting {}", path.display()))?;
            let mut meta = serde_json::to_value(&pair.metadata)?;
            meta["speech"] = path.display().to_string().into();
            if let Some(r) = pair.metadata.reverb.as_ref() {
                meta["rir_file"] = rir[r.rir_index].display().to_string().into();
            }
            if let Some(n) = pair.metadata.noise.as_ref() {
                meta["noise_file"] = noise[n.noise_index].display().to_string().into();
            }
            Ok((pair, meta))
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    pairs
        .par_iter()
        .zip(speech)
        .try_for_each(|((pair, meta), path)| -> Result<()> {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy();
            write_wav_atomic(
                &out.join(format!("{stem}_input.wav")),
                &pair.input,
                WavEncoding::Float32,
            )?;
            write_wav_atomic(
                &out.join(format!("{stem}_reference.wav")),
                &pair.reference,
                WavEncoding::Float32,
            )?;
            write_atomic(
                &out.join(format!("{stem}.json")),
                (serde_json::to_string_pretty(meta)? + "\n").as_bytes(),
            )
        })?;
    eprintln!("{} pairs written to {}", speech.len(), out.display());
    Ok(())
}

fn selfcheck(golden_dir: Option<PathBuf>, seed: u64, graphs: usize, format: Format) -> Result<(), Failure> {
    let results = run_selfcheck(&SelfcheckOptions {
        golden_dir,
        seed,
        random_graphs: graphs,
        ..Default::default()
    });
    match format {
        Format::Table => {
            for r in &results {
                println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
        }
        _ => println!(
            "{}",
            serde_json::to_string_pretty(&results).map_err(anyhow::Error::from)?
        ),
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            error: anyhow::anyhow!("{} check(s) failed: {}", failed.len(), failed.join("; ")),
        })
    }
}
