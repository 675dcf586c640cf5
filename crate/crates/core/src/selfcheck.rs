//! Built-in verification suite behind `lrac selfcheck`.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audio::AudioBuffer;
use crate::bitstream::{self, decode_stream, encode_stream, golden_stream, stream_bitrate, StreamHeader};
use crate::engine::{run_offline, StreamEngine, WeightSet};
use crate::graph::random::{random_graph, RandomGraphOptions};
use crate::graph::{builtin, FlopConvention, Graph};
use crate::metrics::{multiscale_mel_loss, MelScaleConfig};
use crate::rvq::{rvq_cost, RvqCodec, RvqConfig};
use crate::signal::{measured_snr_db, mix_at_snr, split_early_reflections, window_offsets, Rir};
use crate::system::SystemSpec;

#[derive(Debug, Clone)]
pub struct SelfcheckOptions {
    pub convention: FlopConvention,
    /// Read golden bitstreams from this directory instead of the copies
    /// embedded at build time.
    pub golden_dir: Option<PathBuf>,
    pub seed: u64,
    pub random_graphs: usize,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        Self {
            convention: FlopConvention::STANDARD,
            golden_dir: None,
            seed: 0,
            random_graphs: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Counts input positions whose perturbation changes a mid-signal output,
/// maximized over upsampling phases.
pub fn probe_receptive_field(graph: &Graph, seed: u64) -> u64 {
    let cin = graph.input_channels();
    let cout = graph.output_channels();
    let rates = graph.layer_rates();
    let input_rate = graph.input_rate();
    // one-sided reach bound in input positions
    let mut reach = 2u64;
    for (l, (rin, _)) in graph.layers.iter().zip(&rates) {
        if let Some(c) = l.conv() {
            let ratio = input_rate / *rin;
            reach += ((c.extent() + c.stride) as u64 * ratio.numer()).div_ceil(*ratio.denom());
        }
    }
    let len = 2 * reach + 2 * graph.overall_stride() + 8;
    let weights = WeightSet::<f64>::random(graph, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x: Vec<f64> = (0..len as usize * cin).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = run_offline(graph, &weights, &x);
    let out_rate = graph.output_rate();
    let centre = (num_rational::Ratio::from_integer(len / 2) * out_rate / input_rate).to_integer() as usize;
    let phases: u64 = graph.layers.iter().map(|l| l.up()).product();
    let mut counts = vec![0u64; phases as usize];
    let mut y = x.clone();
    for i in 0..len as usize {
        for c in 0..cin {
            y[i * cin + c] += 0.5;
        }
        let out = run_offline(graph, &weights, &y);
        for (p, count) in counts.iter_mut().enumerate() {
            let o = (centre + p) * cout;
            if out[o..o + cout] != base[o..o + cout] {
                *count += 1;
            }
        }
        y[i * cin..(i + 1) * cin].copy_from_slice(&x[i * cin..(i + 1) * cin]);
    }
    counts.into_iter().max().unwrap_or(0)
}

fn rvq_figures(convention: FlopConvention) -> CheckResult {
    let m = |cfg: &RvqConfig, absorbed| rvq_cost(cfg, absorbed, convention).total_mflops;
    let got = [
        m(&RvqConfig::TRACK1, false),
        m(&RvqConfig::TRACK1, true),
        m(&RvqConfig::TRACK2, false),
        m(&RvqConfig::TRACK2, true),
    ];
    let ok = (got[0] * 100.0).round() == 1935.0
        && (got[1] * 100.0).round() == 1705.0
        && (got[2] - 48.0).abs() <= 0.1
        && (got[3] * 10.0).round() == 387.0;
    check(
        "rvq complexity 19.35/17.05/48.0/38.7 MFLOPS",
        ok,
        format!("{:.4} / {:.4} / {:.4} / {:.4}", got[0], got[1], got[2], got[3]),
    )
}

fn system_figures(convention: FlopConvention) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let targets = [
        ("track1", 10.0, 20.0, 377.5, 296.8),
        ("track2", 10.0, 40.0, 1944.2, 563.3),
    ];
    for (name, buf, alg, enc, dec) in targets {
        let spec = SystemSpec::builtin(name).expect("shipped system");
        let r = spec.analyze_with(convention);
        out.push(check(
            "latency (buffering, total algorithmic)",
            r.overall.buffering_latency_ms == buf && r.overall.algorithmic_latency_ms == alg,
            format!(
                "{name}: {} / {} ms",
                r.overall.buffering_latency_ms, r.overall.algorithmic_latency_ms
            ),
        ));
        let within = |got: f64, want: f64| (got - want).abs() / want <= 0.005;
        out.push(check(
            "encoder/decoder MFLOPS within 0.5%",
            within(r.encoder.total_mflops, enc) && within(r.decoder.total_mflops, dec),
            format!("{name}: {:.3} / {:.3}", r.encoder.total_mflops, r.decoder.total_mflops),
        ));
    }
    let strides: Vec<u64> = builtin::GRAPH_NAMES
        .iter()
        .map(|n| builtin::graph(n).overall_stride())
        .collect();
    out.push(check(
        "overall stride 240",
        strides.iter().all(|&s| s == 240),
        format!("{strides:?}"),
    ));
    let rf = builtin::graph("track1_encoder").receptive_field();
    out.push(check(
        "track1 encoder receptive field 14085",
        rf == 14_085,
        rf.to_string(),
    ));
    out
}

fn random_graph_checks(opts: &SelfcheckOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let small = RandomGraphOptions {
        max_layers: 5,
        max_kernel: 5,
        max_stride: 3,
        max_dilation: 2,
        max_channels: 3,
        ..Default::default()
    };
    let (mut flops_bad, mut rf_bad, mut stream_worst) = (Vec::new(), Vec::new(), 0.0f64);
    for i in 0..opts.random_graphs {
        let g = random_graph(&mut rng, &RandomGraphOptions::default());
        let seed = opts.seed.wrapping_add(i as u64);
        let mut e = StreamEngine::<f32>::with_seed(g.clone(), seed);
        let n = g.input_rate().to_integer() as usize * g.input_channels();
        let x: Vec<f32> = (0..n).map(|j| ((j as f32) * 0.013).sin()).collect();
        let mut out = Vec::new();
        for chunk in x.chunks(97 * g.input_channels()) {
            out.extend(e.push(chunk));
        }
        out.extend(e.flush());
        let expected = g.flops_per_second_exact(opts.convention);
        if !expected.is_integer() || expected.to_integer() != e.flops_executed_with(opts.convention) {
            flops_bad.push(i);
        }
        let reference = run_offline(&g, e.weights(), &x);
        let worst = out.iter().zip(&reference).map(|(a, b)| (a - b).abs() as f64).fold(
            if out.len() == reference.len() {
                0.0
            } else {
                f64::INFINITY
            },
            f64::max,
        );
        stream_worst = stream_worst.max(worst);

        let g = random_graph(&mut rng, &small);
        if probe_receptive_field(&g, seed) != g.receptive_field() {
            rf_bad.push(i);
        }
    }
    vec![
        check(
            "analyzer FLOPs equal instrumented engine",
            flops_bad.is_empty(),
            format!("{} graphs, mismatches {flops_bad:?}", opts.random_graphs),
        ),
        check(
            "analyzer receptive field equals perturbation probe",
            rf_bad.is_empty(),
            format!("{} graphs, mismatches {rf_bad:?}", opts.random_graphs),
        ),
        check(
            "streaming equals offline within 1e-5",
            stream_worst <= 1e-5,
            format!("max deviation {stream_worst:.3e}"),
        ),
    ]
}

fn rvq_oracle(seed: u64) -> CheckResult {
    let cfg = RvqConfig {
        num_layers: 4,
        codewords_per_layer: 8,
        embed_dim: 4,
        code_dim: 4,
        frame_rate: 100,
    };
    let codec = RvqCodec::<f64>::random(cfg, seed).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let q = codec.quantize(&x, 4).expect("valid k");
        let mut r = x.clone();
        for (l, &idx) in codec.layers().iter().zip(&q.indices) {
            let z: Vec<f64> = (0..4)
                .map(|d| l.in_bias[d] + (0..4).map(|e| l.in_proj[d * 4 + e] * r[e]).sum::<f64>())
                .collect();
            let dist = |i: usize| l.codeword(i).iter().zip(&z).map(|(c, v)| (c - v).powi(2)).sum::<f64>();
            let best = (0..8).fold(0, |b, i| if dist(i) < dist(b) { i } else { b });
            if best != idx as usize {
                bad += 1;
            }
            let c = l.codeword(idx as usize);
            for (e, re) in r.iter_mut().enumerate() {
                *re -= l.out_bias[e] + (0..4).map(|d| l.out_proj[e * 4 + d] * c[d]).sum::<f64>();
            }
        }
        for k in 1..4 {
            if codec.quantize(&x, k).expect("valid k").indices[..] != q.indices[..k] {
                bad += 1;
            }
        }
    }
    check(
        "rvq selection equals exhaustive search; prefix nesting",
        bad == 0,
        format!("200 frames, {bad} mismatches"),
    )
}

fn bitstream_checks(opts: &SelfcheckOptions) -> Vec<CheckResult> {
    let mut golden_bad = Vec::new();
    for k in 1..=6u8 {
        let (h, frames) = golden_stream(k);
        let expected = encode_stream(&h, &frames).expect("valid golden stream");
        let stored = match &opts.golden_dir {
            Some(dir) => std::fs::read(dir.join(format!("k{k}.lracb"))).unwrap_or_default(),
            None => bitstream::golden_bytes(k).to_vec(),
        };
        if stored != expected {
            golden_bad.push(k);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lossless = true;
    for k in 1..=6u8 {
        let h = StreamHeader::new(24_000, 100, k, 10).expect("valid header");
        let frames: Vec<Vec<u32>> = (0..500)
            .map(|_| (0..k).map(|_| rng.random_range(0..1024)).collect())
            .collect();
        let bytes = encode_stream(&h, &frames).expect("valid frames");
        lossless &= decode_stream(&bytes).map(|(_, f)| f == frames).unwrap_or(false);
    }
    let h6 = StreamHeader::new(24_000, 100, 6, 10).expect("valid header");
    let ten_s = encode_stream(&h6, &vec![vec![0; 6]; 1000]).expect("valid frames").len();
    let rates: Vec<u64> = (1..=6)
        .map(|k| stream_bitrate(&StreamHeader { num_layers: k, ..h6 }))
        .collect();
    vec![
        check(
            "bitstream golden files",
            golden_bad.is_empty(),
            format!("mismatching k: {golden_bad:?}"),
        ),
        check("bitstream round trip", lossless, "500 frames for each k".into()),
        check(
            "10 s at k=6 is 8000 payload bytes; 1000·k bps",
            ten_s == 8012 && rates == [1000, 2000, 3000, 4000, 5000, 6000],
            format!("{ten_s} bytes with header, rates {rates:?}"),
        ),
    ]
}

fn signal_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let s: Vec<f64> = (0..2000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let n: Vec<f64> = (0..700).map(|_| rng.random_range(-0.5..0.5)).collect();
        let snr = rng.random_range(-5.0..30.0);
        let m = mix_at_snr(
            &AudioBuffer::new(s, 24_000).expect("finite"),
            &AudioBuffer::new(n, 24_000).expect("finite"),
            snr,
        )
        .expect("non-silent noise");
        worst = worst.max((measured_snr_db(&m) - snr).abs());
    }
    let mut taps = vec![0.0f64; 6000];
    taps[321] = 1.0;
    taps.iter_mut()
        .enumerate()
        .skip(322)
        .for_each(|(i, t)| *t = (i as f64 * 0.37).sin() * 0.01);
    let rir = Rir::new(taps.clone(), 24_000).expect("non-empty");
    let split = split_early_reflections(&rir).expect("direct path inside");
    let windows = [
        window_offsets(124_800, 62_400, 31_200).len(),
        window_offsets(62_400, 62_400, 31_200).len(),
        window_offsets(62_399, 62_400, 31_200).len(),
    ];
    vec![
        check(
            "mixture SNR within 0.01 dB",
            worst < 0.01,
            format!("worst error {worst:.2e} dB"),
        ),
        check(
            "early reflections: 1200 taps, exact partition",
            split.early.len() == 1200 && split.reconstruct() == taps,
            format!("{} early taps", split.early.len()),
        ),
        check("window counts 3/1/0", windows == [3, 1, 0], format!("{windows:?}")),
    ]
}

fn metric_checks(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MelScaleConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x: Vec<f32> = (0..4800).map(|_| rng.random_range(-0.5..0.5)).collect();
        let a = AudioBuffer::new(x, 24_000).expect("finite");
        worst = worst.max(
            multiscale_mel_loss(&a, &a, &cfg)
                .map(|l| l.total)
                .unwrap_or(f64::INFINITY),
        );
    }
    check("mel loss of identical signals is 0", worst == 0.0, format!("{worst}"))
}

pub fn run_selfcheck(opts: &SelfcheckOptions) -> Vec<CheckResult> {
    let mut out = vec![rvq_figures(opts.convention)];
    out.extend(system_figures(opts.convention));
    out.extend(random_graph_checks(opts));
    out.push(rvq_oracle(opts.seed));
    out.extend(bitstream_checks(opts));
    out.extend(signal_checks(opts.seed));
    out.push(metric_checks(opts.seed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_build_passes() {
        let r = run_selfcheck(&SelfcheckOptions {
            random_graphs: 5,
            ..Default::default()
        });
        for c in &r {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn changed_convention_fails_rvq_figures() {
        let c = FlopConvention {
            flops_per_mac: 2,
            distance_flops_per_dim: 3,
        };
        assert!(!rvq_figures(c).passed);
    }

    #[test]
    fn perturbed_golden_fails() {
        let dir = tempfile::tempdir().unwrap();
        for k in 1..=6u8 {
            let mut b = bitstream::golden_bytes(k).to_vec();
            if k == 4 {
                b[20] ^= 0x10;
            }
            std::fs::write(dir.path().join(format!("k{k}.lracb")), b).unwrap();
        }
        let opts = SelfcheckOptions {
            golden_dir: Some(dir.path().into()),
            ..Default::default()
        };
        let r = bitstream_checks(&opts);
        assert!(!r[0].passed);
        assert!(r[0].detail.contains('4'));
    }
}
