use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lrac::{read_wav, write_wav, Audio, WavEncoding};
use tempfile::TempDir;

fn lrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tone(seconds: f64, rate: u32, freq: f64) -> Audio {
    let n = (seconds * rate as f64) as usize;
    let samples = (0..n)
        .map(|i| (0.3 * (std::f64::consts::TAU * freq * i as f64 / rate as f64).sin()) as f32)
        .collect();
    Audio::new(samples, rate).unwrap()
}

fn wav(dir: &TempDir, name: &str, audio: &Audio) -> PathBuf {
    let path = dir.path().join(name);
    write_wav(&path, audio, WavEncoding::Pcm16).unwrap();
    path
}

/// 16-bit stereo file written by hand, since the library only writes mono.
fn stereo_wav(dir: &TempDir) -> PathBuf {
    let frames = 2400u32;
    let data_len = frames * 4;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&24000u32.to_le_bytes());
    b.extend_from_slice(&(24000u32 * 4).to_le_bytes());
    b.extend_from_slice(&4u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    b.resize(b.len() + data_len as usize, 0);
    let path = dir.path().join("stereo.wav");
    std::fs::write(&path, b).unwrap();
    path
}

fn machine_report(config: &str) -> serde_json::Value {
    let out = lrac(&["analyze", "--config", config, "--format", "machine"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn analyze_reports_track_totals() {
    for (config, mflops, algorithmic) in [("track1", 691.35, 20.0), ("track2", 2546.2, 40.0)] {
        let r = machine_report(config);
        let total = r["overall"]["total_mflops"].as_f64().unwrap();
        assert!((total - mflops).abs() / mflops < 0.005, "{config}: {total}");
        assert_eq!(r["overall"]["buffering_latency_ms"].as_f64(), Some(10.0));
        assert_eq!(r["overall"]["algorithmic_latency_ms"].as_f64(), Some(algorithmic));
    }
    let table = lrac(&["analyze", "--config", "track1"]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("691.35"));
}

#[test]
fn analyze_accepts_graph_files() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("tiny.toml");
    std::fs::write(
        &path,
        r#"
name = "tiny"
role = "encoder"
sample_rate = 1000
embedding_dim = 2

[[layers]]
kind = "strided_conv"
kernel = 4
stride = 2
in_channels = 1
out_channels = 2
"#,
    )
    .unwrap();
    let out = lrac(&["analyze", "--config", p(&path), "--format", "machine"]);
    assert_eq!(code(&out), 0);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["overall_stride"].as_u64(), Some(2));
    assert_eq!(r["receptive_field"].as_u64(), Some(4));
}

#[test]
fn bad_configs_exit_2() {
    assert_eq!(code(&lrac(&["analyze", "--config", "no_such_config"])), 2);
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"x\"\nrole = \"encoder\"\n").unwrap();
    assert_eq!(code(&lrac(&["analyze", "--config", p(&path)])), 2);
}

#[test]
fn channel_mismatch_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("mismatch.toml");
    std::fs::write(
        &path,
        r#"
name = "mismatch"
role = "encoder"
sample_rate = 1000
embedding_dim = 4

[[layers]]
kind = "conv"
kernel = 3
in_channels = 1
out_channels = 2

[[layers]]
kind = "conv"
kernel = 3
in_channels = 3
out_channels = 4
"#,
    )
    .unwrap();
    let out = lrac(&["analyze", "--config", p(&path)]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(stderr.contains("channel mismatch"), "{stderr}");
}

#[test]
fn layer_count_outside_1_to_6_exits_2() {
    let dir = TempDir::new().unwrap();
    let input = wav(&dir, "in.wav", &tone(0.1, 24000, 440.0));
    for k in ["0", "7"] {
        let output = dir.path().join(format!("k{k}.lracb"));
        let out = lrac(&["encode", "--layers", k, "--input", p(&input), "--output", p(&output)]);
        assert_eq!(code(&out), 2);
        assert!(!output.exists());
    }
}

#[test]
fn channel_and_rate_mismatches_exit_2_without_output() {
    let dir = TempDir::new().unwrap();
    let stereo = stereo_wav(&dir);
    let low_rate = wav(&dir, "16k.wav", &tone(0.1, 16000, 440.0));
    for input in [&stereo, &low_rate] {
        let output = dir.path().join("out.lracb");
        let out = lrac(&["encode", "--layers", "3", "--input", p(input), "--output", p(&output)]);
        assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(!output.exists());
    }
}

#[test]
fn ten_seconds_at_six_layers_is_8012_bytes() {
    let dir = TempDir::new().unwrap();
    let input = wav(&dir, "in.wav", &tone(10.0, 24000, 220.0));
    let output = dir.path().join("out.lracb");
    let out = lrac(&["encode", "--layers", "6", "--input", p(&input), "--output", p(&output)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::metadata(&output).unwrap().len(), 8012);
}

#[test]
fn file_round_trip_matches_in_memory_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = wav(&dir, "in.wav", &tone(0.5, 24000, 330.0));
    let stream = dir.path().join("x.lracb");
    let via_file = dir.path().join("via_file.wav");
    let in_memory = dir.path().join("in_memory.wav");
    let seed = ["--seed", "7"];
    let run = |args: &[&str]| {
        let out = lrac(&[args, &seed].concat());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["encode", "--layers", "4", "--input", p(&input), "--output", p(&stream)]);
    run(&["decode", "--input", p(&stream), "--output", p(&via_file)]);
    let scored = run(&[
        "roundtrip",
        "--layers",
        "4",
        "--input",
        p(&input),
        "--output",
        p(&in_memory),
        "--metric",
        "mel",
    ]);
    let a = read_wav(&via_file).unwrap();
    let b = read_wav(&in_memory).unwrap();
    assert_eq!(a.len(), 12000);
    assert_eq!(a, b);
    let loss: serde_json::Value = serde_json::from_slice(&scored.stdout).unwrap();
    assert_eq!(loss["scales"].as_array().unwrap().len(), 6);
    assert!(loss["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn corrupt_bitstream_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let stream = dir.path().join("bad.lracb");
    std::fs::write(&stream, b"LRAX\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
    let output = dir.path().join("out.wav");
    let out = lrac(&["decode", "--input", p(&stream), "--output", p(&output)]);
    assert_eq!(code(&out), 2);
    assert!(!output.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn selfcheck_passes_and_catches_a_perturbed_golden() {
    let out = lrac(&["selfcheck", "--graphs", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let dir = TempDir::new().unwrap();
    for k in 1..=6 {
        let name = format!("k{k}.lracb");
        std::fs::copy(golden.join(&name), dir.path().join(&name)).unwrap();
    }
    let victim = dir.path().join("k3.lracb");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[20] ^= 0x10;
    std::fs::write(&victim, bytes).unwrap();
    let out = lrac(&["selfcheck", "--graphs", "4", "--golden-dir", p(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn augment_writes_pairs_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let speech = [
        wav(&dir, "a.wav", &tone(0.4, 24000, 200.0)),
        wav(&dir, "b.wav", &tone(0.3, 24000, 300.0)),
    ];
    let noise = wav(&dir, "noise.wav", &tone(0.2, 24000, 1234.0));
    let mut rir_taps = vec![0.0f32; 2400];
    rir_taps[10] = 1.0;
    rir_taps[500] = 0.4;
    rir_taps[2000] = 0.2;
    let rir = wav(&dir, "rir.wav", &Audio::new(rir_taps, 24000).unwrap());
    let run = |out: &Path| {
        let o = lrac(&[
            "augment",
            "--speech",
            p(&speech[0]),
            p(&speech[1]),
            "--noise",
            p(&noise),
            "--rir",
            p(&rir),
            "--output-dir",
            p(out),
            "--seed",
            "5",
            "--reverb-probability",
            "1",
            "--noise-probability",
            "1",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (one, two) = (dir.path().join("one"), dir.path().join("two"));
    run(&one);
    run(&two);
    for name in [
        "a_input.wav",
        "a_reference.wav",
        "a.json",
        "b_input.wav",
        "b_reference.wav",
        "b.json",
    ] {
        assert_eq!(
            std::fs::read(one.join(name)).unwrap(),
            std::fs::read(two.join(name)).unwrap(),
            "{name}"
        );
    }
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(one.join("a.json")).unwrap()).unwrap();
    assert_eq!(meta["reverb"]["direct_path_index"].as_u64(), Some(10));
    assert!(meta["noise"]["snr_db"].as_f64().unwrap() >= -5.0);
}

#[test]
fn augment_with_a_bad_source_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let speech = wav(&dir, "a.wav", &tone(0.2, 24000, 200.0));
    let noise = wav(&dir, "noise.wav", &tone(0.2, 16000, 900.0));
    let out_dir = dir.path().join("out");
    let o = lrac(&[
        "augment",
        "--speech",
        p(&speech),
        "--noise",
        p(&noise),
        "--output-dir",
        p(&out_dir),
        "--noise-probability",
        "1",
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out_dir.exists());
}

#[test]
fn fitted_weights_load_and_decode() {
    let dir = TempDir::new().unwrap();
    let weights = dir.path().join("fit.lracw");
    let out = lrac(&[
        "fit-rvq",
        "--frames",
        "600",
        "--epochs",
        "2",
        "--batch",
        "200",
        "--components",
        "8",
        "--absorb",
        "--output",
        p(&weights),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
    let input = wav(&dir, "in.wav", &tone(0.2, 24000, 440.0));
    let decoded = dir.path().join("out.wav");
    let out = lrac(&[
        "roundtrip",
        "--layers",
        "6",
        "--weights",
        p(&weights),
        "--input",
        p(&input),
        "--output",
        p(&decoded),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_wav(&decoded).unwrap().len(), 4800);
}
