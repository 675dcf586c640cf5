use super::*;
use crate::graph::{builtin, ConvSpec, GraphSpec, Role};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn single(conv: LayerSpec, sample_rate: u32, dim: usize) -> Graph {
    GraphSpec {
        name: "t".into(),
        sample_rate,
        role: Role::Encoder,
        embedding_dim: dim,
        layers: vec![conv],
    }
    .validate()
    .unwrap()
}

#[test]
fn identity_conv_reproduces_impulse() {
    let g = single(LayerSpec::Conv(ConvSpec::new(1, 1, 1)), 8, 1);
    let mut w = WeightSet::<f64>::zeros(&g);
    w.layers[0].as_mut().unwrap().set(0, 0, 0, 1.0);
    let mut e = StreamEngine::new(g, w).unwrap();
    let x = [0.0, 1.0, 0.0, 0.0];
    let mut y = e.push(&x);
    y.extend(e.flush());
    assert_eq!(y, x);
}

#[test]
fn zero_input_with_zero_bias_gives_zero_output() {
    let g = builtin::graph("track1_encoder");
    let mut w = WeightSet::<f32>::random(&g, 5);
    w.zero_biases();
    let mut e = StreamEngine::new(g, w).unwrap();
    let mut y = e.push(&vec![0.0; 4800]);
    y.extend(e.flush());
    assert_eq!(y.len(), 20 * 160);
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn encoder_frame_count_follows_input_length() {
    let g = builtin::graph("track1_encoder");
    let mut e = StreamEngine::<f32>::with_seed(g, 1);
    let mut frames = e.push(&vec![0.01; 62_400]).len();
    frames += e.flush().len();
    assert_eq!(frames / 160, 260);
}

#[test]
fn same_seed_same_weights() {
    let g = builtin::graph("track1_decoder");
    assert_eq!(WeightSet::<f32>::random(&g, 9), WeightSet::<f32>::random(&g, 9));
    assert_ne!(WeightSet::<f32>::random(&g, 9), WeightSet::<f32>::random(&g, 10));
}

#[test]
fn f32_and_f64_weights_agree() {
    let g = builtin::graph("track1_decoder");
    let a = WeightSet::<f32>::random(&g, 2);
    let b = WeightSet::<f64>::random(&g, 2).cast::<f32>();
    assert_eq!(a, b);
}

#[test]
fn mismatched_weights_are_rejected() {
    let g = single(LayerSpec::Conv(ConvSpec::new(3, 1, 2)), 8, 2);
    let mut w = WeightSet::<f32>::zeros(&g);
    w.layers[0].as_mut().unwrap().bias.pop();
    assert_eq!(
        StreamEngine::new(g.clone(), w).unwrap_err(),
        EngineError::ShapeMismatch { layer: 0 }
    );
    let mut w = WeightSet::<f32>::zeros(&g);
    w.layers[0].as_mut().unwrap().weight[1] = f32::INFINITY;
    assert_eq!(
        StreamEngine::new(g, w).unwrap_err(),
        EngineError::NonFiniteWeight { layer: 0 }
    );
}

#[test]
fn one_second_through_small_conv_costs_expected_flops() {
    let g = single(LayerSpec::Conv(ConvSpec::new(7, 1, 8)), 24_000, 8);
    let mut e = StreamEngine::<f32>::with_seed(g, 0);
    e.push(&vec![0.5; 24_000]);
    e.flush();
    assert_eq!(e.flops_executed(), 2_688_000);
}

#[test]
fn push_rejects_wrong_sample_rate() {
    let g = builtin::graph("track1_encoder");
    let mut e = StreamEngine::<f32>::with_seed(g, 0);
    let a = AudioBuffer::silence(10, 16_000);
    assert_eq!(
        e.push_samples(&a).unwrap_err(),
        EngineError::SampleRateMismatch {
            expected: 24_000,
            found: 16_000
        }
    );
}

#[test]
#[should_panic(expected = "push after flush")]
fn push_after_flush_panics() {
    let g = single(LayerSpec::Conv(ConvSpec::new(1, 1, 1)), 8, 1);
    let mut e = StreamEngine::<f32>::with_seed(g, 0);
    e.flush();
    e.push(&[1.0]);
}

#[test]
fn reset_restores_initial_behaviour() {
    let g = builtin::graph("track1_decoder");
    let mut e = StreamEngine::<f32>::with_seed(g, 3);
    let x: Vec<f32> = (0..160 * 5).map(|i| (i as f32 * 0.37).sin()).collect();
    let mut a = e.push(&x);
    a.extend(e.flush());
    e.reset();
    assert_eq!(e.macs_executed(), 0);
    let mut b = e.push(&x);
    b.extend(e.flush());
    assert_eq!(a, b);
}

#[test]
fn streaming_matches_offline_on_shipped_decoder() {
    let g = builtin::graph("track1_decoder");
    let w = WeightSet::<f64>::random(&g, 4);
    let x: Vec<f64> = (0..160 * 7).map(|i| (i as f64 * 0.11).cos() * 0.3).collect();
    let reference = run_offline(&g, &w, &x);
    let mut e = StreamEngine::new(g, w).unwrap();
    let mut y = Vec::new();
    for frame in x.chunks(160) {
        y.extend(e.push(frame));
    }
    y.extend(e.flush());
    assert_eq!(y, reference);
}

fn chunked<T: Scalar>(e: &mut StreamEngine<T>, x: &[T], sizes: &[usize]) -> Vec<T> {
    let cin = e.input_channels();
    let mut out = Vec::new();
    let mut pos = 0;
    let mut i = 0;
    while pos < x.len() {
        let n = (sizes[i % sizes.len()] * cin).min(x.len() - pos);
        out.extend(e.push(&x[pos..pos + n]));
        pos += n;
        i += 1;
    }
    out.extend(e.flush());
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn chunking_never_changes_output(
        seed in any::<u64>(),
        frames in 0usize..300,
        sizes in proptest::collection::vec(1usize..40, 1..6),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = crate::graph::random::random_graph(&mut rng, &Default::default());
        let w = WeightSet::<f64>::random(&g, seed);
        let cin = g.input_channels();
        let x: Vec<f64> = (0..frames * cin).map(|i| ((i as f64 + seed as f64 % 97.0) * 0.7).sin()).collect();
        let reference = run_offline(&g, &w, &x);
        let mut e = StreamEngine::new(g.clone(), w).unwrap();
        let y = chunked(&mut e, &x, &sizes);
        prop_assert_eq!(&y, &reference);
        prop_assert_eq!(e.flops_executed(), g.flops_for_input(frames as u64, FlopConvention::STANDARD));
    }
}
