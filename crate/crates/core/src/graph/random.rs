//! Random small graphs for property checks.

use rand::Rng;

use super::{ActivationKind, ConvSpec, Graph, GraphSpec, LayerSpec, Role};

#[derive(Debug, Clone, Copy)]
pub struct RandomGraphOptions {
    pub max_layers: usize,
    pub max_kernel: usize,
    pub max_stride: usize,
    pub max_dilation: usize,
    pub max_channels: usize,
    /// Inclusive range of output frames (encoder) or input frames (decoder)
    /// per second; sets the sample rate together with the strides.
    pub frames_per_second: (u64, u64),
}

impl Default for RandomGraphOptions {
    fn default() -> Self {
        Self {
            max_layers: 6,
            max_kernel: 9,
            max_stride: 5,
            max_dilation: 3,
            max_channels: 4,
            frames_per_second: (20, 60),
        }
    }
}

fn random_conv<R: Rng>(rng: &mut R, opts: &RandomGraphOptions, cin: usize, cout: usize) -> ConvSpec {
    let kernel = rng.random_range(1..=opts.max_kernel);
    let dilation = rng.random_range(1..=opts.max_dilation);
    let conv = ConvSpec::new(kernel, cin, cout).with_dilation(dilation);
    if conv.extent() % 2 == 1 && rng.random_bool(0.35) {
        conv.centered()
    } else {
        conv
    }
}

/// A valid encoder- or decoder-shaped graph with at most
/// `opts.max_layers` layers (skip markers included). All layer rates are
/// integral, so one second of input exercises whole numbers of outputs.
pub fn random_graph<R: Rng>(rng: &mut R, opts: &RandomGraphOptions) -> Graph {
    let role = if rng.random_bool(0.5) {
        Role::Encoder
    } else {
        Role::Decoder
    };
    let embedding_dim = match role {
        Role::Encoder => 0,
        Role::Decoder => rng.random_range(1..=opts.max_channels),
    };
    let mut channels = match role {
        Role::Encoder => 1,
        Role::Decoder => embedding_dim,
    };
    let n_layers = rng.random_range(1..=opts.max_layers);
    // a decoder reserves its last slot for the projection to one channel
    let budget = if role == Role::Decoder { n_layers - 1 } else { n_layers };
    let mut layers = Vec::with_capacity(n_layers);
    let mut stride_product = 1u64;
    while layers.len() < budget {
        let left = budget - layers.len();
        match rng.random_range(0..5) {
            0 if left >= 3 => {
                layers.push(LayerSpec::SkipBegin);
                layers.push(LayerSpec::Conv(random_conv(rng, opts, channels, channels)));
                layers.push(LayerSpec::SkipEnd);
            }
            1 => {
                let activation = if rng.random_bool(0.5) {
                    ActivationKind::Elu
                } else {
                    ActivationKind::Tanh
                };
                layers.push(LayerSpec::Activation { activation });
            }
            2 => {
                let stride = rng.random_range(2..=opts.max_stride);
                let out = rng.random_range(1..=opts.max_channels);
                stride_product *= stride as u64;
                if role == Role::Encoder {
                    let kernel = rng.random_range(1..=opts.max_kernel);
                    let dilation = rng.random_range(1..=2);
                    layers.push(LayerSpec::StridedConv(
                        ConvSpec::new(kernel, channels, out)
                            .with_stride(stride)
                            .with_dilation(dilation),
                    ));
                } else {
                    layers.push(LayerSpec::TransposedConv(
                        ConvSpec::new(stride, channels, out).with_stride(stride),
                    ));
                }
                channels = out;
            }
            _ => {
                let out = rng.random_range(1..=opts.max_channels);
                layers.push(LayerSpec::Conv(random_conv(rng, opts, channels, out)));
                channels = out;
            }
        }
    }
    if role == Role::Decoder {
        layers.push(LayerSpec::Conv(random_conv(rng, opts, channels, 1)));
        channels = 1;
    }
    let frames_per_second = rng.random_range(opts.frames_per_second.0..=opts.frames_per_second.1);
    GraphSpec {
        name: "random".into(),
        sample_rate: (stride_product * frames_per_second) as u32,
        role,
        embedding_dim: if role == Role::Encoder { channels } else { embedding_dim },
        layers,
    }
    .validate()
    .expect("generator only builds valid graphs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_graphs_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = RandomGraphOptions::default();
        for _ in 0..500 {
            let g = random_graph(&mut rng, &opts);
            assert!(g.layers.len() <= opts.max_layers);
            for l in &g.layers {
                if let Some(c) = l.conv() {
                    assert!(c.kernel <= opts.max_kernel);
                    assert!(c.stride <= opts.max_stride);
                }
            }
        }
    }
}
