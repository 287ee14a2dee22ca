//! U-Net generator and patch discriminator.

use rand::{Rng, RngCore};

use crate::config::GanConfig;
use crate::layers::{
    apply_mask, dropout, instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, relu,
    relu_backward, tanh, tanh_backward, Conv, Param,
};
use crate::tensor::Tensor;

/// Input and output channels of both networks' image sides.
pub const IMAGE_CHANNELS: usize = 3;
/// Innermost decoder stages that apply dropout while training.
pub const DROPOUT_STAGES: usize = 3;

#[derive(Debug, Clone)]
struct Stage {
    conv: Conv,
    norm: bool,
}

#[derive(Debug, Clone)]
pub struct Generator {
    downs: Vec<Stage>,
    ups: Vec<Stage>,
    last: Conv,
    dropout: f32,
}

struct DownCache {
    input: Tensor,
    normed: Option<(Tensor, Vec<f32>)>,
    output: Tensor,
}

struct UpCache {
    input: Tensor,
    normed: (Tensor, Vec<f32>),
    activated: Tensor,
    mask: Option<Vec<f32>>,
}

pub struct GeneratorTrace {
    downs: Vec<DownCache>,
    ups: Vec<UpCache>,
    last_input: Tensor,
    pub output: Tensor,
}

/// Encoder widths: `base * min(2^i, 8)`.
pub fn encoder_channels(config: &GanConfig) -> Vec<usize> {
    (0..config.depth())
        .map(|i| config.base_channels * (1usize << i.min(3)))
        .collect()
}

impl Generator {
    pub fn new(config: &GanConfig, rng: &mut impl Rng) -> Self {
        let ch = encoder_channels(config);
        let depth = ch.len();
        let mut downs = Vec::with_capacity(depth);
        for i in 0..depth {
            let in_c = if i == 0 { IMAGE_CHANNELS } else { ch[i - 1] };
            let norm = i != 0 && i != depth - 1;
            downs.push(Stage {
                conv: Conv::new(in_c, ch[i], 2, false, !norm, rng),
                norm,
            });
        }
        let mut ups = Vec::with_capacity(depth - 1);
        for j in 0..depth - 1 {
            let in_c = if j == 0 { ch[depth - 1] } else { 2 * ch[depth - 1 - j] };
            ups.push(Stage {
                conv: Conv::new(in_c, ch[depth - 2 - j], 2, true, false, rng),
                norm: true,
            });
        }
        let last = Conv::new(2 * ch[0], IMAGE_CHANNELS, 2, true, true, rng);
        Self {
            downs,
            ups,
            last,
            dropout: config.dropout,
        }
    }

    /// Forward pass keeping the activations needed by [`Generator::backward`].
    /// Dropout is active only when a training RNG is supplied.
    pub fn forward_trace(&self, x: &Tensor, mut train_rng: Option<&mut dyn RngCore>) -> GeneratorTrace {
        let mut downs: Vec<DownCache> = Vec::with_capacity(self.downs.len());
        let mut cur = x.clone();
        for stage in &self.downs {
            let z = stage.conv.forward(&cur);
            let (mut out, normed) = if stage.norm {
                let (y, inv) = instance_norm(&z);
                (y.clone(), Some((y, inv)))
            } else {
                (z, None)
            };
            leaky_relu(&mut out);
            downs.push(DownCache {
                input: cur,
                normed,
                output: out.clone(),
            });
            cur = out;
        }
        let depth = self.downs.len();
        let mut ups: Vec<UpCache> = Vec::with_capacity(self.ups.len());
        for (j, stage) in self.ups.iter().enumerate() {
            let (y, inv) = instance_norm(&stage.conv.forward(&cur));
            let mut activated = y.clone();
            relu(&mut activated);
            let mut out = activated.clone();
            let mask = match train_rng.as_deref_mut() {
                Some(rng) if j < DROPOUT_STAGES && self.dropout > 0.0 => Some(dropout(&mut out, self.dropout, rng)),
                _ => None,
            };
            let skip = &downs[depth - 2 - j].output;
            let next = Tensor::concat_channels(&out, skip);
            ups.push(UpCache {
                input: cur,
                normed: (y, inv),
                activated,
                mask,
            });
            cur = next;
        }
        let mut output = self.last.forward(&cur);
        tanh(&mut output);
        GeneratorTrace {
            downs,
            ups,
            last_input: cur,
            output,
        }
    }

    /// Inference pass (no dropout).
    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_trace(x, None).output
    }

    /// Backpropagates `d_output` through the trace, accumulating parameter gradients.
    pub fn backward(&mut self, trace: &GeneratorTrace, d_output: &Tensor) {
        let depth = self.downs.len();
        let mut d_skip: Vec<Option<Tensor>> = (0..depth).map(|_| None).collect();

        let mut g = d_output.clone();
        tanh_backward(&trace.output, &mut g);
        let mut d_in = self.last.backward(&trace.last_input, &g, true).expect("input gradient");

        for j in (0..self.ups.len()).rev() {
            let cache = &trace.ups[j];
            let out_c = self.ups[j].conv.out_c;
            let (mut d_out, d_sk) = d_in.split_channels(out_c);
            d_skip[depth - 2 - j] = Some(d_sk);
            if let Some(mask) = &cache.mask {
                apply_mask(&mut d_out, mask);
            }
            relu_backward(&cache.activated, &mut d_out);
            let d_z = instance_norm_backward(&cache.normed.0, &cache.normed.1, &d_out);
            d_in = self.ups[j].conv.backward(&cache.input, &d_z, true).expect("input gradient");
        }

        let mut d_cur = d_in;
        for i in (0..depth).rev() {
            if let Some(extra) = d_skip[i].take() {
                d_cur.add_assign(&extra);
            }
            let cache = &trace.downs[i];
            leaky_relu_backward(&cache.output, &mut d_cur);
            let d_z = match &cache.normed {
                Some((y, inv)) => instance_norm_backward(y, inv, &d_cur),
                None => d_cur,
            };
            match self.downs[i].conv.backward(&cache.input, &d_z, i > 0) {
                Some(dx) => d_cur = dx,
                None => break,
            }
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.downs
            .iter()
            .chain(&self.ups)
            .flat_map(|s| s.conv.params())
            .chain(self.last.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = Vec::new();
        for s in self.downs.iter_mut().chain(self.ups.iter_mut()) {
            out.extend(s.conv.params_mut());
        }
        out.extend(self.last.params_mut());
        out
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    stages: Vec<Stage>,
    head: Conv,
}

struct DiscCache {
    input: Tensor,
    normed: Option<(Tensor, Vec<f32>)>,
    output: Tensor,
}

pub struct DiscriminatorTrace {
    stages: Vec<DiscCache>,
    head_input: Tensor,
    pub logits: Tensor,
}

impl Discriminator {
    pub fn new(config: &GanConfig, rng: &mut impl Rng) -> Self {
        let b = config.base_channels;
        let widths = [b, 2 * b, 4 * b, 8 * b];
        let strides = [2, 2, 2, 1];
        let mut stages = Vec::with_capacity(4);
        let mut in_c = 2 * IMAGE_CHANNELS;
        for (i, (&w, &s)) in widths.iter().zip(&strides).enumerate() {
            let norm = i != 0;
            stages.push(Stage {
                conv: Conv::new(in_c, w, s, false, !norm, rng),
                norm,
            });
            in_c = w;
        }
        let head = Conv::new(in_c, 1, 1, false, true, rng);
        Self { stages, head }
    }

    /// Side of the score map for a square input of side `size`.
    pub fn output_side(&self, size: usize) -> Option<usize> {
        let mut side = size;
        for s in &self.stages {
            side = s.conv.out_side(side)?;
        }
        self.head.out_side(side).filter(|&s| s > 0)
    }

    pub fn forward_trace(&self, x: &Tensor) -> DiscriminatorTrace {
        let mut stages = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for stage in &self.stages {
            let z = stage.conv.forward(&cur);
            let (mut out, normed) = if stage.norm {
                let (y, inv) = instance_norm(&z);
                (y.clone(), Some((y, inv)))
            } else {
                (z, None)
            };
            leaky_relu(&mut out);
            stages.push(DiscCache {
                input: cur,
                normed,
                output: out.clone(),
            });
            cur = out;
        }
        let logits = self.head.forward(&cur);
        DiscriminatorTrace {
            stages,
            head_input: cur,
            logits,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_trace(x).logits
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
    pub fn backward(&mut self, trace: &DiscriminatorTrace, d_logits: &Tensor) -> Tensor {
        let mut d = self.head.backward(&trace.head_input, d_logits, true).expect("input gradient");
        for i in (0..self.stages.len()).rev() {
            let cache = &trace.stages[i];
            leaky_relu_backward(&cache.output, &mut d);
            let d_z = match &cache.normed {
                Some((y, inv)) => instance_norm_backward(y, inv, &d),
                None => d,
            };
            d = self.stages[i].conv.backward(&cache.input, &d_z, true).expect("input gradient");
        }
        d
    }

    pub fn params(&self) -> Vec<&Param> {
        self.stages
            .iter()
            .flat_map(|s| s.conv.params())
            .chain(self.head.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = Vec::new();
        for s in self.stages.iter_mut() {
            out.extend(s.conv.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }
}

pub fn zero_grads(params: Vec<&mut Param>) {
    for p in params {
        p.zero_grad();
    }
}
