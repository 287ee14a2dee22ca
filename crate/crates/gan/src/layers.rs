//! Layers with hand-written backward passes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{col2im, gemm, im2col, ConvGeom, Tensor};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f32 = 0.02;
pub const NORM_EPS: f32 = 1e-5;
pub const LEAKY_SLOPE: f32 = 0.2;

/// A trainable array with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    fn gaussian(len: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        Self {
            value: (0..len).map(|_| normal.sample(rng)).collect(),
            grad: vec![0.0; len],
        }
    }

    fn zeros(len: usize) -> Self {
        Self {
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// 4x4 convolution, plain or transposed.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub in_c: usize,
    pub out_c: usize,
    pub geom: ConvGeom,
    pub transposed: bool,
    /// `[out, in, k, k]` for plain, `[in, out, k, k]` for transposed.
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Conv {
    pub const KERNEL: usize = 4;

    pub fn new(in_c: usize, out_c: usize, stride: usize, transposed: bool, bias: bool, rng: &mut impl Rng) -> Self {
        let k = Self::KERNEL;
        Self {
            in_c,
            out_c,
            geom: ConvGeom {
                kernel: k,
                stride,
                pad: 1,
            },
            transposed,
            weight: Param::gaussian(in_c * out_c * k * k, rng),
            bias: bias.then(|| Param::zeros(out_c)),
        }
    }

    fn kk(&self) -> usize {
        self.geom.kernel * self.geom.kernel
    }

    pub fn out_side(&self, side: usize) -> Option<usize> {
        if self.transposed {
            Some(self.geom.transpose_out(side))
        } else {
            self.geom.conv_out(side)
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        debug_assert_eq!(c, self.in_c);
        let oh = self.out_side(h).expect("validated geometry");
        let ow = self.out_side(w).expect("validated geometry");
        let mut y = Tensor::zeros([n, self.out_c, oh, ow]);
        let kk = self.kk();
        if self.transposed {
            let mut col = vec![0.0; self.out_c * kk * h * w];
            for i in 0..n {
                gemm(self.out_c * kk, self.in_c, h * w, &self.weight.value, true, x.sample(i), false, 0.0, &mut col);
                col2im(&col, self.out_c, oh, ow, self.geom, h, w, y.sample_mut(i));
            }
        } else {
            let mut col = vec![0.0; self.in_c * kk * oh * ow];
            for i in 0..n {
                im2col(x.sample(i), c, h, w, self.geom, oh, ow, &mut col);
                gemm(self.out_c, self.in_c * kk, oh * ow, &self.weight.value, false, &col, false, 0.0, y.sample_mut(i));
            }
        }
        if let Some(b) = &self.bias {
            let plane = oh * ow;
            for i in 0..n {
                for (ch, chunk) in y.sample_mut(i).chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += b.value[ch]);
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient when asked.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let [n, c, h, w] = x.shape();
        let [_, oc, oh, ow] = dy.shape();
        let kk = self.kk();
        let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
        if self.transposed {
            let mut col = vec![0.0; oc * kk * h * w];
            for i in 0..n {
                im2col(dy.sample(i), oc, oh, ow, self.geom, h, w, &mut col);
                gemm(c, h * w, oc * kk, x.sample(i), false, &col, true, 1.0, &mut self.weight.grad);
                if let Some(dx) = dx.as_mut() {
                    gemm(c, oc * kk, h * w, &self.weight.value, false, &col, false, 0.0, dx.sample_mut(i));
                }
            }
        } else {
            let mut col = vec![0.0; c * kk * oh * ow];
            let mut dcol = vec![0.0; c * kk * oh * ow];
            for i in 0..n {
                im2col(x.sample(i), c, h, w, self.geom, oh, ow, &mut col);
                gemm(oc, oh * ow, c * kk, dy.sample(i), false, &col, true, 1.0, &mut self.weight.grad);
                if let Some(dx) = dx.as_mut() {
                    gemm(c * kk, oc, oh * ow, &self.weight.value, true, dy.sample(i), false, 0.0, &mut dcol);
                    col2im(&dcol, c, h, w, self.geom, oh, ow, dx.sample_mut(i));
                }
            }
        }
        if let Some(b) = self.bias.as_mut() {
            let plane = oh * ow;
            for i in 0..n {
                for (ch, chunk) in dy.sample(i).chunks(plane).enumerate() {
                    b.grad[ch] += chunk.iter().sum::<f32>();
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.weight];
        if let Some(b) = self.bias.as_mut() {
            out.push(b);
        }
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.weight];
        if let Some(b) = self.bias.as_ref() {
            out.push(b);
        }
        out
    }
}

/// Non-affine instance normalization; returns the output and per-plane 1/σ.
pub fn instance_norm(x: &Tensor) -> (Tensor, Vec<f32>) {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let mut y = x.clone();
    let mut inv_std = Vec::with_capacity(n * c);
    for chunk in y.data_mut().chunks_mut(plane) {
        let mean = chunk.iter().map(|&v| f64::from(v)).sum::<f64>() / plane as f64;
        let var = chunk.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / plane as f64;
        let inv = 1.0 / (var + f64::from(NORM_EPS)).sqrt();
        for v in chunk.iter_mut() {
            *v = ((f64::from(*v) - mean) * inv) as f32;
        }
        inv_std.push(inv as f32);
    }
    (y, inv_std)
}

/// Gradient of [`instance_norm`] given its output `y`.
pub fn instance_norm_backward(y: &Tensor, inv_std: &[f32], dy: &Tensor) -> Tensor {
    let plane = y.height() * y.width();
    let mut dx = Tensor::zeros(y.shape());
    for (((dxc, yc), dyc), &inv) in dx
        .data_mut()
        .chunks_mut(plane)
        .zip(y.data().chunks(plane))
        .zip(dy.data().chunks(plane))
        .zip(inv_std)
    {
        let mean_dy = dyc.iter().map(|&v| f64::from(v)).sum::<f64>() / plane as f64;
        let mean_dyy = dyc.iter().zip(yc).map(|(&g, &v)| f64::from(g) * f64::from(v)).sum::<f64>() / plane as f64;
        for ((d, &g), &v) in dxc.iter_mut().zip(dyc).zip(yc) {
            *d = (f64::from(inv) * (f64::from(g) - mean_dy - f64::from(v) * mean_dyy)) as f32;
        }
    }
    dx
}

pub fn leaky_relu(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v *= LEAKY_SLOPE;
        }
    });
}

/// Gradient through a leaky ReLU given its output (the sign is preserved).
pub fn leaky_relu_backward(out: &Tensor, dy: &mut Tensor) {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o < 0.0 {
            *g *= LEAKY_SLOPE;
        }
    }
}

pub fn relu(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

pub fn relu_backward(out: &Tensor, dy: &mut Tensor) {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn tanh(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward(out: &Tensor, dy: &mut Tensor) {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        *g *= 1.0 - o * o;
    }
}

/// Inverted dropout: draws a keep mask scaled by `1 / (1 - rate)` and applies it.
pub fn dropout<R: Rng + ?Sized>(x: &mut Tensor, rate: f32, rng: &mut R) -> Vec<f32> {
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f32> = (0..x.data().len())
        .map(|_| if rng.random::<f32>() < rate { 0.0 } else { scale })
        .collect();
    for (v, m) in x.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    mask
}

pub fn apply_mask(dy: &mut Tensor, mask: &[f32]) {
    for (g, m) in dy.data_mut().iter_mut().zip(mask) {
        *g *= m;
    }
}
