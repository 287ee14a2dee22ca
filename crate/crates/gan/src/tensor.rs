//! Dense NCHW tensors and the im2col / GEMM kernels behind the convolutions.

use crate::error::{GanError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(GanError::InvalidArgument(format!(
                "{} values do not fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, n: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Stacks single samples into a batch.
    pub fn stack(samples: &[&[f32]], chw: [usize; 3]) -> Result<Self> {
        let len = chw.iter().product::<usize>();
        let mut data = Vec::with_capacity(len * samples.len());
        for s in samples {
            if s.len() != len {
                return Err(GanError::InvalidArgument(format!(
                    "sample of {} values does not match {chw:?}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Self::from_vec([samples.len(), chw[0], chw[1], chw[2]], data)
    }

    /// Channel-wise concatenation `[a; b]` of two tensors with equal N, H, W.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
        let [n, ca, h, w] = a.shape;
        let cb = b.shape[1];
        debug_assert_eq!((b.shape[0], b.shape[2], b.shape[3]), (n, h, w));
        let mut out = Tensor::zeros([n, ca + cb, h, w]);
        let (la, lb) = (a.sample_len(), b.sample_len());
        for i in 0..n {
            let dst = out.sample_mut(i);
            dst[..la].copy_from_slice(a.sample(i));
            dst[la..la + lb].copy_from_slice(b.sample(i));
        }
        out
    }

    /// Splits the channel axis after the first `ca` channels.
    pub fn split_channels(&self, ca: usize) -> (Tensor, Tensor) {
        let [n, c, h, w] = self.shape;
        let mut a = Tensor::zeros([n, ca, h, w]);
        let mut b = Tensor::zeros([n, c - ca, h, w]);
        let la = ca * h * w;
        for i in 0..n {
            let src = self.sample(i);
            a.sample_mut(i).copy_from_slice(&src[..la]);
            b.sample_mut(i).copy_from_slice(&src[la..]);
        }
        (a, b)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c = a · b + beta · c` with `a` (m×k) and `b` (k×n) optionally stored transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, beta: f32, c: &mut [f32]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold at least m*k, k*n and m*n elements, and the
    // strides above address exactly those row-major (or transposed) layouts.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Square-kernel convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Output side of a convolution over an input side, `None` when it would be empty.
    pub fn conv_out(&self, size: usize) -> Option<usize> {
        let padded = size + 2 * self.pad;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    /// Output side of the transposed convolution.
    pub fn transpose_out(&self, size: usize) -> usize {
        (size - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Unfolds a `c × ih × iw` image into a `(c·k·k) × (oh·ow)` patch matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col(img: &[f32], c: usize, ih: usize, iw: usize, g: ConvGeom, oh: usize, ow: usize, col: &mut [f32]) {
    let k = g.kernel;
    let plane = oh * ow;
    for ci in 0..c {
        let src = &img[ci * ih * iw..(ci + 1) * ih * iw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= ih as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let line = &src[iy as usize * iw..(iy as usize + 1) * iw];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= iw as isize { 0.0 } else { line[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch values back into the image.
#[allow(clippy::too_many_arguments)]
pub fn col2im(col: &[f32], c: usize, ih: usize, iw: usize, g: ConvGeom, oh: usize, ow: usize, img: &mut [f32]) {
    let k = g.kernel;
    let plane = oh * ow;
    for ci in 0..c {
        let dst = &mut img[ci * ih * iw..(ci + 1) * ih * iw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= ih as isize {
                        continue;
                    }
                    let line = &mut dst[iy as usize * iw..(iy as usize + 1) * iw];
                    for (ox, &v) in row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < iw as isize {
                            line[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}
