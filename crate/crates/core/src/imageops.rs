//! Pure image transformations over [`FaceImage`].
//!
//! Everything here is a function of its inputs only. Pixels are stored as an
//! `H x W x C` array of `f32` together with a tag describing the value range.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};
use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared value range of a [`FaceImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeTag {
    /// `[0, 255]`
    Byte,
    /// `[0, 1]`
    Unit,
    /// `[-1, 1]`
    Signed,
    /// Output of a normalization whose bounds fall outside `[-1, 1]`
    /// (for example ImageNet statistics). Only finiteness is enforced.
    Standardized,
}

impl RangeTag {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            RangeTag::Byte => (0.0, 255.0),
            RangeTag::Unit => (0.0, 1.0),
            RangeTag::Signed => (-1.0, 1.0),
            RangeTag::Standardized => (f32::NEG_INFINITY, f32::INFINITY),
        }
    }

    fn contains(self, v: f32) -> bool {
        let (lo, hi) = self.bounds();
        v.is_finite() && v >= lo && v <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorLayout {
    Rgb,
    Gray,
}

/// An `H x W x C` image with `C` in `{1, 3}` and every value inside its range tag.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceImage {
    pixels: Array3<f32>,
    range: RangeTag,
}

impl FaceImage {
    pub fn new(pixels: Array3<f32>, range: RangeTag) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!("image must be nonempty, got {h}x{w}")));
        }
        if c != 1 && c != 3 {
            return Err(Error::invalid(format!("channel count must be 1 or 3, got {c}")));
        }
        if let Some(v) = pixels.iter().find(|v| !range.contains(**v)) {
            return Err(Error::invalid(format!(
                "pixel value {v} outside declared range {range:?}"
            )));
        }
        Ok(Self { pixels, range })
    }

    /// Builds an image without re-checking values. Callers guarantee the
    /// range invariant (convex combinations of in-range values, clamped output).
    pub(crate) fn from_parts(pixels: Array3<f32>, range: RangeTag) -> Self {
        debug_assert!(pixels.iter().all(|v| range.contains(*v)));
        Self { pixels, range }
    }

    pub fn zeros(height: usize, width: usize, channels: usize, range: RangeTag) -> Result<Self> {
        Self::new(Array3::zeros((height, width, channels)), range)
    }

    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        value: f32,
        range: RangeTag,
    ) -> Result<Self> {
        Self::new(Array3::from_elem((height, width, channels), value), range)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn range(&self) -> RangeTag {
        self.range
    }

    pub fn layout(&self) -> ColorLayout {
        if self.channels() == 3 {
            ColorLayout::Rgb
        } else {
            ColorLayout::Gray
        }
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f32> {
        self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[[y, x, c]]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().map(|&v| f64::from(v)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.pixels.len() as f64
    }

    /// Converts a byte-range image into the unit range. Unit images are returned as-is.
    pub fn to_unit(&self) -> Result<FaceImage> {
        match self.range {
            RangeTag::Unit => Ok(self.clone()),
            RangeTag::Byte => Ok(FaceImage::from_parts(
                self.pixels.mapv(|v| (v / 255.0).clamp(0.0, 1.0)),
                RangeTag::Unit,
            )),
            RangeTag::Signed => Ok(FaceImage::from_parts(
                self.pixels.mapv(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)),
                RangeTag::Unit,
            )),
            RangeTag::Standardized => Err(Error::invalid(
                "standardized images need their normalization spec to convert back",
            )),
        }
    }

    /// Replicates a single channel into RGB. RGB images are returned unchanged.
    pub fn to_rgb(&self) -> FaceImage {
        if self.channels() == 3 {
            return self.clone();
        }
        let (h, w, _) = self.pixels.dim();
        let plane = self.pixels.index_axis(Axis(2), 0);
        let pixels = Array3::from_shape_fn((h, w, 3), |(y, x, _)| plane[[y, x]]);
        FaceImage::from_parts(pixels, self.range)
    }

    pub fn from_rgb8(img: &RgbImage) -> FaceImage {
        let (w, h) = img.dimensions();
        let pixels = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
            f32::from(img.get_pixel(x as u32, y as u32)[c])
        });
        FaceImage::from_parts(pixels, RangeTag::Byte)
    }

    pub fn from_gray8(img: &GrayImage) -> FaceImage {
        let (w, h) = img.dimensions();
        let pixels = Array3::from_shape_fn((h as usize, w as usize, 1), |(y, x, _)| {
            f32::from(img.get_pixel(x as u32, y as u32)[0])
        });
        FaceImage::from_parts(pixels, RangeTag::Byte)
    }

    fn byte_value(&self, v: f32) -> u8 {
        let scaled = match self.range {
            RangeTag::Byte => v,
            RangeTag::Unit => v * 255.0,
            RangeTag::Signed => (v + 1.0) * 127.5,
            RangeTag::Standardized => v.clamp(0.0, 1.0) * 255.0,
        };
        scaled.round().clamp(0.0, 255.0) as u8
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (h, w, c) = self.pixels.dim();
        if c == 3 {
            let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                image::Rgb([
                    self.byte_value(self.pixels[[y, x, 0]]),
                    self.byte_value(self.pixels[[y, x, 1]]),
                    self.byte_value(self.pixels[[y, x, 2]]),
                ])
            });
            DynamicImage::ImageRgb8(img)
        } else {
            let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
                image::Luma([self.byte_value(self.pixels[[y as usize, x as usize, 0]])])
            });
            DynamicImage::ImageLuma8(img)
        }
    }

    /// Loads an image file as a byte-range image. Grayscale files stay single-channel.
    pub fn load(path: &Path) -> Result<FaceImage> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(match img {
            DynamicImage::ImageLuma8(g) => FaceImage::from_gray8(&g),
            other => FaceImage::from_rgb8(&other.to_rgb8()),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Per-channel normalization statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    mean: [f32; 3],
    std: [f32; 3],
}

impl NormalizationSpec {
    /// Maps `[0, 1]` onto `[-1, 1]`; used for generator targets and outputs.
    pub const GAN: NormalizationSpec = NormalizationSpec {
        mean: [0.5, 0.5, 0.5],
        std: [0.5, 0.5, 0.5],
    };

    /// ImageNet statistics used by the emotion and attribute classifiers.
    pub const IMAGENET: NormalizationSpec = NormalizationSpec {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    pub fn new(mean: [f32; 3], std: [f32; 3]) -> Result<Self> {
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(format!("std components must be > 0, got {std:?}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid(format!("mean must be finite, got {mean:?}")));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> [f32; 3] {
        self.mean
    }

    pub fn std(&self) -> [f32; 3] {
        self.std
    }

    /// Range tag of `normalize` output: signed when every channel maps `[0,1]` into `[-1,1]`.
    fn output_range(&self) -> RangeTag {
        let fits = (0..3).all(|c| {
            let lo = (0.0 - self.mean[c]) / self.std[c];
            let hi = (1.0 - self.mean[c]) / self.std[c];
            lo >= -1.0 && hi <= 1.0
        });
        if fits {
            RangeTag::Signed
        } else {
            RangeTag::Standardized
        }
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(format!("{name} must be positive")));
    }
    Ok(())
}

/// Output size for scaling the long axis to `target`, rounding the short axis half-up.
pub fn max_axis_dims(height: usize, width: usize, target: usize) -> (usize, usize) {
    let scale = |short: usize, long: usize| ((2 * short * target + long) / (2 * long)).max(1);
    if height >= width {
        (target, scale(width, height))
    } else {
        (scale(height, width), target)
    }
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: &FaceImage, out_h: usize, out_w: usize) -> Result<FaceImage> {
    check_positive("output height", out_h)?;
    check_positive("output width", out_w)?;
    let (h, w, c) = img.pixels.dim();
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let src = &img.pixels;
    let sample_axis = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let pos = (dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5;
        let pos = pos.clamp(0.0, (n_in - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, pos - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| sample_axis(x, w, out_w)).collect();
    let ys: Vec<_> = (0..out_h).map(|y| sample_axis(y, h, out_h)).collect();
    let (lo, hi) = img.range.bounds();
    let pixels = Array3::from_shape_fn((out_h, out_w, c), |(y, x, ch)| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let top = f64::from(src[[y0, x0, ch]]) * (1.0 - fx) + f64::from(src[[y0, x1, ch]]) * fx;
        let bottom = f64::from(src[[y1, x0, ch]]) * (1.0 - fx) + f64::from(src[[y1, x1, ch]]) * fx;
        ((top * (1.0 - fy) + bottom * fy) as f32).clamp(lo, hi)
    });
    Ok(FaceImage::from_parts(pixels, img.range))
}

/// Scales the image so its longer axis equals `target`, preserving aspect ratio.
pub fn resize_max_axis(img: &FaceImage, target: usize) -> Result<FaceImage> {
    check_positive("target", target)?;
    let (out_h, out_w) = max_axis_dims(img.height(), img.width(), target);
    resize_bilinear(img, out_h, out_w)
}

/// Centers the image on a `size x size` zero canvas. Odd padding puts the
/// extra row/column at the bottom/right.
pub fn zero_pad_center(img: &FaceImage, size: usize) -> Result<FaceImage> {
    check_positive("size", size)?;
    let (h, w, c) = img.pixels.dim();
    if h > size || w > size {
        return Err(Error::invalid(format!(
            "image {h}x{w} does not fit in {size}x{size}"
        )));
    }
    let top = (size - h) / 2;
    let left = (size - w) / 2;
    let mut out = Array3::<f32>::zeros((size, size, c));
    out.slice_mut(ndarray::s![top..top + h, left..left + w, ..])
        .assign(&img.pixels);
    Ok(FaceImage::from_parts(out, img.range))
}

/// Replaces each `k x k` block (ragged at the right/bottom border) by its per-channel mean.
pub fn pixelate(img: &FaceImage, k: usize) -> Result<FaceImage> {
    check_positive("block size", k)?;
    let (h, w, c) = img.pixels.dim();
    let (lo, hi) = img.range.bounds();
    let mut out = img.pixels.clone();
    for by in (0..h).step_by(k) {
        for bx in (0..w).step_by(k) {
            let y1 = (by + k).min(h);
            let x1 = (bx + k).min(w);
            let count = ((y1 - by) * (x1 - bx)) as f64;
            for ch in 0..c {
                let mut acc = 0.0f64;
                for y in by..y1 {
                    for x in bx..x1 {
                        acc += f64::from(img.pixels[[y, x, ch]]);
                    }
                }
                let mean = ((acc / count) as f32).clamp(lo, hi);
                for y in by..y1 {
                    for x in bx..x1 {
                        out[[y, x, ch]] = mean;
                    }
                }
            }
        }
    }
    Ok(FaceImage::from_parts(out, img.range))
}

/// Gaussian sigma for an odd kernel size: `0.3 * ((k - 1) / 2 - 1) + 0.8`.
pub fn gaussian_sigma(k: usize) -> f64 {
    0.3 * ((k as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian kernel of odd length `k`.
pub fn gaussian_kernel(k: usize) -> Result<Vec<f64>> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::invalid(format!("kernel size must be odd and positive, got {k}")));
    }
    let sigma = gaussian_sigma(k);
    let half = (k / 2) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Symmetric reflection with the edge sample repeated (`cba|abcd|dcb`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Separable Gaussian blur with a `k x k` kernel and reflective borders.
///
/// The reflection repeats the edge sample, which makes the operator's
/// columns sum to one: total mass is conserved for any image size.
pub fn blur(img: &FaceImage, k: usize) -> Result<FaceImage> {
    let kernel = gaussian_kernel(k)?;
    let (h, w, c) = img.pixels.dim();
    let half = (k / 2) as isize;
    let src = &img.pixels;

    let mut horiz = ndarray::Array3::<f64>::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, wt) in kernel.iter().enumerate() {
                    let sx = reflect(x as isize + t as isize - half, w);
                    acc += wt * f64::from(src[[y, sx, ch]]);
                }
                horiz[[y, x, ch]] = acc;
            }
        }
    }
    let (lo, hi) = img.range.bounds();
    let pixels = Array3::from_shape_fn((h, w, c), |(y, x, ch)| {
        let mut acc = 0.0;
        for (t, wt) in kernel.iter().enumerate() {
            let sy = reflect(y as isize + t as isize - half, h);
            acc += wt * horiz[[sy, x, ch]];
        }
        (acc as f32).clamp(lo, hi)
    });
    Ok(FaceImage::from_parts(pixels, img.range))
}

/// `(v - mean[c]) / std[c]` per channel. Requires a unit-range input.
pub fn normalize(img: &FaceImage, spec: &NormalizationSpec) -> Result<FaceImage> {
    if img.range != RangeTag::Unit {
        return Err(Error::invalid(format!(
            "normalize expects a unit-range image, got {:?}",
            img.range
        )));
    }
    let out_range = spec.output_range();
    let (lo, hi) = out_range.bounds();
    let mut pixels = img.pixels.clone();
    for ((_, _, ch), v) in pixels.indexed_iter_mut() {
        *v = ((*v - spec.mean[ch]) / spec.std[ch]).clamp(lo, hi);
    }
    Ok(FaceImage::from_parts(pixels, out_range))
}

/// Inverse of [`normalize`]; the result is clamped into the unit range.
pub fn denormalize(img: &FaceImage, spec: &NormalizationSpec) -> Result<FaceImage> {
    if !matches!(img.range, RangeTag::Signed | RangeTag::Standardized) {
        return Err(Error::invalid(format!(
            "denormalize expects a normalized image, got {:?}",
            img.range
        )));
    }
    let mut pixels = img.pixels.clone();
    for ((_, _, ch), v) in pixels.indexed_iter_mut() {
        *v = (*v * spec.std[ch] + spec.mean[ch]).clamp(0.0, 1.0);
    }
    Ok(FaceImage::from_parts(pixels, RangeTag::Unit))
}
