//! Paired (landmark raster, face) training data in network layout.

use std::path::Path;

use lmanon_core::facepipe::PreparationManifest;
use lmanon_core::imageops::{normalize, resize_bilinear};
use lmanon_core::raster::{landmark_raster, RASTER_SIZE};
use lmanon_core::template::canonical_face;
use lmanon_core::{FaceImage, LandmarkImage, LandmarkSet, NormalizationSpec, RangeTag};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GanError, Result};
use crate::nets::IMAGE_CHANNELS;
use crate::tensor::Tensor;

/// Raster at `size`, replicated to three channels: white maps to 1, black to -1.
pub fn raster_planes(raster: &LandmarkImage, size: usize) -> Vec<f32> {
    let small = raster.resample(size);
    let plane: Vec<f32> = small.data().iter().map(|&v| if v > 0 { 1.0 } else { -1.0 }).collect();
    plane.repeat(IMAGE_CHANNELS)
}

/// Single-sample generator input for a raster.
pub fn raster_tensor(raster: &LandmarkImage, size: usize) -> Tensor {
    Tensor::from_vec([1, IMAGE_CHANNELS, size, size], raster_planes(raster, size)).expect("planes fill the shape")
}

/// Face resized to `size`, normalized to `[-1, 1]` and laid out channel-first.
pub fn face_planes(face: &FaceImage, size: usize) -> Result<Vec<f32>> {
    let unit = face.to_unit()?.to_rgb();
    let resized = if unit.height() == size && unit.width() == size {
        unit
    } else {
        resize_bilinear(&unit, size, size)?
    };
    let signed = normalize(&resized, &NormalizationSpec::GAN)?;
    let px = signed.pixels();
    let mut out = Vec::with_capacity(IMAGE_CHANNELS * size * size);
    for c in 0..IMAGE_CHANNELS {
        for y in 0..size {
            for x in 0..size {
                out.push(px[[y, x, c]]);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`face_planes`] before denormalization: a signed-range image.
pub fn planes_to_face(planes: &[f32], size: usize) -> Result<FaceImage> {
    if planes.len() != IMAGE_CHANNELS * size * size {
        return Err(GanError::InvalidArgument(format!(
            "{} values do not form a {size}x{size} RGB image",
            planes.len()
        )));
    }
    let plane = size * size;
    let pixels = Array3::from_shape_fn((size, size, IMAGE_CHANNELS), |(y, x, c)| {
        planes[c * plane + y * size + x].clamp(-1.0, 1.0)
    });
    Ok(FaceImage::new(pixels, RangeTag::Signed)?)
}

#[derive(Debug, Clone)]
pub struct GanDataset {
    size: usize,
    conditions: Vec<Vec<f32>>,
    targets: Vec<Vec<f32>>,
}

impl GanDataset {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            conditions: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn push(&mut self, raster: &LandmarkImage, face: &FaceImage) -> Result<()> {
        self.targets.push(face_planes(face, self.size)?);
        self.conditions.push(raster_planes(raster, self.size));
        Ok(())
    }

    pub fn from_pairs<'a>(size: usize, pairs: impl IntoIterator<Item = (&'a LandmarkImage, &'a FaceImage)>) -> Result<Self> {
        let mut out = Self::new(size);
        for (raster, face) in pairs {
            out.push(raster, face)?;
        }
        Ok(out)
    }

    /// Loads every face of a prepared dataset directory (one holding `manifest.json`).
    pub fn load_prepared(dir: &Path, size: usize) -> Result<Self> {
        let manifest = PreparationManifest::load(&dir.join("manifest.json"))?;
        let mut out = Self::new(size);
        for (_, face) in manifest.faces() {
            let raster = LandmarkImage::load_png(&dir.join(&face.raster))?;
            let image = FaceImage::load(&dir.join(&face.face))?;
            out.push(&raster, &image)?;
        }
        Ok(out)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn condition(&self, i: usize) -> &[f32] {
        &self.conditions[i]
    }

    pub fn target(&self, i: usize) -> &[f32] {
        &self.targets[i]
    }

    /// `(conditions, targets)` tensors for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let chw = [IMAGE_CHANNELS, self.size, self.size];
        let cond: Vec<&[f32]> = indices.iter().map(|&i| self.condition(i)).collect();
        let tgt: Vec<&[f32]> = indices.iter().map(|&i| self.target(i)).collect();
        (
            Tensor::stack(&cond, chw).expect("uniform samples"),
            Tensor::stack(&tgt, chw).expect("uniform samples"),
        )
    }

    /// Moves the last `count` samples into a second dataset.
    pub fn split_off(&mut self, count: usize) -> GanDataset {
        let at = self.len().saturating_sub(count);
        GanDataset {
            size: self.size,
            conditions: self.conditions.split_off(at),
            targets: self.targets.split_off(at),
        }
    }
}

/// Random similarity-plus-stretch placement of the canonical layout.
#[derive(Debug, Clone, Copy)]
struct Placement {
    scale: (f64, f64),
    angle: f64,
    offset: (f64, f64),
}

const ORIGIN: (f64, f64) = (0.5, 0.5);
// Outline of the canonical layout.
const OUTLINE_CENTER: (f64, f64) = (0.5, 0.52);
const OUTLINE_AXES: (f64, f64) = (0.34, 0.42);
const SKIN: [f64; 3] = [0.87, 0.68, 0.56];
const EDGE_SOFTNESS: f64 = 0.06;

impl Placement {
    fn sample(rng: &mut impl Rng) -> Self {
        Self {
            scale: (rng.random_range(0.6..0.9), rng.random_range(0.6..0.9)),
            angle: rng.random_range(-0.25..0.25),
            offset: (rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06)),
        }
    }

    fn forward(&self, p: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = ((p.0 - ORIGIN.0) * self.scale.0, (p.1 - ORIGIN.1) * self.scale.1);
        let (s, c) = self.angle.sin_cos();
        (
            ORIGIN.0 + c * dx - s * dy + self.offset.0,
            ORIGIN.1 + s * dx + c * dy + self.offset.1,
        )
    }

    fn inverse(&self, p: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (p.0 - ORIGIN.0 - self.offset.0, p.1 - ORIGIN.1 - self.offset.1);
        let (s, c) = self.angle.sin_cos();
        (
            ORIGIN.0 + (c * dx + s * dy) / self.scale.0,
            ORIGIN.1 + (-s * dx + c * dy) / self.scale.1,
        )
    }

    fn landmarks(&self) -> LandmarkSet {
        let pts = canonical_face()
            .iter()
            .map(|p| {
                let (x, y) = self.forward((f64::from(p[0]), f64::from(p[1])));
                [x as f32, y as f32, p[2]]
            })
            .collect();
        LandmarkSet::new(pts).expect("478 finite points")
    }

    /// Shaded oval following the placed outline, on black.
    fn target(&self, size: usize) -> FaceImage {
        let span = (size - 1).max(1) as f64;
        let pixels = Array3::from_shape_fn((size, size, 3), |(y, x, c)| {
            let q = self.inverse((x as f64 / span, y as f64 / span));
            let u = (q.0 - OUTLINE_CENTER.0) / OUTLINE_AXES.0;
            let v = (q.1 - OUTLINE_CENTER.1) / OUTLINE_AXES.1;
            let r = (u * u + v * v).sqrt();
            let alpha = ((1.0 - r) / EDGE_SOFTNESS).clamp(0.0, 1.0);
            let shade = 0.55 + 0.45 * (1.0 - r * r).max(0.0);
            (SKIN[c] * shade * alpha) as f32
        });
        FaceImage::new(pixels, RangeTag::Unit).expect("unit range")
    }
}

/// `count` seeded pairs of (warped canonical landmark raster, matching shaded oval).
pub fn synthetic_pairs(count: usize, size: usize, seed: u64) -> Vec<(LandmarkImage, FaceImage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let placement = Placement::sample(&mut rng);
            let raster = landmark_raster(&placement.landmarks(), RASTER_SIZE).resample(size);
            (raster, placement.target(size))
        })
        .collect()
}

/// Dataset built from [`synthetic_pairs`].
pub fn synthetic_dataset(count: usize, size: usize, seed: u64) -> Result<GanDataset> {
    let pairs = synthetic_pairs(count, size, seed);
    GanDataset::from_pairs(size, pairs.iter().map(|(r, f)| (r, f)))
}
