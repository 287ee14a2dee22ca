//! Injected model interfaces and the reference implementations shipped with the crate.
//!
//! Detection, segmentation, landmarking, embedding and classification are
//! delegated to adapters. Two families ship here: [`GeometricAdapter`], which
//! runs with no external models, and [`FixtureAdapter`], which replays
//! recorded detections and landmarks from JSON sidecar files. Out-of-process
//! adapters live in the CLI crate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ClassProbabilities, Embedding, ProbabilityKind};
use crate::imageops::FaceImage;
use crate::raster::LandmarkSet;
use crate::template;

/// An image handed to an adapter, with its on-disk location when it has one.
#[derive(Debug, Clone, Copy)]
pub struct ImageRef<'a> {
    pub image: &'a FaceImage,
    pub path: Option<&'a Path>,
}

impl<'a> ImageRef<'a> {
    pub fn new(image: &'a FaceImage) -> Self {
        Self { image, path: None }
    }

    pub fn with_path(image: &'a FaceImage, path: &'a Path) -> Self {
        Self {
            image,
            path: Some(path),
        }
    }
}

/// Axis-aligned box in source pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f32; 4]", into = "[f32; 4]")]
pub struct BBox {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
}

impl From<[f32; 4]> for BBox {
    fn from(v: [f32; 4]) -> Self {
        BBox {
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
        }
    }
}

impl From<BBox> for [f32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    /// Integer pixel rectangle `(x0, y0, x1, y1)` clamped to a `width x height` image.
    /// `None` when the clamped box is empty.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let clamp = |v: f32, hi: usize| -> usize {
            if v.is_nan() {
                0
            } else {
                v.max(0.0).min(hi as f32) as usize
            }
        };
        let x0 = clamp(self.x.floor(), width);
        let y0 = clamp(self.y.floor(), height);
        let x1 = clamp((self.x + self.w).ceil(), width);
        let y1 = clamp((self.y + self.h).ceil(), height);
        (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
    }
}

pub const LEFT_EYE: &str = "left_eye";
pub const RIGHT_EYE: &str = "right_eye";

/// One detected face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceDetection {
    pub bbox: BBox,
    #[serde(default)]
    pub keypoints: BTreeMap<String, [f32; 2]>,
    pub confidence: f32,
}

impl FaceDetection {
    pub fn new(bbox: BBox, keypoints: BTreeMap<String, [f32; 2]>, confidence: f32) -> Result<Self> {
        let det = Self {
            bbox,
            keypoints,
            confidence,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!(
                "detection confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        let b = self.bbox;
        if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) || b.w < 0.0 || b.h < 0.0 {
            return Err(Error::invalid(format!("malformed bounding box {b:?}")));
        }
        Ok(())
    }

    pub fn eyes(&self) -> Option<([f32; 2], [f32; 2])> {
        Some((*self.keypoints.get(LEFT_EYE)?, *self.keypoints.get(RIGHT_EYE)?))
    }
}

/// Binary `{0, 1}` mask aligned with a face image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "mask buffer of {} values does not match {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask values must be 0 or 1"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn support(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Mask as an 8-bit image: 255 inside, 0 outside.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().map(|&v| v * 255).collect(),
        )
        .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    /// Reads an 8-bit mask image; any nonzero value counts as inside.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let data = img.as_raw().iter().map(|&v| u8::from(v > 0)).collect();
        Self::new(img.height() as usize, img.width() as usize, data)
    }
}

pub trait FaceDetector: Send + Sync {
    fn id(&self) -> String;
    fn detect(&self, input: ImageRef<'_>) -> Result<Vec<FaceDetection>>;
}

pub trait FaceSegmenter: Send + Sync {
    fn id(&self) -> String;
    fn segment(&self, input: ImageRef<'_>) -> Result<SegmentationMask>;
}

pub trait LandmarkExtractor: Send + Sync {
    fn id(&self) -> String;
    /// `Ok(None)` when no face mesh can be fitted.
    fn extract(&self, input: ImageRef<'_>) -> Result<Option<LandmarkSet>>;
}

pub trait FaceEmbedder: Send + Sync {
    fn id(&self) -> String;
    fn embed(&self, input: ImageRef<'_>) -> Result<Embedding>;
}

pub trait ProbabilityClassifier: Send + Sync {
    fn id(&self) -> String;
    fn predict(&self, input: ImageRef<'_>) -> Result<ClassProbabilities>;
}

/// Bundle of the three preprocessing adapters.
#[derive(Clone, Copy)]
pub struct PipelineAdapters<'a> {
    pub detector: &'a dyn FaceDetector,
    pub segmenter: &'a dyn FaceSegmenter,
    pub landmarker: &'a dyn LandmarkExtractor,
}

impl PipelineAdapters<'_> {
    pub fn ids(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("detector".to_string(), self.detector.id()),
            ("segmenter".to_string(), self.segmenter.id()),
            ("landmarker".to_string(), self.landmarker.id()),
        ])
    }
}

/// True when the image carries no structure at all (every value equal within `tol`).
pub fn is_blank(img: &FaceImage, tol: f32) -> bool {
    let (lo, hi) = img
        .pixels()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo <= tol
}

/// Bounding box `(x0, y0, x1, y1)` (exclusive end) of pixels with any channel nonzero.
pub fn content_box(img: &FaceImage) -> Option<(usize, usize, usize, usize)> {
    let (h, w, c) = img.pixels().dim();
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for y in 0..h {
        for x in 0..w {
            if (0..c).any(|ch| img.get(y, x, ch) != 0.0) {
                bounds = Some(match bounds {
                    None => (x, y, x + 1, y + 1),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                });
            }
        }
    }
    bounds
}

/// Model-free reference adapter.
///
/// * detector: one full-frame box with template eye keypoints, nothing for blank images
/// * segmenter: the ellipse inscribed in the frame
/// * landmarker: the canonical template warped onto the nonzero-content box,
///   nothing for blank images
#[derive(Debug, Clone)]
pub struct GeometricAdapter {
    pub blank_tolerance: f32,
}

impl Default for GeometricAdapter {
    fn default() -> Self {
        Self {
            blank_tolerance: 1e-6,
        }
    }
}

impl GeometricAdapter {
    fn keypoint(box_: (f32, f32, f32, f32), p: (f64, f64)) -> [f32; 2] {
        let (x, y, w, h) = box_;
        [x + p.0 as f32 * w, y + p.1 as f32 * h]
    }
}

impl FaceDetector for GeometricAdapter {
    fn id(&self) -> String {
        "geometric".into()
    }

    fn detect(&self, input: ImageRef<'_>) -> Result<Vec<FaceDetection>> {
        let img = input.image;
        if is_blank(img, self.blank_tolerance) {
            return Ok(Vec::new());
        }
        let frame = (0.0, 0.0, img.width() as f32, img.height() as f32);
        let keypoints = BTreeMap::from([
            (LEFT_EYE.to_string(), Self::keypoint(frame, template::LEFT_EYE)),
            (RIGHT_EYE.to_string(), Self::keypoint(frame, template::RIGHT_EYE)),
            ("nose".to_string(), Self::keypoint(frame, template::NOSE_TIP)),
            ("mouth_left".to_string(), Self::keypoint(frame, template::MOUTH_LEFT)),
            ("mouth_right".to_string(), Self::keypoint(frame, template::MOUTH_RIGHT)),
        ]);
        Ok(vec![FaceDetection::new(
            BBox {
                x: 0.0,
                y: 0.0,
                w: frame.2,
                h: frame.3,
            },
            keypoints,
            1.0,
        )?])
    }
}

impl FaceSegmenter for GeometricAdapter {
    fn id(&self) -> String {
        "geometric".into()
    }

    fn segment(&self, input: ImageRef<'_>) -> Result<SegmentationMask> {
        let (h, w) = (input.image.height(), input.image.width());
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (ax, ay) = ((w as f64 / 2.0).max(0.5), (h as f64 / 2.0).max(0.5));
        Ok(SegmentationMask::from_fn(h, w, |y, x| {
            let dx = (x as f64 - cx) / ax;
            let dy = (y as f64 - cy) / ay;
            dx * dx + dy * dy <= 1.0
        }))
    }
}

impl LandmarkExtractor for GeometricAdapter {
    fn id(&self) -> String {
        "geometric".into()
    }

    fn extract(&self, input: ImageRef<'_>) -> Result<Option<LandmarkSet>> {
        let img = input.image;
        if is_blank(img, self.blank_tolerance) {
            return Ok(None);
        }
        let (w, h) = (img.width() as f32, img.height() as f32);
        let (x0, y0, x1, y1) = content_box(img).unwrap_or((0, 0, img.width(), img.height()));
        let (bx, by) = (x0 as f32, y0 as f32);
        let (bw, bh) = ((x1 - x0) as f32, (y1 - y0) as f32);
        let pts = template::canonical_face()
            .iter()
            .map(|p| [(bx + p[0] * bw) / w, (by + p[1] * bh) / h, p[2]])
            .collect();
        LandmarkSet::new(pts).map(Some)
    }
}

/// One image's recorded adapter outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default)]
    pub detections: Vec<SidecarDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarDetection {
    #[serde(flatten)]
    pub detection: FaceDetection,
    /// Landmarks of the extracted face, relative to the face image.
    #[serde(default)]
    pub landmarks: Option<LandmarkSet>,
}

/// Replays detections and landmarks from `<stem>.json` sidecars in a directory.
///
/// Source images are matched by file stem. Extracted faces named
/// `<stem>_face<i>.*` resolve to detection `i` of sidecar `<stem>`.
#[derive(Debug, Clone, Default)]
pub struct FixtureAdapter {
    sidecars: BTreeMap<String, Sidecar>,
}

impl FixtureAdapter {
    pub fn new(sidecars: BTreeMap<String, Sidecar>) -> Self {
        Self { sidecars }
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut sidecars = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let sidecar: Sidecar = serde_json::from_str(&text)?;
            for d in &sidecar.detections {
                d.detection.validate()?;
            }
            sidecars.insert(stem.to_string(), sidecar);
        }
        Ok(Self { sidecars })
    }

    pub fn len(&self) -> usize {
        self.sidecars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sidecars.is_empty()
    }

    fn stem(input: &ImageRef<'_>) -> Result<String> {
        input
            .path
            .and_then(|p| p.file_stem())
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Adapter {
                adapter: "fixture".into(),
                message: "replay needs the image path".into(),
            })
    }

    fn face_key(stem: &str) -> Option<(&str, usize)> {
        let (base, idx) = stem.rsplit_once("_face")?;
        Some((base, idx.parse().ok()?))
    }
}

impl FaceDetector for FixtureAdapter {
    fn id(&self) -> String {
        "fixture".into()
    }

    fn detect(&self, input: ImageRef<'_>) -> Result<Vec<FaceDetection>> {
        let stem = Self::stem(&input)?;
        Ok(self
            .sidecars
            .get(&stem)
            .map(|s| s.detections.iter().map(|d| d.detection.clone()).collect())
            .unwrap_or_default())
    }
}

impl LandmarkExtractor for FixtureAdapter {
    fn id(&self) -> String {
        "fixture".into()
    }

    fn extract(&self, input: ImageRef<'_>) -> Result<Option<LandmarkSet>> {
        let stem = Self::stem(&input)?;
        if let Some(s) = self.sidecars.get(&stem) {
            return Ok(s.detections.first().and_then(|d| d.landmarks.clone()));
        }
        let Some((base, idx)) = Self::face_key(&stem) else {
            return Ok(None);
        };
        let Some(sidecar) = self.sidecars.get(base) else {
            return Ok(None);
        };
        let dets: Vec<FaceDetection> = sidecar.detections.iter().map(|d| d.detection.clone()).collect();
        Ok(confidence_order(&dets)
            .get(idx)
            .and_then(|&i| sidecar.detections[i].landmarks.clone()))
    }
}

/// Indices of `dets` by descending confidence; ties keep their original order.
pub fn confidence_order(dets: &[FaceDetection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Mean of each channel over a `grid x grid` partition of the image, in [0, 1].
fn grid_means(img: &FaceImage, grid: usize) -> Result<Vec<f64>> {
    let unit = img.to_unit()?.to_rgb();
    let (h, w) = (unit.height(), unit.width());
    let mut out = Vec::with_capacity(grid * grid * 3);
    for gy in 0..grid {
        for gx in 0..grid {
            let (y0, y1) = (gy * h / grid, ((gy + 1) * h / grid).max(gy * h / grid + 1).min(h));
            let (x0, x1) = (gx * w / grid, ((gx + 1) * w / grid).max(gx * w / grid + 1).min(w));
            for c in 0..3 {
                let mut sum = 0.0f64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += f64::from(unit.get(y, x, c));
                    }
                }
                out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Ok(out)
}

/// Deterministic stand-in for a face recognition model: centered grid means
/// plus a constant component, so every image has a nonzero embedding.
#[derive(Debug, Clone)]
pub struct PixelStatsEmbedder {
    pub grid: usize,
}

impl Default for PixelStatsEmbedder {
    fn default() -> Self {
        Self { grid: 4 }
    }
}

impl FaceEmbedder for PixelStatsEmbedder {
    fn id(&self) -> String {
        format!("pixel-stats-{}", self.grid)
    }

    fn embed(&self, input: ImageRef<'_>) -> Result<Embedding> {
        let mut v: Vec<f32> = grid_means(input.image, self.grid)?
            .into_iter()
            .map(|m| (m - 0.5) as f32)
            .collect();
        v.push(0.25);
        Embedding::new(v)
    }
}

/// Deterministic stand-in for an emotion or attribute classifier: a fixed
/// random linear map of 2x2 grid means, squashed by softmax (multi-class) or
/// sigmoid (multi-label).
#[derive(Debug, Clone)]
pub struct PixelStatsClassifier {
    kind: ProbabilityKind,
    labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    seed: u64,
}

impl PixelStatsClassifier {
    const GRID: usize = 2;

    pub fn new(kind: ProbabilityKind, labels: Vec<String>, seed: u64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("classifier needs at least one label"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Self::GRID * Self::GRID * 3 + 1;
        let weights = labels
            .iter()
            .map(|_| (0..features).map(|_| rng.random_range(-6.0..6.0)).collect())
            .collect();
        Ok(Self {
            kind,
            labels,
            weights,
            seed,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl ProbabilityClassifier for PixelStatsClassifier {
    fn id(&self) -> String {
        let kind = match self.kind {
            ProbabilityKind::MultiClass => "softmax",
            ProbabilityKind::MultiLabel => "sigmoid",
        };
        format!("pixel-stats-{kind}-{}", self.seed)
    }

    fn predict(&self, input: ImageRef<'_>) -> Result<ClassProbabilities> {
        let mut f: Vec<f64> = grid_means(input.image, Self::GRID)?.into_iter().map(|m| m - 0.5).collect();
        f.push(1.0);
        let logits: Vec<f64> = self
            .weights
            .iter()
            .map(|w| w.iter().zip(&f).map(|(a, b)| a * b).sum())
            .collect();
        let values = match self.kind {
            ProbabilityKind::MultiClass => {
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = exp.iter().sum();
                exp.into_iter().map(|e| e / total).collect()
            }
            ProbabilityKind::MultiLabel => logits.iter().map(|l| 1.0 / (1.0 + (-l).exp())).collect(),
        };
        ClassProbabilities::new(self.kind, self.labels.clone(), values)
    }
}

/// Writes a sidecar next to fixture images; used to build replay fixtures.
pub fn write_sidecar(dir: &Path, stem: &str, sidecar: &Sidecar) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(sidecar)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::RangeTag;
    use crate::raster::LANDMARK_COUNT;
    use ndarray::Array3;

    fn blob(h: usize, w: usize) -> FaceImage {
        FaceImage::new(
            Array3::from_shape_fn((h, w, 3), |(y, x, c)| ((y * 3 + x * 5 + c) % 200) as f32),
            RangeTag::Byte,
        )
        .unwrap()
    }

    #[test]
    fn geometric_detects_full_frame_unless_blank() {
        let g = GeometricAdapter::default();
        let img = blob(40, 60);
        let dets = g.detect(ImageRef::new(&img)).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BBox { x: 0.0, y: 0.0, w: 60.0, h: 40.0 });
        let (l, r) = dets[0].eyes().unwrap();
        assert_eq!(l[1], r[1]);
        assert!(l[0] < r[0]);

        let blank = FaceImage::zeros(40, 60, 3, RangeTag::Byte).unwrap();
        assert!(g.detect(ImageRef::new(&blank)).unwrap().is_empty());
        assert!(g.extract(ImageRef::new(&blank)).unwrap().is_none());
    }

    #[test]
    fn geometric_mask_is_inscribed_ellipse() {
        let img = blob(20, 30);
        let mask = GeometricAdapter::default().segment(ImageRef::new(&img)).unwrap();
        assert!(mask.get(10, 15));
        assert!(!mask.get(0, 0));
        assert!(!mask.get(19, 29));
    }

    #[test]
    fn geometric_landmarks_follow_content_box() {
        let mut px = Array3::<f32>::zeros((100, 100, 3));
        for y in 20..80 {
            for x in 30..70 {
                px[[y, x, 0]] = 100.0;
            }
        }
        let img = FaceImage::new(px, RangeTag::Byte).unwrap();
        let set = GeometricAdapter::default().extract(ImageRef::new(&img)).unwrap().unwrap();
        assert_eq!(set.points().len(), LANDMARK_COUNT);
        for p in set.points() {
            assert!(p[0] >= 0.3 - 1e-6 && p[0] <= 0.7 + 1e-6);
            assert!(p[1] >= 0.2 - 1e-6 && p[1] <= 0.8 + 1e-6);
        }
    }

    #[test]
    fn bbox_clamping() {
        let b = BBox { x: -5.0, y: 2.5, w: 20.0, h: 100.0 };
        assert_eq!(b.clamp_to(10, 50), Some((0, 2, 10, 50)));
        let outside = BBox { x: 20.0, y: 0.0, w: 5.0, h: 5.0 };
        assert_eq!(outside.clamp_to(10, 10), None);
    }

    #[test]
    fn detection_validation() {
        let b = BBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 };
        assert!(FaceDetection::new(b, BTreeMap::new(), 1.5).is_err());
        assert!(FaceDetection::new(BBox { w: -1.0, ..b }, BTreeMap::new(), 0.5).is_err());
    }

    #[test]
    fn fixture_replays_by_stem_and_face_index() {
        let dir = tempfile::tempdir().unwrap();
        let lms = LandmarkSet::new(vec![[0.25, 0.75, 0.0]; LANDMARK_COUNT]).unwrap();
        let sidecar = Sidecar {
            detections: vec![
                SidecarDetection {
                    detection: FaceDetection::new(
                        BBox { x: 1.0, y: 2.0, w: 3.0, h: 4.0 },
                        BTreeMap::new(),
                        0.7,
                    )
                    .unwrap(),
                    landmarks: None,
                },
                SidecarDetection {
                    detection: FaceDetection::new(
                        BBox { x: 5.0, y: 6.0, w: 7.0, h: 8.0 },
                        BTreeMap::new(),
                        0.9,
                    )
                    .unwrap(),
                    landmarks: Some(lms.clone()),
                },
            ],
        };
        write_sidecar(dir.path(), "img01", &sidecar).unwrap();
        let fx = FixtureAdapter::from_dir(dir.path()).unwrap();
        let img = blob(4, 4);

        let src = dir.path().join("img01.png");
        assert_eq!(fx.detect(ImageRef::with_path(&img, &src)).unwrap().len(), 2);
        let other = dir.path().join("nothing.png");
        assert!(fx.detect(ImageRef::with_path(&img, &other)).unwrap().is_empty());

        // face indices follow descending confidence: face0 is the 0.9 detection
        let face0 = dir.path().join("img01_face0.png");
        assert_eq!(fx.extract(ImageRef::with_path(&img, &face0)).unwrap(), Some(lms));
        let face1 = dir.path().join("img01_face1.png");
        assert_eq!(fx.extract(ImageRef::with_path(&img, &face1)).unwrap(), None);
        assert!(fx.detect(ImageRef::new(&img)).is_err());
    }
}
