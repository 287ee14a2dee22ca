//! Face preprocessing: crop, align, resize, pad, segment and landmark.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{confidence_order, FaceDetection, FaceDetector, ImageRef, PipelineAdapters, SegmentationMask};
use crate::error::{Error, Result};
use crate::imageops::{resize_max_axis, zero_pad_center, FaceImage};
use crate::raster::{landmark_raster, LandmarkImage, RASTER_SIZE};

/// Side length of every extracted face.
pub const FACE_SIZE: usize = 512;

pub const MANIFEST_VERSION: u32 = 1;

/// Angle (radians, image coordinates with y down) of the segment from the
/// left eye to the right eye.
pub fn eye_line_angle(left_eye: [f32; 2], right_eye: [f32; 2]) -> Result<f64> {
    let dx = f64::from(right_eye[0]) - f64::from(left_eye[0]);
    let dy = f64::from(right_eye[1]) - f64::from(left_eye[1]);
    if !(dx.is_finite() && dy.is_finite()) || (dx == 0.0 && dy == 0.0) {
        return Err(Error::AlignmentUndefined(format!(
            "eye points {left_eye:?} and {right_eye:?} do not define a line"
        )));
    }
    Ok(dy.atan2(dx))
}

fn center_of(img: &FaceImage) -> (f64, f64) {
    ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0)
}

/// Where a source point lands after [`rotate_about_center`] with the same angle.
pub fn rotated_position(img: &FaceImage, point: [f32; 2], angle: f64) -> [f64; 2] {
    let (cx, cy) = center_of(img);
    let (s, c) = (-angle).sin_cos();
    let (dx, dy) = (f64::from(point[0]) - cx, f64::from(point[1]) - cy);
    [cx + c * dx - s * dy, cy + s * dx + c * dy]
}

/// Rotates the image content by `-angle` about its center, so a feature at
/// `angle` ends up horizontal. Exposed corners are filled with zero.
pub fn rotate_about_center(img: &FaceImage, angle: f64) -> FaceImage {
    if angle == 0.0 {
        return img.clone();
    }
    let (h, w, ch) = img.pixels().dim();
    let (cx, cy) = center_of(img);
    let (s, c) = angle.sin_cos();
    let (lo, hi) = img.range().bounds();
    let src = img.pixels();
    let fetch = |y: isize, x: isize, k: usize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            f64::from(src[[y as usize, x as usize, k]])
        }
    };
    let mut out = Array3::<f32>::zeros((h, w, ch));
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = cx + c * dx - s * dy;
            let sy = cy + s * dx + c * dy;
            if sx <= -1.0 || sy <= -1.0 || sx >= w as f64 || sy >= h as f64 {
                continue;
            }
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for k in 0..ch {
                let top = fetch(y0, x0, k) * (1.0 - fx) + fetch(y0, x0 + 1, k) * fx;
                let bottom = fetch(y0 + 1, x0, k) * (1.0 - fx) + fetch(y0 + 1, x0 + 1, k) * fx;
                out[[y, x, k]] = ((top * (1.0 - fy) + bottom * fy) as f32).clamp(lo, hi);
            }
        }
    }
    FaceImage::new(out, img.range()).expect("rotation keeps values in range")
}

/// Rotates the crop about its center so the eye line is horizontal with the
/// left eye on the left.
pub fn align_face(crop: &FaceImage, left_eye: [f32; 2], right_eye: [f32; 2]) -> Result<FaceImage> {
    let angle = eye_line_angle(left_eye, right_eye)?;
    Ok(rotate_about_center(crop, angle))
}

/// Copies the integer rectangle `(x0, y0, x1, y1)` out of an image.
pub fn crop(img: &FaceImage, rect: (usize, usize, usize, usize)) -> Result<FaceImage> {
    let (x0, y0, x1, y1) = rect;
    if x1 <= x0 || y1 <= y0 || x1 > img.width() || y1 > img.height() {
        return Err(Error::invalid(format!("crop {rect:?} outside image")));
    }
    let view = img.pixels().slice(ndarray::s![y0..y1, x0..x1, ..]).to_owned();
    FaceImage::new(view, img.range())
}

/// An extracted face together with the detection it came from.
#[derive(Debug, Clone)]
pub struct ExtractedFace {
    pub face: FaceImage,
    pub detection: FaceDetection,
    pub aligned: bool,
}

/// Crop, align, resize and pad one detection to `size x size`.
pub fn extract_detection(img: &FaceImage, det: &FaceDetection, size: usize) -> Result<Option<ExtractedFace>> {
    let Some(rect) = det.bbox.clamp_to(img.width(), img.height()) else {
        warn!("detection {:?} lies outside the image; skipped", det.bbox);
        return Ok(None);
    };
    let cropped = crop(img, rect)?;
    let (x0, y0) = (rect.0 as f32, rect.1 as f32);
    let (aligned_img, aligned) = match det.eyes() {
        Some((l, r)) => {
            let local = |p: [f32; 2]| [p[0] - x0, p[1] - y0];
            match align_face(&cropped, local(l), local(r)) {
                Ok(a) => (a, true),
                Err(e) => {
                    warn!("{e}; keeping the unaligned crop");
                    (cropped, false)
                }
            }
        }
        None => (cropped, false),
    };
    let resized = resize_max_axis(&aligned_img, size)?;
    let face = zero_pad_center(&resized, size)?;
    Ok(Some(ExtractedFace {
        face,
        detection: det.clone(),
        aligned,
    }))
}

/// Runs the detector and extracts every face in descending confidence order.
pub fn extract_faces_detailed(
    input: ImageRef<'_>,
    detector: &dyn FaceDetector,
    size: usize,
) -> Result<Vec<ExtractedFace>> {
    let dets = detector.detect(input)?;
    for d in &dets {
        d.validate()?;
    }
    if dets.is_empty() {
        info!("no face detected in {}", input.path.map(|p| p.display().to_string()).unwrap_or_else(|| "<memory>".into()));
    }
    let mut faces = Vec::with_capacity(dets.len());
    for i in confidence_order(&dets) {
        if let Some(face) = extract_detection(input.image, &dets[i], size)? {
            faces.push(face);
        }
    }
    Ok(faces)
}

/// One `512 x 512` zero-padded aligned face per detection, highest confidence first.
pub fn extract_faces(input: ImageRef<'_>, detector: &dyn FaceDetector) -> Result<Vec<FaceImage>> {
    Ok(extract_faces_detailed(input, detector, FACE_SIZE)?
        .into_iter()
        .map(|f| f.face)
        .collect())
}

/// Zeroes every pixel outside the mask.
pub fn apply_segmentation(face: &FaceImage, mask: &SegmentationMask) -> Result<FaceImage> {
    if face.height() != mask.height() || face.width() != mask.width() {
        return Err(Error::invalid(format!(
            "mask {}x{} does not match image {}x{}",
            mask.height(),
            mask.width(),
            face.height(),
            face.width()
        )));
    }
    let mut px = face.pixels().clone();
    for ((y, x, _), v) in px.indexed_iter_mut() {
        if !mask.get(y, x) {
            *v = 0.0;
        }
    }
    FaceImage::new(px, face.range())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceStatus {
    Prepared,
    Discarded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub index: usize,
    pub confidence: f32,
    pub aligned: bool,
    pub face: String,
    pub mask: String,
    pub raster: String,
    pub landmarks: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub source: String,
    pub status: SourceStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub faces: Vec<FaceRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub total: usize,
    pub prepared: usize,
    pub discarded: usize,
    pub failed: usize,
    pub faces: usize,
}

/// Outcome of [`prepare_dataset`]; paths are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparationManifest {
    pub format_version: u32,
    pub adapters: BTreeMap<String, String>,
    pub counts: ManifestCounts,
    pub records: Vec<SourceRecord>,
}

impl PreparationManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `(face, raster, label)` for every prepared face, in manifest order.
    pub fn faces(&self) -> impl Iterator<Item = (&SourceRecord, &FaceRecord)> {
        self.records
            .iter()
            .flat_map(|r| r.faces.iter().map(move |f| (r, f)))
    }
}

#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub face_size: usize,
    /// Optional `filename,label` CSV attached to manifest records.
    pub labels_csv: Option<PathBuf>,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            face_size: FACE_SIZE,
            labels_csv: None,
        }
    }
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            .unwrap_or(false)
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image_file(p))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Parses a `filename,label` CSV with a header row.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let mut labels = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let (Some(name), Some(label)) = (row.get(0), row.get(1)) else {
            return Err(Error::invalid(format!("{}: rows need filename and label", path.display())));
        };
        labels.insert(name.trim().to_string(), label.trim().to_string());
    }
    Ok(labels)
}

const SUBDIRS: [&str; 4] = ["aligned", "faces", "masks", "landmarks"];

fn prepare_one(
    src: &Path,
    adapters: &PipelineAdapters<'_>,
    out: &Path,
    face_size: usize,
) -> Result<(SourceStatus, Vec<FaceRecord>)> {
    let image = FaceImage::load(src)?;
    let stem = src
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("unusable file name {}", src.display())))?;
    let faces = extract_faces_detailed(ImageRef::with_path(&image, src), adapters.detector, face_size)?;
    if faces.is_empty() {
        return Ok((SourceStatus::Discarded, Vec::new()));
    }
    let mut records = Vec::with_capacity(faces.len());
    for (index, extracted) in faces.into_iter().enumerate() {
        let name = format!("{stem}_face{index}");
        let aligned_path = out.join("aligned").join(format!("{name}.png"));
        extracted.face.save_png(&aligned_path)?;

        let mask = adapters
            .segmenter
            .segment(ImageRef::with_path(&extracted.face, &aligned_path))?;
        let segmented = apply_segmentation(&extracted.face, &mask)?;
        let face_rel = format!("faces/{name}.png");
        let face_path = out.join(&face_rel);
        segmented.save_png(&face_path)?;
        let mask_rel = format!("masks/{name}.png");
        mask.save_png(&out.join(&mask_rel))?;

        let landmarks = adapters
            .landmarker
            .extract(ImageRef::with_path(&segmented, &face_path))?;
        let raster = match &landmarks {
            Some(set) => landmark_raster(set, RASTER_SIZE),
            None => LandmarkImage::black(RASTER_SIZE, RASTER_SIZE),
        };
        let raster_rel = format!("landmarks/{name}.png");
        raster.save_png(&out.join(&raster_rel))?;
        let landmarks_rel = match &landmarks {
            Some(set) => {
                let rel = format!("landmarks/{name}.json");
                let path = out.join(&rel);
                fs::write(&path, serde_json::to_string(set)?).map_err(|e| Error::io(&path, e))?;
                Some(rel)
            }
            None => None,
        };
        records.push(FaceRecord {
            index,
            confidence: extracted.detection.confidence,
            aligned: extracted.aligned,
            face: face_rel,
            mask: mask_rel,
            raster: raster_rel,
            landmarks: landmarks_rel,
        });
    }
    Ok((SourceStatus::Prepared, records))
}

/// Preprocesses every image in `source_dir` into `output_dir` and writes
/// `manifest.json`. Per-file failures are recorded, not raised.
pub fn prepare_dataset(
    source_dir: &Path,
    adapters: PipelineAdapters<'_>,
    output_dir: &Path,
    options: &PrepareOptions,
) -> Result<PreparationManifest> {
    let files = list_images(source_dir)?;
    let labels = match &options.labels_csv {
        Some(p) => read_labels(p)?,
        None => BTreeMap::new(),
    };
    for sub in SUBDIRS {
        let dir = output_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let records: Vec<SourceRecord> = files
        .par_iter()
        .map(|src| {
            let name = src.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let label = labels.get(&name).cloned();
            match prepare_one(src, &adapters, output_dir, options.face_size) {
                Ok((status, faces)) => SourceRecord {
                    source: name,
                    status,
                    label,
                    error: None,
                    faces,
                },
                Err(e) => {
                    warn!("{}: {e}", src.display());
                    SourceRecord {
                        source: name,
                        status: SourceStatus::Failed,
                        label,
                        error: Some(e.to_string()),
                        faces: Vec::new(),
                    }
                }
            }
        })
        .collect();

    let mut counts = ManifestCounts {
        total: records.len(),
        ..Default::default()
    };
    for r in &records {
        match r.status {
            SourceStatus::Prepared => counts.prepared += 1,
            SourceStatus::Discarded => counts.discarded += 1,
            SourceStatus::Failed => counts.failed += 1,
        }
        counts.faces += r.faces.len();
    }
    let manifest = PreparationManifest {
        format_version: MANIFEST_VERSION,
        adapters: adapters.ids(),
        counts,
        records,
    };
    let path = output_dir.join("manifest.json");
    fs::write(&path, manifest.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
