//! 478-point landmark sets and their single-pixel binary rasters.

use std::collections::BTreeSet;
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 478;
pub const RASTER_SIZE: usize = 512;
pub const WHITE: u8 = 255;

/// Ordered face-mesh landmarks. `x` and `y` are relative to the face image,
/// `z` is a unitless relative depth.
///
/// Well-formed sets lie inside `[0, 1]`; points slightly outside the frame are
/// accepted because mesh models do emit them, and projection drops them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f32; 3]>", into = "Vec<[f32; 3]>")]
pub struct LandmarkSet {
    points: Vec<[f32; 3]>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "expected {LANDMARK_COUNT} landmarks, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!("non-finite landmark {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    /// True when every `(x, y)` lies in `[0, 1]`.
    pub fn in_frame(&self) -> bool {
        self.points
            .iter()
            .all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]))
    }
}

impl TryFrom<Vec<[f32; 3]>> for LandmarkSet {
    type Error = Error;

    fn try_from(points: Vec<[f32; 3]>) -> Result<Self> {
        LandmarkSet::new(points)
    }
}

impl From<LandmarkSet> for Vec<[f32; 3]> {
    fn from(set: LandmarkSet) -> Self {
        set.points
    }
}

/// Orthographic projection onto a `width x height` grid: z is dropped and
/// `(x, y)` maps to `(round(x (w-1)), round(y (h-1)))` with half-up rounding.
/// Points landing outside the grid are dropped.
pub fn project_landmarks(lms: &LandmarkSet, width: usize, height: usize) -> Vec<(usize, usize)> {
    if width == 0 || height == 0 {
        return Vec::new();
    }
    let to_pixel = |v: f32, extent: usize| -> Option<usize> {
        let p = (f64::from(v) * (extent - 1) as f64 + 0.5).floor();
        (p >= 0.0 && p <= (extent - 1) as f64).then_some(p as usize)
    };
    lms.points
        .iter()
        .filter_map(|p| Some((to_pixel(p[0], width)?, to_pixel(p[1], height)?)))
        .collect()
}

/// Binary landmark raster: white (255) landmark pixels on black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LandmarkImage {
    pub fn black(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel values, each 0 or 255.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_white(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == WHITE
    }

    pub fn white_pixel_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == WHITE).count()
    }

    pub fn white_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == WHITE)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Maps every white pixel onto a `size x size` grid (`floor(x size / w)`),
    /// keeping the result binary. Identity when the size already matches.
    pub fn resample(&self, size: usize) -> LandmarkImage {
        if self.width == size && self.height == size {
            return self.clone();
        }
        let mut out = LandmarkImage::black(size, size);
        for (x, y) in self.white_pixels() {
            let nx = x * size / self.width;
            let ny = y * size / self.height;
            out.data[ny * size + nx] = WHITE;
        }
        out
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn from_gray_image(img: &GrayImage) -> Result<Self> {
        if let Some(v) = img.as_raw().iter().find(|&&v| v != 0 && v != WHITE) {
            return Err(Error::invalid(format!("landmark raster holds non-binary value {v}")));
        }
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().clone(),
        })
    }

    /// Writes an 8-bit single-channel PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        match img {
            image::DynamicImage::ImageLuma8(g) => Self::from_gray_image(&g),
            other => Err(Error::invalid(format!(
                "{} is not a single-channel 8-bit raster ({:?})",
                path.display(),
                other.color()
            ))),
        }
    }
}

/// Sets exactly the listed pixels to white. Duplicates are written once.
pub fn rasterize(coords: &[(usize, usize)], width: usize, height: usize) -> Result<LandmarkImage> {
    let mut out = LandmarkImage::black(width, height);
    for &(x, y) in coords {
        if x >= width || y >= height {
            return Err(Error::invalid(format!(
                "coordinate ({x}, {y}) outside {width}x{height} raster"
            )));
        }
        out.data[y * width + x] = WHITE;
    }
    Ok(out)
}

/// Projects and rasterizes a landmark set on a square grid.
pub fn landmark_raster(lms: &LandmarkSet, size: usize) -> LandmarkImage {
    let coords = project_landmarks(lms, size, size);
    rasterize(&coords, size, size).expect("projected coordinates are in bounds")
}

/// Distinct pixel count of a coordinate list; independent of raster storage.
pub fn distinct_pixels(coords: &[(usize, usize)]) -> usize {
    coords.iter().collect::<BTreeSet<_>>().len()
}
