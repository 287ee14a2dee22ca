//! Landmark-conditioned face anonymization: image operations, face
//! preprocessing, landmark rasters, evaluation protocols and statistics.

pub mod adapters;
pub mod error;
pub mod eval;
pub mod facepipe;
pub mod imageops;
pub mod raster;
pub mod reference;
pub mod stats;
pub mod template;

pub use error::{Error, Result};
pub use imageops::{FaceImage, NormalizationSpec, RangeTag};
pub use raster::{LandmarkImage, LandmarkSet};
