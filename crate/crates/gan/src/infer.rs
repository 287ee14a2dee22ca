//! Read-only inference with a trained checkpoint.

use std::path::Path;

use lmanon_core::adapters::{ImageRef, LandmarkExtractor};
use lmanon_core::imageops::denormalize;
use lmanon_core::raster::landmark_raster;
use lmanon_core::{FaceImage, LandmarkImage, NormalizationSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{restore, GanCheckpoint};
use crate::config::GanConfig;
use crate::data::{face_planes, planes_to_face, raster_planes, raster_tensor};
use crate::error::{GanError, Result};
use crate::nets::{Discriminator, Generator, IMAGE_CHANNELS};
use crate::tensor::Tensor;

/// Patch logits of the discriminator, row-major `side x side`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub side: usize,
    pub logits: Vec<f32>,
}

/// Why the all-black raster stood in for the extracted landmarks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum Fallback {
    NoLandmarks,
    ExtractorError(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anonymized {
    /// Unit-range RGB face of side `image_size`.
    pub image: FaceImage,
    /// The raster the generator saw, at the model's side.
    pub raster: LandmarkImage,
    pub fallback: Option<Fallback>,
}

/// Generator and discriminator restored from a checkpoint. All methods take
/// `&self`, so one model can serve concurrent callers.
#[derive(Debug, Clone)]
pub struct GanModel {
    config: GanConfig,
    epoch: usize,
    generator: Generator,
    discriminator: Discriminator,
}

impl GanModel {
    pub fn from_checkpoint(ck: &GanCheckpoint) -> Result<Self> {
        ck.config.validate()?;
        // Weights are overwritten below; the init stream only shapes the layers.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut generator = Generator::new(&ck.config, &mut rng);
        let mut discriminator = Discriminator::new(&ck.config, &mut rng);
        restore(generator.params_mut(), &ck.generator, "generator")?;
        restore(discriminator.params_mut(), &ck.discriminator, "discriminator")?;
        Ok(Self {
            config: ck.config.clone(),
            epoch: ck.epoch,
            generator,
            discriminator,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&GanCheckpoint::load(path)?)
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn image_size(&self) -> usize {
        self.config.image_size
    }

    fn check_raster(&self, raster: &LandmarkImage) -> Result<()> {
        let s = self.image_size();
        if raster.width() != s || raster.height() != s {
            return Err(GanError::InvalidArgument(format!(
                "raster is {}x{}, model expects {s}x{s}",
                raster.width(),
                raster.height()
            )));
        }
        Ok(())
    }

    /// Signed-range RGB face for a raster of exactly the model's side.
    pub fn generator_forward(&self, raster: &LandmarkImage) -> Result<FaceImage> {
        self.check_raster(raster)?;
        let s = self.image_size();
        let out = self.generator.forward(&raster_tensor(raster, s));
        planes_to_face(out.data(), s)
    }

    /// Batched generator pass over `[N, 3, S, S]` raster planes.
    pub fn generator_forward_tensor(&self, rasters: &Tensor) -> Result<Tensor> {
        let s = self.image_size();
        if rasters.shape()[1..] != [IMAGE_CHANNELS, s, s] {
            return Err(GanError::InvalidArgument(format!(
                "generator input {:?} does not match [N, {IMAGE_CHANNELS}, {s}, {s}]",
                rasters.shape()
            )));
        }
        Ok(self.generator.forward(rasters))
    }

    /// Patch logits for a (raster, face) pair, both at the model's side.
    pub fn discriminator_forward(&self, raster: &LandmarkImage, face: &FaceImage) -> Result<ScoreMap> {
        self.check_raster(raster)?;
        let s = self.image_size();
        if face.height() != s || face.width() != s {
            return Err(GanError::InvalidArgument(format!(
                "face is {}x{}, model expects {s}x{s}",
                face.height(),
                face.width()
            )));
        }
        let face_planes = match face.range() {
            lmanon_core::RangeTag::Signed if face.channels() == IMAGE_CHANNELS => {
                let px = face.pixels();
                (0..IMAGE_CHANNELS)
                    .flat_map(|c| (0..s).flat_map(move |y| (0..s).map(move |x| px[[y, x, c]])))
                    .collect()
            }
            _ => face_planes(face, s)?,
        };
        let chw = [IMAGE_CHANNELS, s, s];
        let cond = Tensor::stack(&[&raster_planes(raster, s)], chw)?;
        let img = Tensor::stack(&[&face_planes], chw)?;
        let logits = self.discriminator.forward(&Tensor::concat_channels(&cond, &img));
        Ok(ScoreMap {
            side: logits.height(),
            logits: logits.into_data(),
        })
    }

    /// Generator output on the all-black raster.
    pub fn average_face(&self) -> Result<FaceImage> {
        let s = self.image_size();
        self.generator_forward(&LandmarkImage::black(s, s))
    }

    /// Raster for a source image: extracted landmarks, or the black raster when
    /// extraction finds nothing or fails.
    pub fn raster_for(&self, input: ImageRef<'_>, landmarker: &dyn LandmarkExtractor) -> (LandmarkImage, Option<Fallback>) {
        let s = self.image_size();
        match landmarker.extract(input) {
            Ok(Some(lms)) => (landmark_raster(&lms, lmanon_core::raster::RASTER_SIZE).resample(s), None),
            Ok(None) => (LandmarkImage::black(s, s), Some(Fallback::NoLandmarks)),
            Err(e) => {
                log::warn!("landmark extraction failed, using the average face: {e}");
                (LandmarkImage::black(s, s), Some(Fallback::ExtractorError(e.to_string())))
            }
        }
    }

    /// Landmarks, raster, generator, then back to the unit range.
    pub fn anonymize(&self, input: ImageRef<'_>, landmarker: &dyn LandmarkExtractor) -> Result<Anonymized> {
        let (raster, fallback) = self.raster_for(input, landmarker);
        let signed = self.generator_forward(&raster)?;
        let image = denormalize(&signed, &NormalizationSpec::GAN)?;
        Ok(Anonymized {
            image,
            raster,
            fallback,
        })
    }
}
