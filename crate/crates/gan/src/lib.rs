//! Conditional image-to-image GAN mapping landmark rasters to faces.
//!
//! Everything runs on the CPU in `f32` with a single-threaded GEMM so that a
//! fixed seed reproduces training bit for bit.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod infer;
pub mod layers;
pub mod loss;
pub mod nets;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::GanCheckpoint;
pub use config::GanConfig;
pub use data::{synthetic_pairs, GanDataset};
pub use error::{GanError, Result};
pub use infer::{Anonymized, GanModel, ScoreMap};
pub use train::{train, TrainLog, TrainLogRecord, Trainer};
