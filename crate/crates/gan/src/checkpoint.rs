//! Versioned checkpoint container.
//!
//! Layout: `LMCK`, format version (u32 LE), header length (u64 LE), JSON
//! header, then every parameter tensor as little-endian `f32` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::GanConfig;
use crate::error::{GanError, Result};
use crate::layers::Param;

pub const MAGIC: &[u8; 4] = b"LMCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GanCheckpoint {
    pub config: GanConfig,
    pub epoch: usize,
    pub format_version: u32,
    pub generator: Vec<Vec<f32>>,
    pub discriminator: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: GanConfig,
    epoch: usize,
    generator: Vec<usize>,
    discriminator: Vec<usize>,
}

fn snapshot(params: &[&Param]) -> Vec<Vec<f32>> {
    params.iter().map(|p| p.value.clone()).collect()
}

/// Copies stored values into live parameters, checking every length.
pub(crate) fn restore(params: Vec<&mut Param>, blobs: &[Vec<f32>], what: &str) -> Result<()> {
    if params.len() != blobs.len() {
        return Err(GanError::CheckpointFormat(format!(
            "{what}: {} tensors stored, network has {}",
            blobs.len(),
            params.len()
        )));
    }
    for (i, (p, blob)) in params.into_iter().zip(blobs).enumerate() {
        if p.value.len() != blob.len() {
            return Err(GanError::CheckpointFormat(format!(
                "{what} tensor {i}: {} values stored, network expects {}",
                blob.len(),
                p.value.len()
            )));
        }
        p.value.copy_from_slice(blob);
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| GanError::CheckpointFormat("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn blobs(&mut self, lens: &[usize]) -> Result<Vec<Vec<f32>>> {
        lens.iter()
            .map(|&n| {
                let raw = self.take(n.checked_mul(4).ok_or_else(|| GanError::CheckpointFormat("tensor too large".into()))?)?;
                Ok(raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect())
            })
            .collect()
    }
}

impl GanCheckpoint {
    pub fn new(config: GanConfig, epoch: usize, generator: &[&Param], discriminator: &[&Param]) -> Self {
        Self {
            config,
            epoch,
            format_version: FORMAT_VERSION,
            generator: snapshot(generator),
            discriminator: snapshot(discriminator),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: self.format_version,
            config: self.config.clone(),
            epoch: self.epoch,
            generator: self.generator.iter().map(Vec::len).collect(),
            discriminator: self.discriminator.iter().map(Vec::len).collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let values: usize = self.generator.iter().chain(&self.discriminator).map(Vec::len).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 4 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for blob in self.generator.iter().chain(&self.discriminator) {
            for v in blob {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(GanError::CheckpointFormat("missing LMCK magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(GanError::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let header_len =
            usize::try_from(header_len).map_err(|_| GanError::CheckpointFormat("header length overflow".into()))?;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        if header.format_version != version {
            return Err(GanError::CheckpointFormat("header and container versions differ".into()));
        }
        header.config.validate()?;
        let generator = r.blobs(&header.generator)?;
        let discriminator = r.blobs(&header.discriminator)?;
        if r.pos != bytes.len() {
            return Err(GanError::CheckpointFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            config: header.config,
            epoch: header.epoch,
            format_version: version,
            generator,
            discriminator,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| GanError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| GanError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
