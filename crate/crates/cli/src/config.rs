//! Config file, command-line overrides and the resolved, hashed run config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use lmanon_core::facepipe::FACE_SIZE;
use lmanon_gan::GanConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::{missing_input, Failure};

pub const DEFAULT_ADAPTER_TIMEOUT_SECS: f64 = 60.0;

/// Optional GAN settings of the config file; unset fields keep their defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanOverrides {
    pub image_size: Option<usize>,
    pub base_channels: Option<usize>,
    pub lambda_l1: Option<f32>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f32>,
    pub beta1: Option<f32>,
    pub beta2: Option<f32>,
    pub dropout: Option<f32>,
}

impl GanOverrides {
    fn apply(&self, base: GanConfig) -> GanConfig {
        GanConfig {
            image_size: self.image_size.unwrap_or(base.image_size),
            base_channels: self.base_channels.unwrap_or(base.base_channels),
            lambda_l1: self.lambda_l1.unwrap_or(base.lambda_l1),
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            lr: self.lr.unwrap_or(base.lr),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            dropout: self.dropout.unwrap_or(base.dropout),
            seed: base.seed,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareSection {
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub face_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub data: Option<PathBuf>,
    pub synthetic: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnonymizeSection {
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub pairs: Option<PathBuf>,
    pub reference_method: Option<String>,
    pub emotion_labels: Option<Vec<String>>,
    pub trait_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub input: Option<PathBuf>,
    pub k: Option<usize>,
}

/// Contents of the `--config` TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub image_size: Option<usize>,
    pub out: Option<PathBuf>,
    pub plots: Option<bool>,
    pub adapter_timeout_secs: Option<f64>,
    #[serde(default)]
    pub adapters: BTreeMap<String, String>,
    #[serde(default)]
    pub gan: GanOverrides,
    #[serde(default)]
    pub prepare: PrepareSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub anonymize: AnonymizeSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub baseline: BaselineSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| missing_input(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
            .map_err(Into::into)
    }
}

/// Fully resolved settings of one command. Its JSON form is hashed and the
/// digest stamped into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub plots: bool,
    pub adapter_timeout_secs: f64,
    pub adapters: BTreeMap<String, String>,
    pub params: CommandParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CommandParams {
    Prepare {
        input: PathBuf,
        labels: Option<PathBuf>,
        face_size: usize,
    },
    Train {
        data: Option<PathBuf>,
        synthetic: Option<usize>,
        gan: GanConfig,
    },
    Anonymize {
        input: PathBuf,
        checkpoint: PathBuf,
    },
    Eval {
        report: String,
        pairs: PathBuf,
        reference_method: String,
        labels: Vec<String>,
    },
    Baseline {
        mode: String,
        input: PathBuf,
        k: usize,
    },
}

impl RunConfig {
    /// Digest of the settings that determine output contents. Output location,
    /// plotting and worker count are left out so they never change reports.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("run config serializes");
        if let Some(map) = value.as_object_mut() {
            for key in ["out", "plots", "workers"] {
                map.remove(key);
            }
        }
        let bytes = serde_json::to_vec(&value).expect("run config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Failure::Config(msg).into());
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if !(self.adapter_timeout_secs > 0.0 && self.adapter_timeout_secs.is_finite()) {
            return bad(format!("adapter timeout {} must be positive", self.adapter_timeout_secs));
        }
        match &self.params {
            CommandParams::Prepare { face_size, .. } if *face_size == 0 => bad("face_size must be positive".into()),
            CommandParams::Train { data, synthetic, gan } => {
                if data.is_some() == synthetic.is_some() {
                    return bad("train needs exactly one of --data or --synthetic".into());
                }
                if *synthetic == Some(0) {
                    return bad("--synthetic needs at least one pair".into());
                }
                gan.validate().map_err(|e| Failure::Config(e.to_string()))?;
                Ok(())
            }
            CommandParams::Baseline { k, .. } if *k == 0 => bad("baseline k must be positive".into()),
            CommandParams::Eval { report, labels, .. } if report != "anonymity" && labels.is_empty() => bad("classifier labels must not be empty".into()),
            _ => Ok(()),
        }
    }
}

/// Settings shared by every command after merging file and flags.
#[derive(Debug, Clone)]
pub struct Common {
    pub seed: u64,
    pub workers: Option<usize>,
    pub image_size: Option<usize>,
    pub out: PathBuf,
    pub plots: bool,
    pub adapter_timeout_secs: f64,
    pub adapters: BTreeMap<String, String>,
}

pub const ROLES: [&str; 5] = ["detector", "segmenter", "landmarker", "embedder", "classifier"];

pub fn parse_adapter_flag(flag: &str) -> Result<(String, String)> {
    let (role, spec) = flag
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("--adapter expects <role>=<spec>, got {flag:?}")))?;
    let role = role.trim();
    if !ROLES.contains(&role) {
        return Err(Failure::Config(format!("unknown adapter role {role:?}; expected one of {ROLES:?}")).into());
    }
    Ok((role.to_string(), spec.trim().to_string()))
}

pub struct FlagOverrides<'a> {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub image_size: Option<usize>,
    pub out: Option<&'a Path>,
    pub no_plots: bool,
    pub adapters: &'a [String],
}

pub fn merge_common(file: &ConfigFile, flags: &FlagOverrides<'_>) -> Result<Common> {
    let mut adapters = BTreeMap::new();
    for (role, spec) in &file.adapters {
        let (role, spec) = parse_adapter_flag(&format!("{role}={spec}"))?;
        adapters.insert(role, spec);
    }
    for flag in flags.adapters {
        let (role, spec) = parse_adapter_flag(flag)?;
        adapters.insert(role, spec);
    }
    let out = flags
        .out
        .map(Path::to_path_buf)
        .or_else(|| file.out.clone())
        .ok_or_else(|| Failure::Config("an output directory is required (--out or `out` in the config)".into()))?;
    Ok(Common {
        seed: flags.seed.or(file.seed).unwrap_or(0),
        workers: flags.workers.or(file.workers),
        image_size: flags.image_size.or(file.image_size),
        out,
        plots: !flags.no_plots && file.plots.unwrap_or(true),
        adapter_timeout_secs: file.adapter_timeout_secs.unwrap_or(DEFAULT_ADAPTER_TIMEOUT_SECS),
        adapters,
    })
}

/// GAN settings: defaults, then the `[gan]` table, then `--image-size`, with the run seed.
pub fn resolve_gan(file: &ConfigFile, common: &Common) -> GanConfig {
    let mut gan = file.gan.apply(GanConfig::default());
    if let Some(size) = common.image_size {
        gan.image_size = size;
    }
    gan.seed = common.seed;
    gan
}

pub fn default_face_size(file: &ConfigFile) -> usize {
    file.prepare.face_size.unwrap_or(FACE_SIZE)
}

/// Adapter specs of the roles a command uses, defaults filled in.
pub fn role_specs(common: &Common, roles: &[&str]) -> BTreeMap<String, String> {
    roles
        .iter()
        .map(|&role| {
            let spec = common
                .adapters
                .get(role)
                .cloned()
                .unwrap_or_else(|| crate::adapters::default_spec(role).to_string());
            (role.to_string(), spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_and_flags_merge() {
        let file: ConfigFile = toml::from_str(
            r#"
            seed = 3
            out = "runs/a"
            [adapters]
            detector = "geometric"
            [gan]
            epochs = 2
            "#,
        )
        .unwrap();
        let flags = FlagOverrides {
            seed: Some(9),
            workers: None,
            image_size: Some(64),
            out: None,
            no_plots: true,
            adapters: &["embedder=pixel-stats".to_string()],
        };
        let common = merge_common(&file, &flags).unwrap();
        assert_eq!(common.seed, 9);
        assert_eq!(common.out, PathBuf::from("runs/a"));
        assert!(!common.plots);
        assert_eq!(common.adapters.len(), 2);
        let gan = resolve_gan(&file, &common);
        assert_eq!((gan.image_size, gan.epochs, gan.seed), (64, 2, 9));
    }

    #[test]
    fn rejects_unknown_keys_and_roles() {
        assert!(toml::from_str::<ConfigFile>("sed = 1").is_err());
        assert!(parse_adapter_flag("painter=x").is_err());
        assert!(parse_adapter_flag("detector").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let run = RunConfig {
            command: "baseline".into(),
            seed: 0,
            workers: None,
            out: "o".into(),
            plots: true,
            adapter_timeout_secs: 60.0,
            adapters: BTreeMap::new(),
            params: CommandParams::Baseline {
                mode: "blur".into(),
                input: "i".into(),
                k: 8,
            },
        };
        let mut other = run.clone();
        other.out = "elsewhere".into();
        other.plots = false;
        other.workers = Some(3);
        assert_eq!(run.hash(), other.hash());
        other.seed = 1;
        assert_ne!(run.hash(), other.hash());
        assert_eq!(run.hash().len(), 64);
    }
}
