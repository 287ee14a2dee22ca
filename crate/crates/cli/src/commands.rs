//! Command implementations. Each returns the files it wrote so the run record
//! can digest them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lmanon_core::adapters::{ImageRef, PipelineAdapters};
use lmanon_core::eval::{
    anonymity_report, emotion_inference_report, read_pairs, traits_report, write_json, write_pairs, PairRecord,
    ProbabilityKind,
};
use lmanon_core::facepipe::{list_images, prepare_dataset, PrepareOptions};
use lmanon_core::imageops::{blur, pixelate};
use lmanon_core::reference::TRAIT_REMOVAL_RATES;
use lmanon_core::FaceImage;
use lmanon_gan::data::synthetic_dataset;
use lmanon_gan::train::{train, FINAL_CHECKPOINT};
use lmanon_gan::{GanDataset, GanModel};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::adapters;
use crate::config::{CommandParams, RunConfig};
use crate::errors::require_exists;
use crate::plot::BarChart;
use crate::record::sha256_file;

pub const EMOTION_LABELS: [&str; 8] = [
    "neutral", "happy", "sadness", "surprise", "fear", "disgust", "anger", "contempt",
];

pub fn default_trait_labels() -> Vec<String> {
    TRAIT_REMOVAL_RATES.iter().map(|t| t.name.to_string()).collect()
}

pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    /// Printed to stdout as the command's summary line.
    pub summary: serde_json::Value,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stem_of(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string()
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

pub fn run(config: &RunConfig, hash: &str) -> Result<Outcome> {
    create_dir(&config.out)?;
    match &config.params {
        CommandParams::Prepare {
            input,
            labels,
            face_size,
        } => prepare(config, input, labels.as_deref(), *face_size),
        CommandParams::Train { data, synthetic, gan } => {
            let dataset = match (data, synthetic) {
                (Some(dir), _) => {
                    require_exists(&dir.join("manifest.json"))?;
                    GanDataset::load_prepared(dir, gan.image_size)?
                }
                (None, Some(n)) => synthetic_dataset(*n, gan.image_size, config.seed)?,
                (None, None) => unreachable!("validated"),
            };
            let dir = config.out.join("checkpoints");
            let outcome = train(&dataset, gan, Some(&dir))?;
            let final_path = dir.join(FINAL_CHECKPOINT);
            let log_path = dir.join("train_log.csv");
            let mut outputs = outcome.checkpoint_files.clone();
            outputs.push(final_path.clone());
            outputs.push(log_path);
            let last = outcome.log.records.last();
            Ok(Outcome {
                summary: json!({
                    "pairs": dataset.len(),
                    "epochs": outcome.checkpoint.epoch,
                    "checkpoint": final_path,
                    "checkpoint_sha256": sha256_file(&final_path)?,
                    "final_generator_l1": last.map(|r| r.generator_l1_loss),
                    "final_discriminator_loss": last.map(|r| r.discriminator_loss),
                }),
                outputs,
            })
        }
        CommandParams::Anonymize { input, checkpoint } => anonymize(config, input, checkpoint),
        CommandParams::Baseline { mode, input, k } => baseline(config, mode, input, *k),
        CommandParams::Eval {
            report,
            pairs,
            reference_method,
            labels,
        } => evaluate(config, hash, report, pairs, reference_method, labels),
    }
}

fn prepare(config: &RunConfig, input: &Path, labels: Option<&Path>, face_size: usize) -> Result<Outcome> {
    require_exists(input)?;
    if let Some(l) = labels {
        require_exists(l)?;
    }
    let timeout = config.adapter_timeout_secs;
    let detector = adapters::detector(&config.adapters["detector"], timeout)?;
    let segmenter = adapters::segmenter(&config.adapters["segmenter"], timeout)?;
    let landmarker = adapters::landmarker(&config.adapters["landmarker"], timeout)?;
    let manifest = prepare_dataset(
        input,
        PipelineAdapters {
            detector: detector.as_ref(),
            segmenter: segmenter.as_ref(),
            landmarker: landmarker.as_ref(),
        },
        &config.out,
        &PrepareOptions {
            face_size,
            labels_csv: labels.map(Path::to_path_buf),
        },
    )?;
    Ok(Outcome {
        outputs: vec![config.out.join("manifest.json")],
        summary: serde_json::to_value(manifest.counts)?,
    })
}

#[derive(Debug, Serialize)]
struct ImageOutcome {
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fallback: Option<lmanon_gan::infer::Fallback>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct ImageManifest {
    method: String,
    total: usize,
    written: usize,
    failed: usize,
    images: Vec<ImageOutcome>,
}

/// Applies `transform` to every image of `input`, writing `images/<stem>.png`,
/// a manifest and a pair list for `eval`.
fn map_images(
    config: &RunConfig,
    input: &Path,
    method: &str,
    transform: impl Fn(&FaceImage, &Path) -> Result<(FaceImage, Option<lmanon_gan::infer::Fallback>)> + Sync,
) -> Result<Outcome> {
    require_exists(input)?;
    let files = list_images(input)?;
    let images_dir = config.out.join("images");
    create_dir(&images_dir)?;
    let results: Vec<ImageOutcome> = files
        .par_iter()
        .map(|src| {
            let source = src.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let rel = format!("images/{}.png", stem_of(src));
            let done = FaceImage::load(src).map_err(anyhow::Error::from).and_then(|img| {
                let (out, fallback) = transform(&img, src)?;
                out.save_png(&config.out.join(&rel))?;
                Ok(fallback)
            });
            match done {
                Ok(fallback) => ImageOutcome {
                    source,
                    output: Some(rel),
                    fallback,
                    error: None,
                },
                Err(e) => {
                    log::warn!("{}: {e:#}", src.display());
                    ImageOutcome {
                        source,
                        output: None,
                        fallback: None,
                        error: Some(format!("{e:#}")),
                    }
                }
            }
        })
        .collect();
    let pairs: Vec<PairRecord> = files
        .iter()
        .zip(&results)
        .filter_map(|(src, r)| {
            r.output.as_ref().map(|rel| PairRecord {
                id: stem_of(src),
                original_path: absolute(src),
                anonymized_path: PathBuf::from(rel),
                method: method.to_string(),
                label: None,
            })
        })
        .collect();
    let written = pairs.len();
    let manifest = ImageManifest {
        method: method.to_string(),
        total: results.len(),
        written,
        failed: results.len() - written,
        images: results,
    };
    let manifest_path = config.out.join("images.json");
    write_json(&manifest_path, &manifest)?;
    let pairs_path = config.out.join("pairs.csv");
    write_pairs(&pairs_path, &pairs)?;
    let mut outputs: Vec<PathBuf> = manifest
        .images
        .iter()
        .filter_map(|r| r.output.as_ref().map(|o| config.out.join(o)))
        .collect();
    outputs.push(manifest_path);
    outputs.push(pairs_path);
    let fallbacks = manifest.images.iter().filter(|r| r.fallback.is_some()).count();
    Ok(Outcome {
        outputs,
        summary: json!({
            "method": method,
            "total": manifest.total,
            "written": written,
            "failed": manifest.failed,
            "average_face_fallbacks": fallbacks,
        }),
    })
}

fn anonymize(config: &RunConfig, input: &Path, checkpoint: &Path) -> Result<Outcome> {
    require_exists(checkpoint)?;
    let model = GanModel::load(checkpoint)?;
    let landmarker = adapters::landmarker(&config.adapters["landmarker"], config.adapter_timeout_secs)?;
    map_images(config, input, "ours", |img, path| {
        let out = model.anonymize(ImageRef::with_path(img, path), landmarker.as_ref())?;
        Ok((out.image, out.fallback))
    })
}

fn baseline(config: &RunConfig, mode: &str, input: &Path, k: usize) -> Result<Outcome> {
    let method = format!("{mode}-{k}");
    map_images(config, input, &method, |img, _| {
        let out = match mode {
            "pixelate" => pixelate(img, k)?,
            _ => blur(img, k)?,
        };
        Ok((out, None))
    })
}

fn evaluate(
    config: &RunConfig,
    hash: &str,
    report: &str,
    pairs_path: &Path,
    reference_method: &str,
    labels: &[String],
) -> Result<Outcome> {
    require_exists(pairs_path)?;
    let pairs = read_pairs(pairs_path)?;
    let timeout = config.adapter_timeout_secs;
    let out = &config.out;
    let mut outputs = Vec::new();
    let summary;
    match report {
        "anonymity" => {
            let embedder = adapters::embedder(&config.adapters["embedder"], timeout)?;
            let mut r = anonymity_report(&pairs, embedder.as_ref());
            r.metadata.config_hash = Some(hash.to_string());
            let json_path = out.join("anonymity_report.json");
            write_json(&json_path, &r)?;
            let csv_path = out.join("anonymity_pairs.csv");
            write_text(&csv_path, &r.pairs_csv()?)?;
            outputs.extend([json_path, csv_path]);
            if config.plots {
                let path = out.join("anonymity.png");
                BarChart {
                    title: "mean cosine distance",
                    categories: r.methods.iter().map(|m| m.method.clone()).collect(),
                    series: vec![(
                        "distance".into(),
                        r.methods.iter().map(|m| m.mean_distance).collect(),
                    )],
                    guide: Some(r.threshold),
                }
                .save(&path)?;
                outputs.push(path);
            }
            summary = serde_json::to_value(&r.methods)?;
        }
        "emotion" => {
            let classifier = adapters::classifier(
                &config.adapters["classifier"],
                timeout,
                ProbabilityKind::MultiClass,
                labels,
                config.seed,
            )?;
            let mut r = emotion_inference_report(&pairs, classifier.as_ref(), reference_method);
            r.metadata.config_hash = Some(hash.to_string());
            let json_path = out.join("emotion_report.json");
            write_json(&json_path, &r)?;
            let csv_path = out.join("emotion_pairs.csv");
            write_text(&csv_path, &r.pairs_csv()?)?;
            outputs.extend([json_path, csv_path]);
            let methods: Vec<String> = {
                let mut m: Vec<String> = Vec::new();
                for e in &r.means {
                    if !m.contains(&e.method) {
                        m.push(e.method.clone());
                    }
                }
                m
            };
            if config.plots {
                let path = out.join("emotion.png");
                BarChart {
                    title: "class probability distance",
                    categories: r.labels.clone(),
                    series: methods
                        .iter()
                        .map(|m| (m.clone(), r.labels.iter().map(|l| r.mean(m, l)).collect()))
                        .collect(),
                    guide: None,
                }
                .save(&path)?;
                outputs.push(path);
            }
            summary = json!({ "methods": methods, "tests": r.statistics.len(), "f1_reports": r.f1.len() });
        }
        _ => {
            let classifier = adapters::classifier(
                &config.adapters["classifier"],
                timeout,
                ProbabilityKind::MultiLabel,
                labels,
                config.seed,
            )?;
            let mut r = traits_report(&pairs, classifier.as_ref());
            r.metadata.config_hash = Some(hash.to_string());
            let json_path = out.join("traits_report.json");
            write_json(&json_path, &r)?;
            let csv_path = out.join("traits_rates.csv");
            write_text(&csv_path, &r.rates_csv()?)?;
            outputs.extend([json_path, csv_path]);
            if config.plots {
                let path = out.join("traits.png");
                BarChart {
                    title: "trait removal rate",
                    categories: r.traits.clone(),
                    series: r
                        .methods
                        .iter()
                        .map(|m| (m.method.clone(), m.rates.iter().map(|t| t.rate).collect()))
                        .collect(),
                    guide: None,
                }
                .save(&path)?;
                outputs.push(path);
            }
            summary = json!({ "methods": r.methods.iter().map(|m| &m.method).collect::<Vec<_>>(), "traits": r.traits.len() });
        }
    }
    Ok(Outcome { outputs, summary })
}
