//! Anonymity, emotion-preservation and trait-removal evaluation over
//! injected embedder and classifier adapters.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{FaceEmbedder, ImageRef, ProbabilityClassifier};
use crate::error::{Error, Result};
use crate::imageops::FaceImage;
use crate::reference::{PublishedReference, REIDENTIFICATION_THRESHOLD};
use crate::stats::{bonferroni, effect_size_r, significance_flags, wilcoxon_signed_rank, Significance};

/// Tolerance on the total of a multi-class probability vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

/// A feature vector produced by a face embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Embedding {
    vector: Vec<f32>,
}

impl Embedding {
    pub fn new(vector: Vec<f32>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::invalid("embedding is empty"));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding has non-finite entries"));
        }
        Ok(Self { vector })
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = Error;

    fn try_from(v: Vec<f32>) -> Result<Self> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f32> {
    fn from(e: Embedding) -> Self {
        e.vector
    }
}

/// `1 - cos(a, b)`, computed in double precision.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "embedding lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.vector.iter().zip(&b.vector) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedDistance("embedding has zero norm".into()));
    }
    Ok((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityKind {
    /// Mutually exclusive classes; values sum to one.
    MultiClass,
    /// Independent per-label probabilities.
    MultiLabel,
}

/// Classifier output over a named label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    kind: ProbabilityKind,
    labels: Vec<String>,
    values: Vec<f64>,
}

impl ClassProbabilities {
    pub fn new(kind: ProbabilityKind, labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if labels.len() != values.len() || labels.is_empty() {
            return Err(Error::invalid(format!(
                "{} labels for {} probabilities",
                labels.len(),
                values.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::invalid(format!("duplicate label {dup:?}")));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("probability {v} outside [0, 1]")));
        }
        if kind == ProbabilityKind::MultiClass {
            let total: f64 = values.iter().sum();
            if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                return Err(Error::invalid(format!("class probabilities sum to {total}")));
            }
        }
        Ok(Self { kind, labels, values })
    }

    pub fn multi_class(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(ProbabilityKind::MultiClass, labels, values)
    }

    pub fn multi_label(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(ProbabilityKind::MultiLabel, labels, values)
    }

    pub fn kind(&self) -> ProbabilityKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.values[i])
    }

    /// Label with the highest probability; the first one wins ties.
    pub fn argmax(&self) -> &str {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        &self.labels[best]
    }
}

/// `|orig[label] - anon[label]|`.
pub fn class_prob_distance(orig: &ClassProbabilities, anon: &ClassProbabilities, label: &str) -> Result<f64> {
    let missing = || Error::invalid(format!("label {label:?} missing from probabilities"));
    let a = orig.get(label).ok_or_else(missing)?;
    let b = anon.get(label).ok_or_else(missing)?;
    Ok((a - b).abs())
}

/// An original image paired with one anonymized version of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    /// Identifies the original image; shared by all methods applied to it.
    pub id: String,
    pub original_path: PathBuf,
    pub anonymized_path: PathBuf,
    /// `ours`, `pixelate-<k>`, `blur-<k>`, `original` or any external tag.
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "empty_as_none")]
    pub label: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.filter(|s| !s.trim().is_empty()))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::invalid(format!("{}: {e}", path.display()))
}

/// Reads a pair list (`id,original_path,anonymized_path,method,label`).
/// Relative paths resolve against the list's directory.
pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut pairs = Vec::new();
    for row in reader.deserialize() {
        let mut p: PairRecord = row.map_err(|e| csv_error(path, e))?;
        for field in [&mut p.original_path, &mut p.anonymized_path] {
            if field.is_relative() {
                *field = base.join(&*field);
            }
        }
        pairs.push(p);
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(["id", "original_path", "anonymized_path", "method", "label"])
        .map_err(|e| csv_error(path, e))?;
    for p in pairs {
        writer
            .write_record([
                p.id.as_str(),
                &p.original_path.to_string_lossy(),
                &p.anonymized_path.to_string_lossy(),
                &p.method,
                p.label.as_deref().unwrap_or(""),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Provenance attached to every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub adapters: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn load_pair(p: &PairRecord) -> Result<(FaceImage, FaceImage)> {
    Ok((FaceImage::load(&p.original_path)?, FaceImage::load(&p.anonymized_path)?))
}

/// Methods in order of first appearance.
fn method_order<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in items {
        if !out.iter().any(|o| o == m) {
            out.push(m.to_string());
        }
    }
    out
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub id: String,
    pub method: String,
    pub distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDistance {
    pub method: String,
    pub evaluated: usize,
    pub skipped: usize,
    pub mean_distance: Option<f64>,
    /// Mean distance at or below the threshold: identity is likely recoverable.
    pub re_identifiable: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnonymityReport {
    pub threshold: f64,
    pub methods: Vec<MethodDistance>,
    pub pairs: Vec<PairDistance>,
    pub metadata: ReportMetadata,
    pub published_reference: PublishedReference,
}

impl AnonymityReport {
    pub fn method(&self, name: &str) -> Option<&MethodDistance> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Recomputes the per-method aggregates from the per-pair values.
    pub fn aggregate(pairs: &[PairDistance], threshold: f64) -> Vec<MethodDistance> {
        method_order(pairs.iter().map(|p| p.method.as_str()))
            .into_iter()
            .map(|method| {
                let of: Vec<&PairDistance> = pairs.iter().filter(|p| p.method == method).collect();
                let values: Vec<f64> = of.iter().filter_map(|p| p.distance).collect();
                let mean_distance = mean(&values);
                MethodDistance {
                    evaluated: values.len(),
                    skipped: of.len() - values.len(),
                    re_identifiable: mean_distance.map(|m| m <= threshold),
                    mean_distance,
                    method,
                }
            })
            .collect()
    }

    pub fn pairs_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["id", "method", "distance", "error"]).map_err(io)?;
        for p in &self.pairs {
            w.write_record([
                p.id.clone(),
                p.method.clone(),
                p.distance.map(|d| format!("{d:.10}")).unwrap_or_default(),
                p.error.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Cosine distance between embeddings of every original/anonymized pair.
pub fn anonymity_report(pairs: &[PairRecord], embedder: &dyn FaceEmbedder) -> AnonymityReport {
    let per_pair: Vec<PairDistance> = pairs
        .par_iter()
        .map(|p| {
            let outcome = load_pair(p).and_then(|(o, a)| {
                let eo = embedder.embed(ImageRef::with_path(&o, &p.original_path))?;
                let ea = embedder.embed(ImageRef::with_path(&a, &p.anonymized_path))?;
                cosine_distance(&eo, &ea)
            });
            match outcome {
                Ok(d) => PairDistance {
                    id: p.id.clone(),
                    method: p.method.clone(),
                    distance: Some(d),
                    error: None,
                },
                Err(e) => {
                    warn!("pair {} ({}): {e}", p.id, p.method);
                    PairDistance {
                        id: p.id.clone(),
                        method: p.method.clone(),
                        distance: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    AnonymityReport {
        threshold: REIDENTIFICATION_THRESHOLD,
        methods: AnonymityReport::aggregate(&per_pair, REIDENTIFICATION_THRESHOLD),
        pairs: per_pair,
        metadata: ReportMetadata {
            adapters: BTreeMap::from([("embedder".to_string(), embedder.id())]),
            config_hash: None,
        },
        published_reference: PublishedReference::anonymity(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Set when a metric had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AveragedMetrics,
    pub weighted_avg: AveragedMetrics,
    pub total: usize,
}

impl F1Report {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.label == label)
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class precision, recall and F1 with accuracy and macro/weighted averages.
pub fn f1_report<S: AsRef<str>>(y_true: &[S], y_pred: &[S], labels: &[S]) -> Result<F1Report> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("no samples to score"));
    }
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_ref(), i)).collect();
    if index.len() != labels.len() {
        return Err(Error::invalid("duplicate labels"));
    }
    let k = labels.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in y_true.iter().zip(y_pred) {
        let (t, p) = (t.as_ref(), p.as_ref());
        let lookup = |l: &str| index.get(l).copied().ok_or_else(|| Error::invalid(format!("label {l:?} not in label set")));
        confusion[lookup(t)?][lookup(p)?] += 1;
    }

    let total = y_true.len();
    let mut classes = Vec::with_capacity(k);
    for (c, label) in labels.iter().enumerate() {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let (precision, p0) = ratio(tp, predicted);
        let (recall, r0) = ratio(tp, support);
        let (f1, f0) = if precision + recall == 0.0 {
            (0.0, true)
        } else {
            (2.0 * precision * recall / (precision + recall), false)
        };
        classes.push(ClassMetrics {
            label: label.as_ref().to_string(),
            precision,
            recall,
            f1,
            support,
            true_positives: tp,
            false_positives: predicted - tp,
            false_negatives: support - tp,
            zero_division: p0 || r0 || f0,
        });
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let kf = k as f64;
    let macro_avg = AveragedMetrics {
        precision: classes.iter().map(|c| c.precision).sum::<f64>() / kf,
        recall: classes.iter().map(|c| c.recall).sum::<f64>() / kf,
        f1: classes.iter().map(|c| c.f1).sum::<f64>() / kf,
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / total as f64
    };
    let weighted_avg = AveragedMetrics {
        precision: weighted(|c| c.precision),
        recall: weighted(|c| c.recall),
        f1: weighted(|c| c.f1),
    };
    Ok(F1Report {
        accuracy: correct as f64 / total as f64,
        classes,
        macro_avg,
        weighted_avg,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPair {
    pub id: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Class-probability distance per emotion, in report label order.
    pub distances: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_original: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_anonymized: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionMean {
    pub method: String,
    pub emotion: String,
    pub n: usize,
    pub mean_distance: Option<f64>,
}

/// Paired signed-rank comparison of the reference method against another method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionStatistic {
    pub emotion: String,
    pub reference: String,
    pub method: String,
    /// Number of paired images.
    pub n: usize,
    pub n_effective: Option<usize>,
    pub statistic: Option<f64>,
    pub z: Option<f64>,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub exact_p: Option<f64>,
    pub significance: Option<Significance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodF1 {
    pub method: String,
    pub report: F1Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmotionReport {
    pub labels: Vec<String>,
    pub reference_method: String,
    pub means: Vec<EmotionMean>,
    pub statistics: Vec<EmotionStatistic>,
    pub f1: Vec<MethodF1>,
    pub pairs: Vec<EmotionPair>,
    pub metadata: ReportMetadata,
    pub published_reference: PublishedReference,
}

impl EmotionReport {
    pub fn mean(&self, method: &str, emotion: &str) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.method == method && m.emotion == emotion)
            .and_then(|m| m.mean_distance)
    }

    pub fn pairs_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["id", "method", "label", "emotion", "distance", "error"]).map_err(io)?;
        for p in &self.pairs {
            let label = p.label.clone().unwrap_or_default();
            match &p.distances {
                Some(ds) => {
                    for (e, d) in self.labels.iter().zip(ds) {
                        w.write_record([&p.id, &p.method, &label, e, &format!("{d:.10}"), ""]).map_err(io)?;
                    }
                }
                None => {
                    let err = p.error.clone().unwrap_or_default();
                    w.write_record([&p.id, &p.method, &label, "", "", &err]).map_err(io)?;
                }
            }
        }
        finish_csv(w)
    }
}

/// Per-emotion class-probability distances, signed-rank tests of
/// `reference_method` against each other method, and F1 of the classifier's
/// predictions where pairs carry ground-truth labels.
pub fn emotion_inference_report(
    pairs: &[PairRecord],
    classifier: &dyn ProbabilityClassifier,
    reference_method: &str,
) -> EmotionReport {
    let predictions: Vec<Result<(ClassProbabilities, ClassProbabilities)>> = pairs
        .par_iter()
        .map(|p| {
            let (o, a) = load_pair(p)?;
            let po = classifier.predict(ImageRef::with_path(&o, &p.original_path))?;
            let pa = classifier.predict(ImageRef::with_path(&a, &p.anonymized_path))?;
            Ok((po, pa))
        })
        .collect();
    let labels: Vec<String> = predictions
        .iter()
        .find_map(|r| r.as_ref().ok())
        .map(|(po, _)| po.labels().to_vec())
        .unwrap_or_default();

    let mut rows = Vec::with_capacity(pairs.len());
    for (p, pred) in pairs.iter().zip(predictions) {
        let outcome = pred.and_then(|(po, pa)| {
            let ds = labels
                .iter()
                .map(|l| class_prob_distance(&po, &pa, l))
                .collect::<Result<Vec<f64>>>()?;
            Ok((ds, po.argmax().to_string(), pa.argmax().to_string()))
        });
        rows.push(match outcome {
            Ok((ds, po, pa)) => EmotionPair {
                id: p.id.clone(),
                method: p.method.clone(),
                label: p.label.clone(),
                distances: Some(ds),
                predicted_original: Some(po),
                predicted_anonymized: Some(pa),
                error: None,
            },
            Err(e) => {
                warn!("pair {} ({}): {e}", p.id, p.method);
                EmotionPair {
                    id: p.id.clone(),
                    method: p.method.clone(),
                    label: p.label.clone(),
                    distances: None,
                    predicted_original: None,
                    predicted_anonymized: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }

    let methods = method_order(rows.iter().map(|r| r.method.as_str()));
    let means = emotion_means(&rows, &labels, &methods);
    let statistics = emotion_statistics(&rows, &labels, &methods, reference_method);
    let f1 = emotion_f1(&rows, &labels, &methods);

    EmotionReport {
        labels,
        reference_method: reference_method.to_string(),
        means,
        statistics,
        f1,
        pairs: rows,
        metadata: ReportMetadata {
            adapters: BTreeMap::from([("classifier".to_string(), classifier.id())]),
            config_hash: None,
        },
        published_reference: PublishedReference::emotion(),
    }
}

fn emotion_means(rows: &[EmotionPair], labels: &[String], methods: &[String]) -> Vec<EmotionMean> {
    let mut out = Vec::new();
    for method in methods {
        let ds: Vec<&Vec<f64>> = rows
            .iter()
            .filter(|r| &r.method == method)
            .filter_map(|r| r.distances.as_ref())
            .collect();
        for (i, emotion) in labels.iter().enumerate() {
            let values: Vec<f64> = ds.iter().map(|d| d[i]).collect();
            out.push(EmotionMean {
                method: method.clone(),
                emotion: emotion.clone(),
                n: values.len(),
                mean_distance: mean(&values),
            });
        }
    }
    out
}

fn emotion_statistics(
    rows: &[EmotionPair],
    labels: &[String],
    methods: &[String],
    reference: &str,
) -> Vec<EmotionStatistic> {
    let by_id = |method: &str| -> BTreeMap<&str, &Vec<f64>> {
        rows.iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.distances.as_ref().map(|d| (r.id.as_str(), d)))
            .collect()
    };
    if !methods.iter().any(|m| m == reference) {
        return Vec::new();
    }
    let ref_rows: Vec<(&str, &Vec<f64>)> = rows
        .iter()
        .filter(|r| r.method == reference)
        .filter_map(|r| r.distances.as_ref().map(|d| (r.id.as_str(), d)))
        .collect();

    let mut stats = Vec::new();
    for other in methods.iter().filter(|m| m.as_str() != reference) {
        let other_rows = by_id(other);
        let paired: Vec<(&Vec<f64>, &Vec<f64>)> = ref_rows
            .iter()
            .filter_map(|(id, d)| other_rows.get(id).map(|o| (*d, *o)))
            .collect();
        for (i, emotion) in labels.iter().enumerate() {
            let x: Vec<f64> = paired.iter().map(|(a, _)| a[i]).collect();
            let y: Vec<f64> = paired.iter().map(|(_, b)| b[i]).collect();
            let mut row = EmotionStatistic {
                emotion: emotion.clone(),
                reference: reference.to_string(),
                method: other.clone(),
                n: x.len(),
                n_effective: None,
                statistic: None,
                z: None,
                r: None,
                p: None,
                p_adjusted: None,
                exact_p: None,
                significance: None,
                error: None,
            };
            match wilcoxon_signed_rank(&x, &y) {
                Ok(t) => {
                    row.n_effective = Some(t.n_effective);
                    row.statistic = Some(t.statistic);
                    row.z = Some(t.z);
                    row.r = effect_size_r(t.z, x.len()).ok();
                    row.p = Some(t.p);
                    row.exact_p = t.exact_p;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            stats.push(row);
        }
    }
    let raw: Vec<f64> = stats.iter().filter_map(|s| s.p).collect();
    if let Ok(adjusted) = bonferroni(&raw) {
        let mut adjusted = adjusted.into_iter();
        for s in stats.iter_mut().filter(|s| s.p.is_some()) {
            let p = adjusted.next().expect("one adjusted value per test");
            s.p_adjusted = Some(p);
            s.significance = Some(significance_flags(p));
        }
    }
    stats
}

fn emotion_f1(rows: &[EmotionPair], labels: &[String], methods: &[String]) -> Vec<MethodF1> {
    let scored: Vec<&EmotionPair> = rows.iter().filter(|r| r.distances.is_some()).collect();
    if scored.is_empty() || scored.iter().any(|r| r.label.is_none()) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut score = |method: &str, truth: Vec<&str>, pred: Vec<&str>| match f1_report(&truth, &pred, &labels.iter().map(String::as_str).collect::<Vec<_>>()) {
        Ok(report) => out.push(MethodF1 {
            method: method.to_string(),
            report,
        }),
        Err(e) => warn!("F1 for {method} skipped: {e}"),
    };

    let mut seen = std::collections::BTreeSet::new();
    let originals: Vec<&&EmotionPair> = scored.iter().filter(|r| seen.insert(r.id.as_str())).collect();
    score(
        "original",
        originals.iter().map(|r| r.label.as_deref().unwrap()).collect(),
        originals.iter().map(|r| r.predicted_original.as_deref().unwrap()).collect(),
    );
    for method in methods {
        let of: Vec<&&EmotionPair> = scored.iter().filter(|r| &r.method == method).collect();
        score(
            method,
            of.iter().map(|r| r.label.as_deref().unwrap()).collect(),
            of.iter().map(|r| r.predicted_anonymized.as_deref().unwrap()).collect(),
        );
    }
    out
}

/// Removal rate of one trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitRemoval {
    pub name: String,
    /// Originals in which the trait was predicted present.
    pub present: usize,
    /// Of those, anonymized versions in which it is no longer predicted.
    pub removed: usize,
    /// `None` when the trait was never predicted in the originals.
    pub rate: Option<f64>,
}

/// Probability strictly above this counts as "trait present".
pub const TRAIT_PRESENT_THRESHOLD: f64 = 0.5;

pub fn trait_removal_rates(
    orig: &[ClassProbabilities],
    anon: &[ClassProbabilities],
    traits: &[String],
) -> Result<Vec<TraitRemoval>> {
    if orig.len() != anon.len() {
        return Err(Error::invalid(format!(
            "{} original predictions but {} anonymized",
            orig.len(),
            anon.len()
        )));
    }
    traits
        .iter()
        .map(|name| {
            let (mut present, mut removed) = (0usize, 0usize);
            for (o, a) in orig.iter().zip(anon) {
                let missing = || Error::invalid(format!("trait {name:?} missing from probabilities"));
                let po = o.get(name).ok_or_else(missing)?;
                let pa = a.get(name).ok_or_else(missing)?;
                if po > TRAIT_PRESENT_THRESHOLD {
                    present += 1;
                    if pa <= TRAIT_PRESENT_THRESHOLD {
                        removed += 1;
                    }
                }
            }
            Ok(TraitRemoval {
                name: name.clone(),
                present,
                removed,
                rate: (present > 0).then(|| removed as f64 / present as f64),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTraits {
    pub method: String,
    pub evaluated: usize,
    pub skipped: usize,
    pub rates: Vec<TraitRemoval>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraitsReport {
    pub traits: Vec<String>,
    pub methods: Vec<MethodTraits>,
    pub metadata: ReportMetadata,
    pub published_reference: PublishedReference,
}

impl TraitsReport {
    pub fn rates_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["method", "trait", "present", "removed", "rate"]).map_err(io)?;
        for m in &self.methods {
            for r in &m.rates {
                w.write_record([
                    m.method.clone(),
                    r.name.clone(),
                    r.present.to_string(),
                    r.removed.to_string(),
                    r.rate.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into()),
                ])
                .map_err(io)?;
            }
        }
        finish_csv(w)
    }
}

/// Trait-removal rates per method from a multi-label attribute classifier.
pub fn traits_report(pairs: &[PairRecord], classifier: &dyn ProbabilityClassifier) -> TraitsReport {
    let predictions: Vec<Result<(ClassProbabilities, ClassProbabilities)>> = pairs
        .par_iter()
        .map(|p| {
            let (o, a) = load_pair(p)?;
            Ok((
                classifier.predict(ImageRef::with_path(&o, &p.original_path))?,
                classifier.predict(ImageRef::with_path(&a, &p.anonymized_path))?,
            ))
        })
        .collect();
    let traits: Vec<String> = predictions
        .iter()
        .find_map(|r| r.as_ref().ok())
        .map(|(po, _)| po.labels().to_vec())
        .unwrap_or_default();
    let methods = method_order(pairs.iter().map(|p| p.method.as_str()));
    let mut out = Vec::new();
    for method in methods {
        let (mut orig, mut anon, mut skipped) = (Vec::new(), Vec::new(), 0);
        for (p, pred) in pairs.iter().zip(&predictions) {
            if p.method != method {
                continue;
            }
            match pred {
                Ok((o, a)) => {
                    orig.push(o.clone());
                    anon.push(a.clone());
                }
                Err(e) => {
                    warn!("pair {} ({}): {e}", p.id, p.method);
                    skipped += 1;
                }
            }
        }
        match trait_removal_rates(&orig, &anon, &traits) {
            Ok(rates) => out.push(MethodTraits {
                method,
                evaluated: orig.len(),
                skipped,
                rates,
            }),
            Err(e) => warn!("trait rates for {method} skipped: {e}"),
        }
    }
    TraitsReport {
        traits,
        methods: out,
        metadata: ReportMetadata {
            adapters: BTreeMap::from([("classifier".to_string(), classifier.id())]),
            config_hash: None,
        },
        published_reference: PublishedReference::traits(),
    }
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&emb(&[0.3, 0.4, 5.0]), &emb(&[0.3, 0.4, 5.0])).unwrap(), 0.0);
        assert_eq!(cosine_distance(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(cosine_distance(&emb(&[1.0, 0.0]), &emb(&[-1.0, 0.0])).unwrap(), 2.0);
        assert!(matches!(
            cosine_distance(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])),
            Err(Error::UndefinedDistance(_))
        ));
        assert!(cosine_distance(&emb(&[1.0]), &emb(&[1.0, 0.0])).is_err());
        assert!(Embedding::new(vec![f32::NAN]).is_err());
    }

    #[test]
    fn class_probability_validation() {
        assert!(ClassProbabilities::multi_class(labels(&["a", "b"]), vec![0.5, 0.6]).is_err());
        assert!(ClassProbabilities::multi_label(labels(&["a", "b"]), vec![0.5, 0.6]).is_ok());
        assert!(ClassProbabilities::multi_label(labels(&["a"]), vec![1.5]).is_err());
        assert!(ClassProbabilities::multi_label(labels(&["a", "a"]), vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn class_distance_examples() {
        let o = ClassProbabilities::multi_class(labels(&["happy", "sad"]), vec![0.8, 0.2]).unwrap();
        let a = ClassProbabilities::multi_class(labels(&["happy", "sad"]), vec![0.6, 0.4]).unwrap();
        assert!((class_prob_distance(&o, &a, "happy").unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(class_prob_distance(&o, &o, "sad").unwrap(), 0.0);
        assert!(class_prob_distance(&o, &a, "fear").is_err());
        assert_eq!(o.argmax(), "happy");
    }

    #[test]
    fn f1_hand_computed() {
        let t = ["a", "a", "b", "b"];
        let p = ["a", "b", "b", "b"];
        let r = f1_report(&t, &p, &["a", "b"]).unwrap();
        let a = r.class("a").unwrap();
        let b = r.class("b").unwrap();
        assert_eq!((a.precision, a.recall), (1.0, 0.5));
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.recall, 1.0);
        assert!((b.f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.accuracy, 0.75);

        let perfect = f1_report(&t, &t, &["a", "b"]).unwrap();
        assert!(perfect.classes.iter().all(|c| c.f1 == 1.0 && !c.zero_division));
        assert_eq!((perfect.macro_avg.f1, perfect.weighted_avg.f1, perfect.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn f1_errors_and_zero_division() {
        assert!(f1_report(&["a"], &["a", "b"], &["a", "b"]).is_err());
        assert!(f1_report(&["a"], &["c"], &["a", "b"]).is_err());
        let r = f1_report(&["a", "a"], &["a", "a"], &["a", "b"]).unwrap();
        let b = r.class("b").unwrap();
        assert!(b.zero_division);
        assert_eq!((b.precision, b.recall, b.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn trait_rates_count() {
        let names = labels(&["hat", "beard"]);
        let orig: Vec<ClassProbabilities> = [0.9, 0.8, 0.7, 0.6, 0.1]
            .iter()
            .map(|&p| ClassProbabilities::multi_label(names.clone(), vec![p, 0.5]).unwrap())
            .collect();
        let anon: Vec<ClassProbabilities> = [0.1, 0.2, 0.5, 0.9, 0.9]
            .iter()
            .map(|&p| ClassProbabilities::multi_label(names.clone(), vec![p, 0.0]).unwrap())
            .collect();
        let rates = trait_removal_rates(&orig, &anon, &names).unwrap();
        assert_eq!((rates[0].present, rates[0].removed, rates[0].rate), (4, 3, Some(0.75)));
        // 0.5 is not "present"
        assert_eq!(rates[1].rate, None);
        assert!(trait_removal_rates(&orig, &anon[..2], &names).is_err());
    }

    #[test]
    fn anonymity_aggregate_by_hand() {
        let pairs = vec![
            PairDistance { id: "1".into(), method: "m".into(), distance: Some(0.0), error: None },
            PairDistance { id: "2".into(), method: "m".into(), distance: Some(1.0), error: None },
            PairDistance { id: "3".into(), method: "m".into(), distance: None, error: Some("x".into()) },
            PairDistance { id: "1".into(), method: "k".into(), distance: Some(0.2), error: None },
        ];
        let agg = AnonymityReport::aggregate(&pairs, 0.3);
        assert_eq!(agg[0].method, "m");
        assert_eq!((agg[0].mean_distance, agg[0].evaluated, agg[0].skipped), (Some(0.5), 2, 1));
        assert_eq!(agg[0].re_identifiable, Some(false));
        assert_eq!(agg[1].re_identifiable, Some(true));
    }

    proptest! {
        #[test]
        fn cosine_properties(
            a in prop::collection::vec(-10.0f32..10.0, 8),
            b in prop::collection::vec(-10.0f32..10.0, 8),
            s in 0.01f32..100.0,
        ) {
            prop_assume!(a.iter().any(|v| *v != 0.0) && b.iter().any(|v| *v != 0.0));
            let (ea, eb) = (emb(&a), emb(&b));
            let d = cosine_distance(&ea, &eb).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
            prop_assert_eq!(d, cosine_distance(&eb, &ea).unwrap());
            prop_assert_eq!(cosine_distance(&ea, &ea).unwrap(), 0.0);
            let scaled = emb(&a.iter().map(|v| v * s).collect::<Vec<_>>());
            prop_assert!((cosine_distance(&scaled, &eb).unwrap() - d).abs() < 1e-5);
        }

        #[test]
        fn class_distance_bounded(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let o = ClassProbabilities::multi_label(labels(&["x"]), vec![p]).unwrap();
            let a = ClassProbabilities::multi_label(labels(&["x"]), vec![q]).unwrap();
            let d = class_prob_distance(&o, &a, "x").unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d == 0.0, p == q);
        }
    }
}
