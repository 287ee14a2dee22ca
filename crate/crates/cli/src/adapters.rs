//! Adapter selection by spec string, and the JSON-lines subprocess protocol.
//!
//! Spec strings:
//! * `geometric`: template-based detector, segmenter and landmarker
//! * `fixture:<dir>`: replays `<stem>.json` sidecars (detector, landmarker)
//! * `pixel-stats` or `pixel-stats:<seed>`: pixel-statistics embedder / classifier
//! * `cmd:<program> [args...]`: external process; `{role}` in an argument is
//!   replaced by the role name
//!
//! Wire protocol: one JSON object per line each way. Requests carry
//! `protocol_version`, `role` and `image_path`; responses must echo
//! `protocol_version` and hold `detections`, `mask_path`, `landmarks`,
//! `embedding` or `probabilities` depending on the role, or `error`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{Context, Result};
use lmanon_core::adapters::{
    FaceDetection, FaceDetector, FaceEmbedder, FaceSegmenter, FixtureAdapter, GeometricAdapter, ImageRef,
    LandmarkExtractor, PixelStatsClassifier, PixelStatsEmbedder, ProbabilityClassifier, SegmentationMask,
};
use lmanon_core::eval::{ClassProbabilities, Embedding, ProbabilityKind};
use lmanon_core::{FaceImage, LandmarkSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::errors::Failure;

pub const PROTOCOL_VERSION: u32 = 1;

pub fn default_spec(role: &str) -> &'static str {
    match role {
        "embedder" | "classifier" => "pixel-stats",
        _ => "geometric",
    }
}

/// Out-of-process adapter: program, argument template and protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalAdapterSpec {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub protocol_version: u32,
    pub timeout_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Spec {
    Geometric,
    Fixture(PathBuf),
    PixelStats { seed: Option<u64> },
    External(ExternalAdapterSpec),
}

pub fn parse_spec(text: &str, timeout_secs: f64) -> Result<Spec> {
    let (head, rest) = match text.split_once(':') {
        Some((h, r)) => (h, Some(r)),
        None => (text, None),
    };
    let spec = match (head, rest) {
        ("geometric", None) => Spec::Geometric,
        ("fixture", Some(dir)) if !dir.is_empty() => Spec::Fixture(PathBuf::from(dir)),
        ("pixel-stats", None) => Spec::PixelStats { seed: None },
        ("pixel-stats", Some(seed)) => Spec::PixelStats {
            seed: Some(
                seed.parse()
                    .map_err(|_| Failure::Config(format!("pixel-stats seed {seed:?} is not an integer")))?,
            ),
        },
        ("cmd", Some(command)) => {
            let mut parts = command.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| Failure::Config("cmd: adapter needs a program".into()))?;
            if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
                return Err(Failure::Config(format!("adapter timeout {timeout_secs} must be positive")).into());
            }
            Spec::External(ExternalAdapterSpec {
                program: PathBuf::from(program),
                args: parts.map(str::to_string).collect(),
                protocol_version: PROTOCOL_VERSION,
                timeout_secs,
            })
        }
        _ => return Err(Failure::Config(format!("unrecognized adapter spec {text:?}")).into()),
    };
    Ok(spec)
}

fn unsupported(role: &str, spec: &str) -> anyhow::Error {
    Failure::Config(format!("adapter spec {spec:?} cannot act as {role}")).into()
}

pub fn detector(spec: &str, timeout: f64) -> Result<Box<dyn FaceDetector>> {
    Ok(match parse_spec(spec, timeout)? {
        Spec::Geometric => Box::new(GeometricAdapter::default()),
        Spec::Fixture(dir) => Box::new(fixture(&dir)?),
        Spec::External(ext) => Box::new(ExternalAdapter::new("detector", ext)),
        Spec::PixelStats { .. } => return Err(unsupported("detector", spec)),
    })
}

pub fn segmenter(spec: &str, timeout: f64) -> Result<Box<dyn FaceSegmenter>> {
    Ok(match parse_spec(spec, timeout)? {
        Spec::Geometric => Box::new(GeometricAdapter::default()),
        Spec::External(ext) => Box::new(ExternalAdapter::new("segmenter", ext)),
        _ => return Err(unsupported("segmenter", spec)),
    })
}

pub fn landmarker(spec: &str, timeout: f64) -> Result<Box<dyn LandmarkExtractor>> {
    Ok(match parse_spec(spec, timeout)? {
        Spec::Geometric => Box::new(GeometricAdapter::default()),
        Spec::Fixture(dir) => Box::new(fixture(&dir)?),
        Spec::External(ext) => Box::new(ExternalAdapter::new("landmarker", ext)),
        Spec::PixelStats { .. } => return Err(unsupported("landmarker", spec)),
    })
}

pub fn embedder(spec: &str, timeout: f64) -> Result<Box<dyn FaceEmbedder>> {
    Ok(match parse_spec(spec, timeout)? {
        Spec::PixelStats { seed: None } => Box::new(PixelStatsEmbedder::default()),
        Spec::External(ext) => Box::new(ExternalAdapter::new("embedder", ext)),
        _ => return Err(unsupported("embedder", spec)),
    })
}

pub fn classifier(
    spec: &str,
    timeout: f64,
    kind: ProbabilityKind,
    labels: &[String],
    run_seed: u64,
) -> Result<Box<dyn ProbabilityClassifier>> {
    Ok(match parse_spec(spec, timeout)? {
        Spec::PixelStats { seed } => Box::new(
            PixelStatsClassifier::new(kind, labels.to_vec(), seed.unwrap_or(run_seed))
                .map_err(|e| Failure::Config(e.to_string()))?,
        ),
        Spec::External(ext) => Box::new(ExternalAdapter::new("classifier", ext)),
        _ => return Err(unsupported("classifier", spec)),
    })
}

fn fixture(dir: &Path) -> Result<FixtureAdapter> {
    crate::errors::require_exists(dir)?;
    FixtureAdapter::from_dir(dir).with_context(|| format!("loading fixture sidecars from {}", dir.display()))
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Adapter backed by a long-lived child process, started on first use.
/// Calls are serialized over the child's stdin/stdout.
pub struct ExternalAdapter {
    role: &'static str,
    spec: ExternalAdapterSpec,
    process: Mutex<Option<Process>>,
}

/// Protocol violations seen so far. Per-image failures are absorbed by the
/// pipelines, so commands check this afterwards and abort on any entry.
static VIOLATIONS: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Drains recorded violations into an adapter failure, if there were any.
pub fn check_violations() -> Result<()> {
    let mut seen = VIOLATIONS.lock().unwrap_or_else(|p| p.into_inner());
    if seen.is_empty() {
        return Ok(());
    }
    let count = seen.len();
    let first = seen.remove(0);
    seen.clear();
    Err(Failure::Adapter(format!("{first} ({count} protocol violation(s) in total)")).into())
}

fn protocol_error(adapter: &str, message: impl Into<String>) -> lmanon_core::Error {
    lmanon_core::Error::Adapter {
        adapter: adapter.to_string(),
        message: message.into(),
    }
}

impl ExternalAdapter {
    pub fn new(role: &'static str, spec: ExternalAdapterSpec) -> Self {
        Self {
            role,
            spec,
            process: Mutex::new(None),
        }
    }

    fn name(&self) -> String {
        format!("cmd:{}", self.spec.program.display())
    }

    fn violation(&self, message: impl Into<String>) -> lmanon_core::Error {
        let message = message.into();
        VIOLATIONS
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(format!("{} as {}: {message}", self.name(), self.role));
        protocol_error(&self.name(), message)
    }

    fn spawn(&self) -> lmanon_core::Result<Process> {
        let args: Vec<String> = self.spec.args.iter().map(|a| a.replace("{role}", self.role)).collect();
        let mut child = Command::new(&self.spec.program)
            .args(&args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| self.violation(format!("cannot start: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Process {
            child,
            stdin,
            lines: rx,
        })
    }

    fn call(&self, input: ImageRef<'_>) -> lmanon_core::Result<Value> {
        let name = self.name();
        // The child reads images from disk; in-memory images get a temporary file.
        let temp;
        let path = match input.path {
            Some(p) => p.to_path_buf(),
            None => {
                temp = tempfile::Builder::new()
                    .suffix(".png")
                    .tempfile()
                    .map_err(|e| protocol_error(&name, format!("staging image: {e}")))?;
                input.image.save_png(temp.path())?;
                temp.path().to_path_buf()
            }
        };
        let path = std::fs::canonicalize(&path).unwrap_or(path);
        let request = json!({
            "protocol_version": self.spec.protocol_version,
            "role": self.role,
            "image_path": path,
        });
        let mut guard = self.process.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let proc = guard.as_mut().expect("process started");
        let sent = writeln!(proc.stdin, "{request}").and_then(|_| proc.stdin.flush());
        if let Err(e) = sent {
            *guard = None;
            return Err(self.violation(format!("request not delivered: {e}")));
        }
        let timeout = Duration::from_secs_f64(self.spec.timeout_secs);
        let line = match proc.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                *guard = None;
                return Err(self.violation(format!("reading response: {e}")));
            }
            Err(RecvTimeoutError::Timeout) => {
                *guard = None;
                return Err(self.violation(format!("no response within {:?}", timeout)));
            }
            Err(RecvTimeoutError::Disconnected) => {
                *guard = None;
                return Err(self.violation("process exited without responding"));
            }
        };
        drop(guard);
        let value: Value =
            serde_json::from_str(&line).map_err(|e| self.violation(format!("response is not JSON: {e}")))?;
        match value.get("protocol_version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(self.spec.protocol_version) => {}
            Some(v) => {
                return Err(self.violation(format!(
                    "protocol_version {v} does not match {}",
                    self.spec.protocol_version
                )))
            }
            None => return Err(self.violation("response lacks protocol_version")),
        }
        if let Some(err) = value.get("error") {
            return Err(protocol_error(&name, format!("adapter reported: {err}")));
        }
        Ok(value)
    }

    fn field<T: serde::de::DeserializeOwned>(&self, value: &Value, key: &str) -> lmanon_core::Result<T> {
        let raw = value
            .get(key)
            .ok_or_else(|| self.violation(format!("response lacks `{key}`")))?;
        serde_json::from_value(raw.clone()).map_err(|e| self.violation(format!("bad `{key}`: {e}")))
    }
}

impl FaceDetector for ExternalAdapter {
    fn id(&self) -> String {
        self.name()
    }

    fn detect(&self, input: ImageRef<'_>) -> lmanon_core::Result<Vec<FaceDetection>> {
        let v = self.call(input)?;
        self.field(&v, "detections")
    }
}

impl FaceSegmenter for ExternalAdapter {
    fn id(&self) -> String {
        self.name()
    }

    fn segment(&self, input: ImageRef<'_>) -> lmanon_core::Result<SegmentationMask> {
        let v = self.call(input)?;
        let path: PathBuf = self.field(&v, "mask_path")?;
        SegmentationMask::load_png(&path)
    }
}

impl LandmarkExtractor for ExternalAdapter {
    fn id(&self) -> String {
        self.name()
    }

    fn extract(&self, input: ImageRef<'_>) -> lmanon_core::Result<Option<LandmarkSet>> {
        let v = self.call(input)?;
        let points: Option<Vec<[f32; 3]>> = self.field(&v, "landmarks")?;
        points
            .map(|p| LandmarkSet::new(p).map_err(|e| self.violation(e.to_string())))
            .transpose()
    }
}

impl FaceEmbedder for ExternalAdapter {
    fn id(&self) -> String {
        self.name()
    }

    fn embed(&self, input: ImageRef<'_>) -> lmanon_core::Result<Embedding> {
        let v = self.call(input)?;
        let values: Vec<f32> = self.field(&v, "embedding")?;
        Embedding::new(values).map_err(|e| self.violation(e.to_string()))
    }
}

impl ProbabilityClassifier for ExternalAdapter {
    fn id(&self) -> String {
        self.name()
    }

    fn predict(&self, input: ImageRef<'_>) -> lmanon_core::Result<ClassProbabilities> {
        let v = self.call(input)?;
        let raw: ClassProbabilities = self.field(&v, "probabilities")?;
        ClassProbabilities::new(raw.kind(), raw.labels().to_vec(), raw.values().to_vec())
            .map_err(|e| self.violation(e.to_string()))
    }
}

/// Serves a built-in adapter over the wire protocol on stdin/stdout.
pub fn serve(role: &str, spec: &str, labels: &[String], kind: ProbabilityKind, protocol_version: u32) -> Result<()> {
    let scratch = tempfile::tempdir()?;
    let timeout = crate::config::DEFAULT_ADAPTER_TIMEOUT_SECS;
    enum Builtin {
        Detector(Box<dyn FaceDetector>),
        Segmenter(Box<dyn FaceSegmenter>),
        Landmarker(Box<dyn LandmarkExtractor>),
        Embedder(Box<dyn FaceEmbedder>),
        Classifier(Box<dyn ProbabilityClassifier>),
    }
    let adapter = match role {
        "detector" => Builtin::Detector(detector(spec, timeout)?),
        "segmenter" => Builtin::Segmenter(segmenter(spec, timeout)?),
        "landmarker" => Builtin::Landmarker(landmarker(spec, timeout)?),
        "embedder" => Builtin::Embedder(embedder(spec, timeout)?),
        "classifier" => Builtin::Classifier(classifier(spec, timeout, kind, labels, 0)?),
        other => return Err(Failure::Config(format!("unknown adapter role {other:?}")).into()),
    };
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for (n, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = (|| -> Result<Value> {
            let req: Value = serde_json::from_str(&line)?;
            let path: PathBuf = serde_json::from_value(req.get("image_path").cloned().unwrap_or(Value::Null))?;
            let image = FaceImage::load(&path)?;
            let input = ImageRef::with_path(&image, &path);
            Ok(match &adapter {
                Builtin::Detector(a) => json!({ "detections": a.detect(input)? }),
                Builtin::Segmenter(a) => {
                    let mask_path = scratch.path().join(format!("mask{n}.png"));
                    a.segment(input)?.save_png(&mask_path)?;
                    json!({ "mask_path": mask_path })
                }
                Builtin::Landmarker(a) => {
                    let points: Option<Vec<[f32; 3]>> = a.extract(input)?.map(Into::into);
                    json!({ "landmarks": points })
                }
                Builtin::Embedder(a) => json!({ "embedding": a.embed(input)?.vector() }),
                Builtin::Classifier(a) => json!({ "probabilities": a.predict(input)? }),
            })
        })();
        let mut response = match outcome {
            Ok(v) => v,
            Err(e) => json!({ "error": format!("{e:#}") }),
        };
        response["protocol_version"] = json!(protocol_version);
        writeln!(stdout, "{response}")?;
        stdout.flush()?;
    }
    Ok(())
}
