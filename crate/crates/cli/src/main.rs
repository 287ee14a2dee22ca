mod adapters;
mod commands;
mod config;
mod errors;
mod plot;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lmanon_core::eval::ProbabilityKind;

use crate::config::{
    default_face_size, merge_common, resolve_gan, role_specs, CommandParams, ConfigFile, FlagOverrides, RunConfig,
};
use crate::errors::{ErrorKind, ErrorReport, Failure};

#[derive(Debug, Parser)]
#[command(name = "lmanon", version, about = "Landmark-conditioned face anonymization and evaluation")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-image parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// GAN working resolution.
    #[arg(long, global = true)]
    image_size: Option<usize>,
    /// Adapter selection as ROLE=SPEC; repeatable.
    #[arg(long = "adapter", value_name = "ROLE=SPEC", global = true)]
    adapters: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    no_plots: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect, segment and rasterize landmarks for a folder of face images.
    Prepare {
        #[arg(long)]
        input: Option<PathBuf>,
        /// CSV of per-image labels carried into the manifest.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        face_size: Option<usize>,
    },
    /// Train the generator and discriminator.
    Train {
        /// Prepared dataset directory (holds manifest.json).
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Train on N generated pairs instead of a prepared dataset.
        #[arg(long, value_name = "N")]
        synthetic: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Replace faces with generated ones.
    Anonymize {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compute an evaluation report over a pair list.
    Eval {
        #[arg(value_enum)]
        report: Report,
        #[command(flatten)]
        opts: EvalOpts,
    },
    /// Produce pixelation or blur baselines.
    Baseline {
        #[arg(value_enum)]
        mode: BaselineMode,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Block size (pixelate) or kernel size (blur).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run a built-in adapter over the subprocess wire protocol.
    #[command(hide = true)]
    AdapterServe {
        #[arg(long)]
        role: String,
        #[arg(long)]
        spec: Option<String>,
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, value_enum, default_value = "multi-class")]
        kind: Kind,
        #[arg(long, default_value_t = adapters::PROTOCOL_VERSION)]
        protocol_version: u32,
    },
}

#[derive(Debug, Args)]
struct EvalOpts {
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Method compared against every other method in the statistics.
    #[arg(long)]
    reference: Option<String>,
    /// Comma-separated classifier labels.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Report {
    Anonymity,
    Emotion,
    Traits,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineMode {
    Pixelate,
    Blur,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    MultiClass,
    MultiLabel,
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Failure::Config(format!("{flag} is required (flag or config file)")).into())
}

/// Merges config file and flags into the resolved config of the command.
fn resolve(cli: Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let common = merge_common(
        &file,
        &FlagOverrides {
            seed: cli.seed,
            workers: cli.workers,
            image_size: cli.image_size,
            out: cli.out.as_deref(),
            no_plots: cli.no_plots,
            adapters: &cli.adapters,
        },
    )?;
    let (name, roles, params): (&str, &[&str], CommandParams) = match cli.command {
        Command::Prepare {
            input,
            labels,
            face_size,
        } => (
            "prepare",
            &["detector", "segmenter", "landmarker"],
            CommandParams::Prepare {
                input: required(input.or(file.prepare.input.clone()), "--input")?,
                labels: labels.or(file.prepare.labels.clone()),
                face_size: face_size.unwrap_or_else(|| default_face_size(&file)),
            },
        ),
        Command::Train {
            data,
            synthetic,
            epochs,
            batch_size,
        } => {
            let mut gan = resolve_gan(&file, &common);
            if let Some(e) = epochs {
                gan.epochs = e;
            }
            if let Some(b) = batch_size {
                gan.batch_size = b;
            }
            let (data, synthetic) = match (data, synthetic) {
                (None, None) => (file.train.data.clone(), file.train.synthetic),
                flags => flags,
            };
            ("train", &[], CommandParams::Train { data, synthetic, gan })
        }
        Command::Anonymize { input, checkpoint } => (
            "anonymize",
            &["landmarker"],
            CommandParams::Anonymize {
                input: required(input.or(file.anonymize.input.clone()), "--input")?,
                checkpoint: required(checkpoint.or(file.anonymize.checkpoint.clone()), "--checkpoint")?,
            },
        ),
        Command::Eval { report, opts } => {
            let (report, roles, file_labels, default_labels): (&str, &[&str], _, Vec<String>) = match report {
                Report::Anonymity => ("anonymity", &["embedder"], None, Vec::new()),
                Report::Emotion => (
                    "emotion",
                    &["classifier"],
                    file.eval.emotion_labels.clone(),
                    commands::EMOTION_LABELS.iter().map(|s| s.to_string()).collect(),
                ),
                Report::Traits => (
                    "traits",
                    &["classifier"],
                    file.eval.trait_labels.clone(),
                    commands::default_trait_labels(),
                ),
            };
            let labels = if !opts.labels.is_empty() {
                opts.labels
            } else {
                file_labels.unwrap_or(default_labels)
            };
            (
                "eval",
                roles,
                CommandParams::Eval {
                    report: report.to_string(),
                    pairs: required(opts.pairs.or(file.eval.pairs.clone()), "--pairs")?,
                    reference_method: opts
                        .reference
                        .or(file.eval.reference_method.clone())
                        .unwrap_or_else(|| "ours".to_string()),
                    labels,
                },
            )
        }
        Command::Baseline { mode, input, k } => (
            "baseline",
            &[],
            CommandParams::Baseline {
                mode: match mode {
                    BaselineMode::Pixelate => "pixelate",
                    BaselineMode::Blur => "blur",
                }
                .to_string(),
                input: required(input.or(file.baseline.input.clone()), "--input")?,
                k: k.or(file.baseline.k).unwrap_or(8),
            },
        ),
        Command::AdapterServe { .. } => unreachable!("handled before resolution"),
    };
    let config = RunConfig {
        command: name.to_string(),
        seed: common.seed,
        workers: common.workers,
        out: common.out.clone(),
        plots: common.plots,
        adapter_timeout_secs: common.adapter_timeout_secs,
        adapters: role_specs(&common, roles),
        params,
    };
    config.validate()?;
    Ok(config)
}

fn execute(cli: Cli) -> Result<()> {
    if let Command::AdapterServe {
        role,
        spec,
        labels,
        kind,
        protocol_version,
    } = &cli.command
    {
        let spec = spec.clone().unwrap_or_else(|| adapters::default_spec(role).to_string());
        let kind = match kind {
            Kind::MultiClass => ProbabilityKind::MultiClass,
            Kind::MultiLabel => ProbabilityKind::MultiLabel,
        };
        return adapters::serve(role, &spec, labels, kind, *protocol_version);
    }
    let config = resolve(cli)?;
    if let Some(n) = config.workers {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let hash = config.hash();
    log::info!("{} config {hash}", config.command);
    let clock = record::Clock::start();
    let outcome = commands::run(&config, &hash);
    adapters::check_violations()?;
    let outcome = outcome?;
    let record = record::write_run_record(&config, &hash, &clock, &outcome.outputs)?;
    let mut summary = outcome.summary;
    if let serde_json::Value::Object(map) = &mut summary {
        map.insert("config_hash".into(), hash.into());
        map.insert("run_record".into(), serde_json::json!(record));
    } else {
        summary = serde_json::json!({ "result": summary, "config_hash": hash, "run_record": record });
    }
    println!("{summary}");
    Ok(())
}

fn fail(report: ErrorReport) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": report }));
    ExitCode::from(report.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return fail(ErrorReport {
                kind: ErrorKind::InvalidConfig,
                exit_code: ErrorKind::InvalidConfig.exit_code(),
                message: e.kind().to_string(),
                causes: vec![e.render().to_string()],
            });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            fail(ErrorReport::new(&e))
        }
    }
}
