//! `artinv` — experiment pipeline CLI.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
//! 4 numeric failure, 1 anything else. `ARTINV_THREADS` caps parallelism.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use artinv::aai::Scheme;
use artinv::corpus::SpeakerId;
use artinv::error::Error;
use artinv::eval::ReportFormat;
use artinv::pipeline::{Condition, ExperimentConfig, Pipeline};

#[derive(Parser)]
#[command(name = "artinv", version, about = "Speaker-conditioned articulatory inversion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// 10 seen + 4 unseen speakers, 60 sentences each.
    Desk,
    /// Tiny smoke-test configuration.
    Mini,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedKind {
    Onehot,
    Xvector,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Markdown,
}

impl Format {
    fn to_report(self) -> ReportFormat {
        match self {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (JSON). Flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration profile used when no --config file is given.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,

    /// Master seed override; re-seeds corpus synthesis and every training.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory holding all pipeline artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic seen/unseen/background corpora and splits.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Compute MFCC and articulatory feature caches.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Train the x-vector extractor on background speakers and cache
    /// embeddings for the AAI speakers.
    TrainEmbedder {
        #[command(flatten)]
        common: Common,
    },
    /// Train the speaker-identification network on seen speakers.
    TrainSid {
        #[command(flatten)]
        common: Common,
    },
    /// Train inversion models for one scheme.
    TrainAai {
        #[command(flatten)]
        common: Common,
        /// Training scheme.
        #[arg(long)]
        scheme: String,
        /// Speaker labels (comma separated) for per-speaker schemes.
        #[arg(long, value_delimiter = ',')]
        speakers: Option<Vec<String>>,
        /// Conditioning source guard; must match the scheme.
        #[arg(long, value_enum)]
        embed: Option<EmbedKind>,
    },
    /// Score trained models on test utterances.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        condition: String,
        /// Models directory (defaults to <out>/models).
        #[arg(long)]
        models: Option<PathBuf>,
        /// Schemes to evaluate (comma separated); defaults per condition.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        /// Report format rendered alongside the stored scores.
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Re-render report tables from stored scores.
    Report {
        #[command(flatten)]
        common: Common,
        /// Formats to render; default renders all three.
        #[arg(long, value_enum, value_delimiter = ',')]
        format: Option<Vec<Format>>,
    },
    /// Project cached x-vectors to 2-D for plotting.
    ProjectEmbeddings {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full protocol end to end and summarize headline properties.
    Reproduce {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            artinv::pipeline::parse_config(&bytes).map_err(Error::Config)?
        }
        None => match common.profile {
            Profile::Desk => ExperimentConfig::desk(7),
            Profile::Mini => ExperimentConfig::mini(7),
        },
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn speakers_to_indices(
    cfg: &ExperimentConfig,
    labels: &[String],
) -> Result<Vec<u32>, Error> {
    let known: Vec<SpeakerId> = (0..cfg.corpus.seen_speakers + cfg.corpus.unseen_speakers)
        .map(SpeakerId::from_index)
        .collect();
    let mut out = Vec::new();
    for label in labels {
        let id = known
            .iter()
            .find(|s| &s.label == label)
            .ok_or_else(|| Error::Config(format!("unknown speaker label `{label}`")))?;
        out.push(id.index);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn run() -> Result<(), Error> {
    artinv::pipeline::init_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { common } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?;
            p.synth()?;
            println!("synth: corpora and splits ready under {}", common.out.display());
        }
        Command::Preprocess { common } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?;
            p.preprocess()?;
            println!("preprocess: feature caches ready");
        }
        Command::TrainEmbedder { common } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?;
            p.train_embedder()?;
            let (_, acc) = p.load_embedder()?;
            println!("train-embedder: holdout accuracy {acc:.3}");
        }
        Command::TrainSid { common } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?;
            p.train_sid()?;
            let (_, _, acc) = p.load_sid()?;
            println!("train-sid: test accuracy {acc:.3}");
        }
        Command::TrainAai {
            common,
            scheme,
            speakers,
            embed,
        } => {
            let cfg = load_config(&common)?;
            let scheme = Scheme::parse(&scheme)?;
            match (scheme, embed) {
                (Scheme::Sc, Some(EmbedKind::Xvector)) => {
                    return Err(Error::Config(
                        "scheme sc conditions on one-hot vectors; use --embed onehot".into(),
                    ))
                }
                (Scheme::Xsc, Some(EmbedKind::Onehot)) => {
                    return Err(Error::Config(
                        "scheme xsc conditions on x-vectors; use --embed xvector".into(),
                    ))
                }
                (s, Some(_)) if !s.is_conditioned() => {
                    return Err(Error::Config(format!(
                        "scheme {s} has no conditioning branch; drop --embed"
                    )))
                }
                _ => {}
            }
            let indices = match &speakers {
                Some(labels) => Some(speakers_to_indices(&cfg, labels)?),
                None => None,
            };
            let p = Pipeline::new(cfg, &common.out)?;
            p.train_aai(scheme, indices)?;
            println!("train-aai: scheme {scheme} done");
        }
        Command::Evaluate {
            common,
            condition,
            models,
            schemes,
            format,
        } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?
                .with_models_dir(models);
            let condition = Condition::parse(&condition)?;
            let schemes = schemes.unwrap_or_else(|| p.default_eval_schemes(condition));
            let report = p.evaluate(condition, &schemes)?;
            p.report(&[format.to_report()])?;
            for agg in &report.schemes {
                println!(
                    "evaluate[{}] {}: CC {:.4} ({:.3})  RMSE {:.4} ({:.3})",
                    condition.name(),
                    agg.scheme,
                    agg.cc,
                    agg.cc_sd,
                    agg.rmse,
                    agg.rmse_sd
                );
            }
        }
        Command::Report { common, format } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?;
            let formats: Vec<ReportFormat> = match format {
                Some(fs) => fs.into_iter().map(Format::to_report).collect(),
                None => vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown],
            };
            let files = p.report(&formats)?;
            println!("report: wrote {} files", files.len());
        }
        Command::ProjectEmbeddings { common } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?;
            let path = p.project_embeddings()?;
            println!("project-embeddings: {}", path.display());
        }
        Command::Reproduce { common } => {
            let p = Pipeline::new(load_config(&common)?, &common.out)?;
            let summary = p.reproduce()?;
            println!("reproduce: config {} seed {}", summary.config_hash, summary.seed);
            println!(
                "  embedder holdout accuracy {:.3}; SID test accuracy {:.3}",
                summary.embedder_holdout_accuracy, summary.sid_test_accuracy
            );
            for (scheme, cc) in &summary.seen_cc {
                println!("  seen   {scheme:>6}: CC {cc:.4}");
            }
            for (scheme, cc) in &summary.unseen_cc {
                println!("  unseen {scheme:>6}: CC {cc:.4}");
            }
            for (name, ok) in &summary.properties {
                println!("  [{}] {name}", if *ok { "pass" } else { "FAIL" });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Parameter(_) => 2,
                Error::MissingArtifact { .. } => 3,
                Error::Numeric(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
