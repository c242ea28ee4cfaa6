use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use negscope::pipeline::{
    cmd_evaluate, cmd_experiment, cmd_predict, cmd_train_cue, cmd_train_scope, CueSource,
    CueVariant, ExperimentConfig, InputFormat, PipelineError, PredictOptions, RunArtifacts,
    ScopeVariant, OUT_ENV,
};

#[derive(Parser)]
#[command(name = "negscope", version, about = "Negation cue detection and scope resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Column-format corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pretrained embeddings in `<count> <d>` text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output directory (overrides the config and NEGSCOPE_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CueInputArg {
    Gold,
    Pred,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate cue detection models.
    TrainCue {
        #[command(flatten)]
        common: Common,
        /// Train only this variant.
        #[arg(long)]
        variant: Option<CueVariant>,
    },
    /// Train scope models on gold cues and evaluate them.
    TrainScope {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<ScopeVariant>,
        /// Cue input at test time.
        #[arg(long, value_enum, default_value = "gold")]
        cue_input: CueInputArg,
        /// Cue checkpoint used with `--cue-input pred`.
        #[arg(long)]
        cue_model: Option<PathBuf>,
    },
    /// Full two-stage run with gold versus predicted cue inputs.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Tag sentences with trained checkpoints.
    Predict {
        #[arg(long)]
        cue_model: Option<PathBuf>,
        #[arg(long)]
        scope_model: Option<PathBuf>,
        /// Vocabulary file; defaults to vocab.txt beside the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Input is raw text, one sentence per line.
        #[arg(long)]
        raw: bool,
        /// Smooth scope predictions into one block around the cue.
        #[arg(long)]
        postprocess: bool,
        #[arg(long, default_value_t = 100)]
        max_len: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction file against a gold file.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Ok(out) = std::env::var(OUT_ENV) {
        cfg.out = PathBuf::from(out);
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &common.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &common.embeddings {
        cfg.embeddings = Some(p.clone());
    }
    if let Some(p) = &common.out {
        cfg.out = p.clone();
    }
    Ok(cfg)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), PipelineError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| PipelineError::Io {
            path: p.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summarize(arts: &RunArtifacts) {
    print!("{}", arts.report);
    println!("\nrun directory: {}", arts.dir.display());
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::TrainCue { common, variant } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = variant {
                cfg.cue_variants = vec![v];
            }
            summarize(&cmd_train_cue(&cfg)?);
        }
        Command::TrainScope {
            common,
            variant,
            cue_input,
            cue_model,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = variant {
                cfg.scope_variants = vec![v];
            }
            let source = match (cue_input, cue_model) {
                (CueInputArg::Gold, _) => CueSource::Gold,
                (CueInputArg::Pred, Some(p)) => CueSource::Checkpoint(p),
                (CueInputArg::Pred, None) => {
                    return Err(PipelineError::Config(
                        "--cue-input pred needs --cue-model".into(),
                    ))
                }
            };
            summarize(&cmd_train_scope(&cfg, &source)?);
        }
        Command::Experiment { common } => {
            let cfg = resolve(&common)?;
            summarize(&cmd_experiment(&cfg)?);
        }
        Command::Predict {
            cue_model,
            scope_model,
            vocab,
            input,
            raw,
            postprocess,
            max_len,
            out,
        } => {
            let opts = PredictOptions {
                cue_model,
                scope_model,
                vocab,
                input,
                format: if raw {
                    InputFormat::Raw
                } else {
                    InputFormat::Columns
                },
                postprocess,
                max_len,
            };
            let mut buf = Vec::new();
            let n = cmd_predict(&opts, &mut buf)?;
            log::info!("tagged {n} sentences");
            match out {
                Some(p) => fs::write(&p, &buf).map_err(|source| PipelineError::Io { path: p, source })?,
                None => io::stdout().write_all(&buf).map_err(|source| PipelineError::Io {
                    path: "<stdout>".into(),
                    source,
                })?,
            }
        }
        Command::Evaluate { pred, gold, out } => {
            emit(&cmd_evaluate(&pred, &gold)?, out.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
