use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duotok::commands::{self, PredictorSource};
use duotok::config::{extract_overrides, ConfigError, RunConfig, KEYS};
use duotok::Error;

/// Dual-track music tokenizer toolkit.
///
/// Any config key may be given as `--key value` and overrides the config file.
#[derive(Parser)]
#[command(name = "duotok", version, after_help = config_help())]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration to stderr before running.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute spectral features of a 16-bit PCM WAV file.
    Featurize { input: PathBuf, output: PathBuf },
    /// Random-projection quantizer targets and a span mask for a feature file.
    BestrqTargets {
        features: PathBuf,
        output: PathBuf,
        /// Also save the quantizer.
        #[arg(long)]
        quantizer: Option<PathBuf>,
    },
    /// Train the vocal and accompaniment codebook bases.
    TrainVq {
        feature_dir: PathBuf,
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Quantize feature files into a token file.
    Tokenize {
        codebooks: PathBuf,
        output: PathBuf,
        #[arg(long)]
        vocal: Option<PathBuf>,
        #[arg(long)]
        accomp: Option<PathBuf>,
        /// Also write `frame,vocal_idx,accomp_idx`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Score a directory of token files with an external or baseline predictor.
    EvalLm {
        tokens_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of per-sequence log-probability tables.
        #[arg(long, conflicts_with = "baseline_bigram", required_unless_present = "baseline_bigram")]
        predictor: Option<PathBuf>,
        #[arg(long)]
        baseline_bigram: bool,
    },
    /// Merge operating-point files into one bitrate/PPL/Mel-L1 table.
    Pareto {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_help() -> String {
    format!("Config keys: {}", KEYS.join(", "))
}

fn load_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Usage(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<(), Error> {
    let cfg = load_config(cli.config.as_deref(), overrides)?;
    if cli.show_config {
        eprint!("{}", cfg.serialize());
    }
    match cli.command {
        Command::Featurize { input, output } => {
            let f = commands::featurize(&input, &output, &cfg)?;
            eprintln!("{} frames × {} at {} Hz", f.frames(), f.dim(), f.frame_rate());
        }
        Command::BestrqTargets {
            features,
            output,
            quantizer,
        } => {
            let t = commands::bestrq_targets(&features, &output, quantizer.as_deref(), &cfg)?;
            eprintln!("{} targets", t.len());
        }
        Command::TrainVq {
            feature_dir,
            manifest,
            out,
            log,
        } => {
            let r = commands::train_vq(&feature_dir, &manifest, &out, &log, &cfg)?;
            if let Some(last) = r.log.last() {
                eprintln!("step {}: vq_loss {:.6}", last.step, last.vq_loss);
            }
        }
        Command::Tokenize {
            codebooks,
            output,
            vocal,
            accomp,
            csv,
        } => {
            commands::tokenize(&codebooks, vocal.as_deref(), accomp.as_deref(), &output, csv.as_deref(), &cfg)?;
        }
        Command::EvalLm {
            tokens_dir,
            out,
            predictor,
            baseline_bigram: _,
        } => {
            let source = predictor.map_or(PredictorSource::Bigram, PredictorSource::Tables);
            let report = commands::eval_lm(&tokens_dir, &source, &out, &cfg)?;
            for r in &report.rows {
                eprintln!("{:<10} H={:.4} PPL@1024={:.4}", r.label, r.h_nats, r.ppl_at_1024);
            }
        }
        Command::Pareto { inputs, out } => {
            commands::pareto(&inputs, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = match extract_overrides(std::env::args().collect()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
