use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sertk::commands::{self, TrainSource};
use sertk::config::RunConfig;
use sertk::report::ReportFormat;

#[derive(Parser)]
#[command(name = "sertk", version, about = "Speech emotion recognition toolkit")]
struct Cli {
    /// Run configuration (flat TOML); defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and cache log-mel features for every manifest utterance.
    Features,
    /// Aggregate evaluator votes into labels and a per-class summary.
    Annotate,
    /// Cross-validate the classifier and save one checkpoint per fold.
    Train {
        /// Train on the configured synthetic corpus instead of the manifest.
        #[arg(long)]
        synthetic: bool,
    },
    /// Classify utterances and write emotion shares and electoral joins.
    Analyze,
    /// Re-render a CSV or JSON report table.
    Report {
        input: PathBuf,
        /// csv, json or svg_bars.
        #[arg(long, default_value = "svg_bars")]
        format: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.set_out_dir(out);
    }
    match cli.command {
        Command::Features => {
            let s = commands::cmd_features(&cfg)?;
            println!("features: {} written, {} up to date", s.written, s.skipped);
        }
        Command::Annotate => {
            let s = commands::cmd_annotate(&cfg)?;
            println!(
                "annotate: {} utterances, {} accepted, {} discarded",
                s.utterances, s.summary.accepted, s.summary.discarded
            );
        }
        Command::Train { synthetic } => {
            let source = if synthetic { TrainSource::Synthetic } else { TrainSource::Manifest };
            let s = commands::cmd_train(&cfg, source)?;
            let folds: Vec<String> = s.fold_ua.iter().map(|u| format!("{u:.4}")).collect();
            println!("train: {} examples, fold UA [{}], mean UA {:.4}", s.examples, folds.join(", "), s.mean_ua);
        }
        Command::Analyze => {
            let s = commands::cmd_analyze(&cfg)?;
            println!(
                "analyze: {} utterances, {} speakers, {} electoral rows joined",
                s.utterances,
                s.shares.len(),
                s.electoral.rows.len()
            );
        }
        Command::Report { input, format, output } => {
            let path = commands::cmd_report(&input, format.parse::<ReportFormat>()?, output.as_deref())?;
            println!("report: wrote {}", path.display());
        }
        Command::Config => print!("{}", toml::to_string(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
