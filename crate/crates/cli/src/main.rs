//! Command-line driver for compressed streaming embeddings.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use compstream::synth::SynthConfig;

use commands::{EvalModel, SynthArgs};
use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "compstream",
    version,
    about = "Learn compressed embeddings over a record stream"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that reads a run config.
#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, env = "COMPSTREAM_SEED")]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, env = "COMPSTREAM_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Window length in seconds.
    #[arg(long)]
    window_span: Option<i64>,
    /// Leading share of the windows used for pretraining, in (0, 1].
    #[arg(long)]
    pretrain_fraction: Option<f64>,
}

impl RunArgs {
    fn load(&self, workers: Option<usize>) -> Result<RunConfig> {
        let overrides = Overrides {
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            workers,
            window_span: self.window_span,
            pretrain_fraction: self.pretrain_fraction,
        };
        let cfg = RunConfig::load(&self.config, &overrides)?;
        cfg.write_resolved()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Vocabulary sizes, window counts and per-window novelty.
    Inspect {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pretrain on the leading windows and save the compressed model.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Learn the windows after the model's cursor.
    Stream {
        #[command(flatten)]
        run: RunArgs,
        /// Worker threads per window.
        #[arg(long)]
        p: Option<usize>,
        /// Model to continue; defaults to `<output_dir>/model.bin`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Where to save the result; defaults to `<output_dir>/model.streamed.bin`.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Streaming evaluation of one model.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(value_enum)]
        model: EvalModel,
        /// Worker threads per window for the compressed model.
        #[arg(long)]
        p: Option<usize>,
    },
    /// Time per record and quality for several worker counts.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Worker counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        ps: Vec<usize>,
    },
    /// Generate a planted synthetic stream with a ready config.
    Synth {
        #[arg(long, default_value_t = 8)]
        groups: usize,
        #[arg(long, default_value_t = 2)]
        attributes: usize,
        #[arg(long, default_value_t = 200)]
        units_per_attr: usize,
        /// Probability that a unit is drawn uniformly instead of from the record's group.
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, default_value_t = 50_000)]
        records: usize,
        /// Mean seconds between records.
        #[arg(long, default_value_t = 60.0)]
        mean_gap: f64,
        /// Zipf exponent of the group sizes.
        #[arg(long, default_value_t = 0.0)]
        group_skew: f64,
        /// Zipf exponent of unit popularity within a group.
        #[arg(long, default_value_t = 0.0)]
        popularity_skew: f64,
        /// Windows the generated config cuts the stream into.
        #[arg(long, default_value_t = 20)]
        windows: i64,
        #[arg(long, env = "COMPSTREAM_SEED")]
        seed: u64,
        /// Directory for the stream, categories and config.
        #[arg(long, env = "COMPSTREAM_OUTPUT_DIR")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Inspect { run } => commands::inspect(&run.load(None)?),
        Command::Pretrain { run } => commands::pretrain(&run.load(None)?),
        Command::Stream {
            run,
            p,
            model,
            save,
        } => commands::stream(&run.load(p)?, model.as_deref(), save.as_deref()),
        Command::Eval { run, model, p } => commands::eval(&run.load(p)?, model),
        Command::Bench { run, ps } => commands::bench(&run.load(None)?, &ps),
        Command::Synth {
            groups,
            attributes,
            units_per_attr,
            rho,
            records,
            mean_gap,
            group_skew,
            popularity_skew,
            windows,
            seed,
            out,
        } => commands::synth(&SynthArgs {
            config: SynthConfig {
                groups,
                attributes,
                units_per_attr,
                rho,
                records,
                mean_gap_s: mean_gap,
                group_skew,
                popularity_skew,
                seed,
                ..SynthConfig::default()
            },
            out,
            n_windows: windows,
        }),
    }
}

fn error_line(kind: &str, err: &anyhow::Error) -> String {
    let causes: Vec<String> = err.chain().skip(1).map(ToString::to_string).collect();
    serde_json::json!({"error": kind, "message": err.to_string(), "causes": causes}).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                error_line(
                    "usage",
                    &anyhow::Error::msg(e.to_string().trim().to_owned())
                )
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line("failed", &e));
            ExitCode::FAILURE
        }
    }
}
