use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quatnet_cli::commands::{self, Split};
use quatnet_cli::{threads_from_env, CliError, CliResult, Precision, RunConfig};

/// Train and examine quaternion convolutional networks.
///
/// Exit codes: 0 success, 1 i/o, 2 config, 3 dataset, 4 numeric failure,
/// 5 gradient check breach, 6 checkpoint missing or mismatched,
/// 7 corrupt checkpoint.
#[derive(Parser)]
#[command(name = "quatnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the config's precision.
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Output directory; replaces the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics.csv, timing.csv, run_meta.txt and checkpoint.qnck.
    Train(RunArgs),
    /// Evaluate a checkpoint on the train or val split of the config.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to checkpoint.qnck in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
    },
    /// Compare analytic and finite-difference gradients in double precision.
    Gradcheck(RunArgs),
    /// Summarize a checkpoint: parameter counts and magnitude histograms.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write params.csv and histograms.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic four-class pattern dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        samples: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
    },
}

fn load(run: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&run.config, run.seed)?;
    if let Some(p) = run.precision {
        cfg.precision = match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    if let Some(o) = &run.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = threads_from_env()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let text = match cli.command {
        Command::Train(r) => commands::train(&load(&r)?)?,
        Command::Eval { run, checkpoint, split } => {
            let cfg = load(&run)?;
            let path = checkpoint
                .or_else(|| commands::default_checkpoint(&cfg))
                .ok_or_else(|| CliError::Checkpoint("no checkpoint given".into()))?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
            };
            commands::eval(&cfg, &path, split)?
        }
        Command::Gradcheck(r) => {
            let (text, report) = commands::gradcheck(&load(&r)?)?;
            print!("{text}");
            if !report.passed() {
                return Err(CliError::GradCheck(format!(
                    "max relative error {:e} at {}",
                    report.max_rel_error,
                    report.worst.as_deref().unwrap_or("-")
                )));
            }
            return Ok(());
        }
        Command::Inspect { checkpoint, out } => commands::inspect(&checkpoint, out.as_deref())?,
        Command::Synth {
            out,
            seed,
            samples,
            noise,
        } => commands::synth(&out, seed, samples, noise)?,
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
