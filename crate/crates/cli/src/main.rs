//! `turbopinn`: generate manufactured cases, train surrogates, evaluate
//! checkpoints and run parametric sweeps.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use turbopinn::data::MmsFamily;
use turbopinn::loss::Ablation;

use crate::commands::{EvalOptions, Overrides, SynthOptions};
use crate::config::{GridSection, RunConfig};
use crate::error::CliError;

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  2  invalid arguments or configuration, or a non-empty output directory without --force
  3  file could not be read or written
  4  training stopped on a non-finite loss; artifacts from the last finite step are kept
  5  checkpoint does not match the configuration or case

Outputs go to --out when given, else to the run's `out_dir`, else to
<out-root>/<name>. The output root defaults to $TURBOPINN_OUT, or ./runs.";

#[derive(Parser)]
#[command(name = "turbopinn", version, about = "Physics-informed surrogates for steady 2D RANS k-epsilon flow", after_help = AFTER_HELP)]
struct Cli {
    /// Root directory for outputs without an explicit --out.
    #[arg(long, env = "TURBOPINN_OUT", default_value = "runs", global = true)]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write manufactured-solution point clouds and case files.
    Synth(SynthArgs),
    /// Pre-train and train on the cases of a run file.
    Train(RunArgs),
    /// Validation metrics and field grids of a checkpoint.
    Eval(EvalArgs),
    /// Parametric training over several cases, then evaluation on extra ones.
    Sweep(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Manufactured family: trig-vortex or poly-channel.
    family: MmsFamily,
    /// Parameter value, or LO..HI split by --count. Repeatable.
    #[arg(long = "s", required = true)]
    s: Vec<String>,
    /// Number of values a LO..HI range is split into.
    #[arg(long, default_value_t = 6)]
    count: usize,
    #[arg(long, default_value_t = 10_000)]
    n_cloud: usize,
    #[arg(long, default_value_t = 100)]
    n_per_boundary: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Run file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the run file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for gradient shards and calibration; 1 is the reproducibility reference.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = ["none", "data-only", "no-log-eps"])]
    ablation: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Case file (TOML). Repeatable.
    #[arg(long = "case", required = true)]
    cases: Vec<PathBuf>,
    #[arg(long, default_value_t = GridSection::default().nx)]
    nx: usize,
    #[arg(long, default_value_t = GridSection::default().ny)]
    ny: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

fn run_out(args: &RunArgs, cfg: &RunConfig, root: &std::path::Path) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| root.join(&cfg.name))
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let ablation = match &args.ablation {
        Some(a) => Some(a.parse::<Ablation>().map_err(|e| CliError::Usage(e.to_string()))?),
        None => None,
    };
    let ov = Overrides {
        seed: args.seed,
        workers: args.workers,
        ablation,
    };
    let cfg = commands::load_run(&args.config, &ov)?;
    if cfg.train.workers > cfg.train.shards {
        eprintln!(
            "note: {} workers but {} gradient shards; raise train.shards to use more threads",
            cfg.train.workers, cfg.train.shards
        );
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(&SynthOptions {
            family: a.family,
            s_values: commands::parse_s_values(&a.s, a.count)?,
            n_cloud: a.n_cloud,
            n_per_boundary: a.n_per_boundary,
            seed: a.seed,
            out: a
                .out
                .unwrap_or_else(|| cli.out_root.join(format!("synth-{}", a.family.name()))),
            force: a.force,
        }),
        Command::Train(a) => {
            let cfg = load(&a)?;
            commands::train(&a.config, &cfg, &run_out(&a, &cfg, &cli.out_root), a.force)
        }
        Command::Sweep(a) => {
            let cfg = load(&a)?;
            commands::sweep(&a.config, &cfg, &run_out(&a, &cfg, &cli.out_root), a.force)
        }
        Command::Eval(a) => commands::eval(&EvalOptions {
            checkpoint: a.checkpoint,
            case_files: a.cases,
            grid: GridSection { nx: a.nx, ny: a.ny },
            out: a.out.unwrap_or_else(|| cli.out_root.join("eval")),
            force: a.force,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
