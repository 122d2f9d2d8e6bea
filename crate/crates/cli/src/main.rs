//! `imle-complete`: dataset generation, training, completion and evaluation.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::parse_override;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "imle-complete",
    version,
    about = "Multimodal point-cloud completion with conditional IMLE"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (does not change results).
    #[arg(long, global = true, env = "IMLE_COMPLETE_THREADS")]
    threads: Option<usize>,
    /// Config override, e.g. `--set imle.m=5`; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset.
    GenData,
    /// Train the autoencoder with EMD reconstruction.
    TrainAe(TrainArgs),
    /// Train the generator with conditional IMLE against a frozen autoencoder.
    TrainImle(TrainArgs),
    /// Train the deterministic single-output baseline generator.
    TrainBaseline(TrainArgs),
    /// Complete a partial cloud with several samples.
    Complete(CompleteArgs),
    /// Evaluate a generator on the test split of a dataset.
    Eval(EvalArgs),
    /// Tabulate aggregates of several eval reports side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (`paths.data`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Autoencoder checkpoint (`paths.ae_checkpoint`); generator stages only.
    #[arg(long)]
    ae: Option<PathBuf>,
    /// Checkpoint to continue training from (`paths.resume`).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompleteArgs {
    /// Partial cloud in .pcd format (`paths.input`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    ae: Option<PathBuf>,
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Number of completions (`complete.m`).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    ae: Option<PathBuf>,
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Samples per test entry (`eval.m`).
    #[arg(long)]
    m: Option<usize>,
    /// Input jitter std (`eval.sigma`).
    #[arg(long)]
    sigma: Option<f64>,
    /// Also write completions.svg (`eval.svg`).
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Report files as `NAME=report.json` or just a path (named by its directory).
    #[arg(required = true, num_args = 2..)]
    reports: Vec<String>,
}

fn path_value(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.display().to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let mut overrides = g
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = g.seed {
        let seed = i64::try_from(seed)
            .map_err(|_| CliError::Usage("--seed must fit in a signed 64-bit integer".into()))?;
        overrides.push(("seed".into(), toml::Value::Integer(seed)));
    }
    let mut path = |key: &str, p: &Option<PathBuf>| {
        if let Some(p) = p {
            overrides.push((format!("paths.{key}"), path_value(p)));
        }
    };
    match &cli.command {
        Command::TrainAe(a) | Command::TrainImle(a) | Command::TrainBaseline(a) => {
            path("data", &a.data);
            path("ae_checkpoint", &a.ae);
            path("resume", &a.resume);
        }
        Command::Complete(a) => {
            path("input", &a.input);
            path("ae_checkpoint", &a.ae);
            path("generator_checkpoint", &a.generator);
        }
        Command::Eval(a) => {
            path("data", &a.data);
            path("ae_checkpoint", &a.ae);
            path("generator_checkpoint", &a.generator);
        }
        Command::GenData | Command::Compare(_) => {}
    }
    match &cli.command {
        Command::Complete(a) => {
            if let Some(m) = a.m {
                overrides.push(("complete.m".into(), toml::Value::Integer(m as i64)));
            }
        }
        Command::Eval(a) => {
            if let Some(m) = a.m {
                overrides.push(("eval.m".into(), toml::Value::Integer(m as i64)));
            }
            if let Some(s) = a.sigma {
                overrides.push(("eval.sigma".into(), toml::Value::Float(s)));
            }
            if a.svg {
                overrides.push(("eval.svg".into(), toml::Value::Boolean(true)));
            }
        }
        _ => {}
    }
    let config = config::resolve(g.config.as_deref(), &overrides)?;

    if let Some(threads) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let ctx = commands::Context {
        config,
        out: g.out,
        force: g.force,
    };
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::TrainAe(_) => commands::train_ae(&ctx),
        Command::TrainImle(_) => commands::train_generator(&ctx, commands::Stage::Imle),
        Command::TrainBaseline(_) => commands::train_generator(&ctx, commands::Stage::Baseline),
        Command::Complete(_) => commands::complete(&ctx),
        Command::Eval(_) => commands::eval(&ctx),
        Command::Compare(a) => commands::compare(&ctx, &a.reports),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
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
