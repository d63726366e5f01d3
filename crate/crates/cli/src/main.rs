use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use texcal_cli::{cmd_all, cmd_calibrate, cmd_gen, cmd_report, cmd_sweep, cmd_train, CliResult, Context};
use texcal_core::augment::Variant;
use texcal_core::io::{load_config, ExperimentConfig};
use texcal_core::metrics::BinningConfig;
use texcal_core::Exec;

/// Confidence calibration experiment on synthetic pit-pattern textures.
#[derive(Parser)]
#[command(name = "texcal", version)]
struct Cli {
    /// TOML config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `root_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out_dir` from the config, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite an existing dataset.
    #[arg(long, global = true)]
    force: bool,
    /// Overrides the reliability bin count `binning.m`.
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Run on the current thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct VariantArg {
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    /// Apply the fitted temperature.
    #[arg(long)]
    calibrated: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render the dataset, split it and write the perturbed test groups.
    Gen,
    /// Cross-validated training of one variant.
    Train(VariantArg),
    /// Fit the temperature on the holdout logits.
    Calibrate(VariantArg),
    /// Metrics and reliability diagram on the expanded test set.
    Report(EvalArgs),
    /// Accuracy and confidence under increasing blur and noise.
    Sweep(EvalArgs),
    /// The full pipeline for every configured variant.
    All,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: texcal_core::Error| e.to_string())
}

fn context(cli: &Cli) -> CliResult<Context> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.root_seed = seed;
    }
    if let Some(m) = cli.bins {
        cfg.binning = BinningConfig::new(m)?;
    }
    let out = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    Context::new(cfg, out, exec, cli.force)
}

fn run(cli: &Cli) -> CliResult<()> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Gen => cmd_gen(&ctx).map(drop),
        Command::Train(a) => cmd_train(&ctx, a.variant).map(drop),
        Command::Calibrate(a) => cmd_calibrate(&ctx, a.variant).map(drop),
        Command::Report(a) => cmd_report(&ctx, a.variant, a.calibrated).map(drop),
        Command::Sweep(a) => cmd_sweep(&ctx, a.variant, a.calibrated).map(drop),
        Command::All => cmd_all(&ctx).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
