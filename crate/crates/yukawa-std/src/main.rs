use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use yukawa::{commands, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "yukawa", version, about = "Regularised Yukawa₂ experiments")]
struct Cli {
    /// JSON (`.json`) or TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces the configured seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// CAR, Wick, seminorm, Araki–Wyss and projection suites.
    AlgebraVerify,
    /// Kernel exponents, power counting and mollification rate.
    Kernels,
    /// Counterterms, renormalisation ablation and `<2AF>` Cauchy table.
    Trees,
    /// Local solve of the remainder system.
    Solve,
    /// ε-sweep over seeds with successive trajectory distances.
    Converge,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let manifest = match cli.command {
        Command::AlgebraVerify => commands::algebra_verify(&cfg, &out)?.0,
        Command::Kernels => commands::kernels(&cfg, &out)?,
        Command::Trees => commands::trees(&cfg, &out)?,
        Command::Solve => commands::solve(&cfg, &out)?,
        Command::Converge => commands::converge(&cfg, &out)?,
    };
    for a in &manifest.artefacts {
        println!("{}  {}", a.sha256, out.join(&a.path).display());
    }
    for n in &manifest.notes {
        println!("note: {n}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(&e)
        }
    }
}
