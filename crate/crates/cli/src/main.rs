use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semimart_cli::{cmd_check, cmd_decompose, cmd_simulate, decompose_json, read_config, report_json, rerun_manifest, CliError};

#[derive(Parser)]
#[command(name = "semimart", version, about = "Semimartingale checks and series simulation for infinitely divisible moving averages")]
struct Cli {
    /// TOML configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides output.directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the integral criteria and print the verdict report as JSON.
    Check,
    /// Simulate paths of X, M and A.
    Simulate {
        #[arg(long, default_value_t = 1)]
        paths: usize,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Rerun from a previous manifest.json instead of --config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Simulate one path and report the decomposition residuals.
    Decompose,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Simulate { manifest: Some(m), jobs, .. } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        rerun_manifest(m, *jobs, &out)?;
        eprintln!("reproduced {} into {}", m.display(), out.display());
        return Ok(());
    }
    let Some(path) = &cli.config else {
        return Err(CliError::Config(semimart_cli::ConfigError { line: None, message: "--config <file> is required".into() }));
    };
    let cfg = read_config(path)?;
    let seed = cli.seed.unwrap_or(cfg.raw.seed);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.raw.output.directory));
    match cli.command {
        Command::Check => {
            let report = cmd_check(&cfg)?;
            let json = report_json(&report);
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
                let p = dir.join("check.json");
                std::fs::write(&p, &json).map_err(|source| CliError::Io { path: p, source })?;
            }
            print!("{json}");
        }
        Command::Simulate { paths, jobs, .. } => {
            let m = cmd_simulate(&cfg, seed, paths, jobs, &out)?;
            eprintln!("wrote {} path(s) to {}", m.paths, out.display());
        }
        Command::Decompose => {
            let (report, _) = cmd_decompose(&cfg, seed, &out)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", decompose_json(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semimart: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
