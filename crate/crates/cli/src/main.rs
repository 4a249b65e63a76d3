use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use vortexkam_cli::commands::EXIT_INVALID;
use vortexkam_cli::{parse_config, run, Command, RunOptions};

/// Spectral numerics for quasi-periodic traveling water waves with constant vorticity.
#[derive(Parser)]
#[command(name = "vortexkam", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "VORTEXKAM_THREADS")]
    threads: Option<usize>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match run(
        cli.command,
        &cfg,
        &cli.out,
        &RunOptions {
            threads: cli.threads,
        },
    ) {
        Ok(summary) => {
            for d in &summary.divergences {
                eprintln!("divergence: {d}");
            }
            for f in &summary.manifest.files {
                println!("{}  {}", f.sha256, cli.out.join(&f.path).display());
            }
            ExitCode::from(summary.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
