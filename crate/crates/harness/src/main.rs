use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use espd_harness::{load_config, run, Command};

/// Runs ESPD, ES and first-hitting-time experiments described by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "espd", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds; replaces the config's `seeds`.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Output directory; replaces the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
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
    let mut cfg = match load_config(&cli.config, Some(cli.command)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seeds) = cli.seed {
        cfg.seeds = seeds;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }

    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for r in &report.records {
        let rate = r.final_success.map_or_else(|| "-".to_string(), |p| format!("{p:.3}"));
        println!(
            "{} seed={} success={rate} ({:.1}s)",
            r.variant,
            r.seed,
            r.duration.as_secs_f64()
        );
    }
    println!("summary: {}", report.summary.display());
    match report.failure {
        Some(f) => {
            eprintln!("error: {} seed {} failed: {}", f.variant, f.seed, f.message);
            if let Some(m) = report.manifest {
                eprintln!("partial results: {}", m.display());
            }
            ExitCode::from(2)
        }
        None => ExitCode::SUCCESS,
    }
}
