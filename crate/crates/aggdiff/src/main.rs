use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use aggdiff::{execute, CliError, Command, RunConfig};
use clap::Parser;

/// Numerical lab for supercritical aggregation-diffusion with porous-medium
/// diffusion and Riesz attraction.
#[derive(Parser)]
#[command(name = "aggdiff", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = RunConfig::load(&cli.config).map_err(CliError::from).and_then(|cfg| {
        let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
        execute(cli.command, &cfg, &out, &mut io::stdout().lock())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
