use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use imime_core::config::{ConfigError, Mode};
use imime_core::harness::HarnessError;

mod analyze;
mod plot;
mod run;

#[derive(Parser)]
#[command(name = "imime", about = "Interactive mime simulation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded episode and write logs, dumps and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        dump_frames: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the configured viewer profile exactly and print the policy.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the vision pipeline over stored PGM frames.
    Analyze {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learning curve from a run log, as PNG or CSV by extension.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// 2 for anything traced back to configuration, 3 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.is::<ConfigError>() || matches!(e.downcast_ref::<HarnessError>(), Some(HarnessError::Config(_)))
    });
    if config {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            steps,
            mode,
            dump_frames,
            out,
        } => run::run(run::Overrides {
            config,
            seed,
            steps,
            mode,
            dump_frames,
            out,
        }),
        Command::Oracle { config } => run::oracle(&config),
        Command::Analyze { frames, config, out } => analyze::analyze(&frames, &config, out.as_deref()),
        Command::Plot { log, out } => plot::plot(&log, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
