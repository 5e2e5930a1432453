use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use telequest::{play, PlayOptions};
use telequest_core::protocol::{encode, DEFAULT_TCP_PORT};
use telequest_core::script::{expand, parse_script, TimedMessage};

/// Scripted controller input for the telequest relay.
#[derive(Parser)]
#[command(name = "telequest-input", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a script to a running relay in real time.
    Play {
        script: PathBuf,
        #[arg(long, default_value_t = format!("127.0.0.1:{DEFAULT_TCP_PORT}"))]
        endpoint: String,
        /// Playback speed multiplier.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Write every line received from the relay to this file.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Print the expanded message stream as NDJSON.
    Expand { script: PathBuf },
}

fn load(path: &Path) -> Result<Vec<TimedMessage>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let script = parse_script(&text).map_err(|e| e.to_string())?;
    expand(&script).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Expand { script } => {
            let mut out = std::io::stdout().lock();
            for m in load(&script)? {
                out.write_all(encode(&m.message).as_bytes()).map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Command::Play {
            script,
            endpoint,
            speed,
            record,
        } => {
            let messages = load(&script)?;
            let opts = PlayOptions {
                endpoint,
                speed,
                ..PlayOptions::default()
            };
            let report = play(&messages, &opts).map_err(|e| e.to_string())?;
            eprintln!(
                "sent {} messages, received {} lines",
                report.send_offsets.len(),
                report.received.len()
            );
            if let Some(path) = record {
                fs::write(&path, report.received.concat())
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("telequest-input: {e}");
            ExitCode::FAILURE
        }
    }
}
