use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;
use telequest::{ClockMode, ServeOptions};
use telequest_core::config::{load_config, ConfigOverrides, ModePreset};

/// Bi-manual teleoperation relay.
#[derive(Parser)]
#[command(name = "telequest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the relay daemon.
    Serve(ServeArgs),
    /// Print the effective configuration as JSON and exit.
    PrintConfig(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; unspecified fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tcp_port: Option<u16>,
    #[arg(long)]
    ws_port: Option<u16>,
    /// side-by-side, mirror or mirror-facing.
    #[arg(long)]
    mode: Option<ModePreset>,
    #[arg(long)]
    gain: Option<f64>,
    /// Control loop rate, Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Watchdog timeout, seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// error, warn, info, debug or trace. RUST_LOG takes precedence.
    #[arg(long, default_value = "info")]
    log_level: log::LevelFilter,
    /// Directory of static files served on the WebSocket port.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Clock::Wall)]
    clock: Clock,
    #[arg(long, default_value = "0.0.0.0")]
    bind: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    /// Real time.
    Wall,
    /// Message stamps drive time; for deterministic replays.
    Virtual,
}

impl ConfigArgs {
    fn load(&self) -> Result<telequest_core::SessionConfig, String> {
        let overrides = ConfigOverrides {
            mode: self.mode,
            gain: self.gain,
            tcp_port: self.tcp_port,
            ws_port: self.ws_port,
            loop_rate: self.rate,
            watchdog_timeout: self.timeout,
        };
        load_config(self.config.as_deref(), &overrides).map_err(|e| e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::PrintConfig(args) => match args.load() {
            Ok(config) => {
                println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("telequest: {e}");
                ExitCode::from(2)
            }
        },
        Command::Serve(args) => {
            env_logger::Builder::new()
                .filter_level(args.log_level)
                .parse_default_env()
                .init();
            let config = match args.config.load() {
                Ok(c) => c,
                Err(e) => {
                    error!("{e}");
                    return ExitCode::from(2);
                }
            };
            let opts = ServeOptions {
                config,
                clock: match args.clock {
                    Clock::Wall => ClockMode::Wall,
                    Clock::Virtual => ClockMode::Virtual,
                },
                ui_dir: args.ui_dir,
                bind_host: args.bind,
            };
            match telequest::spawn(opts) {
                Ok(daemon) => {
                    daemon.wait();
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    error!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
