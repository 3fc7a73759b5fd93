//! Command-line entry point.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, LineWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{load_config, Config, ConfigError};
use crate::protocol::{format_log_line, SERIAL_BAUD};
use crate::server::{self, FrameSource, StartError};
use crate::simulate::{generate_tracks, read_log, record, replay_schedule, ScenarioFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tangible-bridge",
    version,
    about = "Streams a seasonal scene driven by temperature, humidity and flame sensors"
)]
pub struct Cli {
    /// JSON config file; missing keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the bridge and serve the scene stream.
    Bridge {
        #[command(flatten)]
        input: Input,
        /// Simulated seconds per wall second for `--simulate`.
        #[arg(long, default_value_t = 1.0, requires = "simulate")]
        speed: f64,
    },
    /// Write sensor frames to a timestamped log.
    Record {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        input: Input,
        /// Stop after this many serial lines.
        #[arg(long, requires = "serial")]
        count: Option<usize>,
    },
    /// Serve a recorded log, then print the season transitions as JSON lines.
    Replay {
        #[arg(long, value_name = "FILE")]
        log: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Validate a config file.
    CheckConfig { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct Input {
    /// Serial device, or `-` for standard input.
    #[arg(long, value_name = "PATH", conflicts_with = "simulate")]
    pub serial: Option<String>,
    #[arg(long, default_value_t = SERIAL_BAUD)]
    pub baud: u32,
    /// Scenario file driving the simulator.
    #[arg(long, value_name = "FILE")]
    pub simulate: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Start(#[from] StartError),
    #[error("{0}")]
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Config(_) | Failure::Input(_) => EXIT_CONFIG,
            Failure::Start(StartError::BadSpeed(_)) => EXIT_USAGE,
            Failure::Start(_) | Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn io_failure<'a>(what: &'a str, path: &'a Path) -> impl FnOnce(io::Error) -> Failure + 'a {
    move |e| Failure::Runtime(format!("{what} {}: {e}", path.display()))
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    init_tracing();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(io::stderr).try_init();
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Command::CheckConfig { file } = &cli.command {
        load_config(file)?;
        println!("{}: ok", file.display());
        return Ok(());
    }
    let config = match &cli.config {
        Some(path) => load_config(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Bridge { input, speed } => {
            let source = match (&input.serial, &input.simulate) {
                (Some(port), _) => FrameSource::Lines(open_serial(port, input.baud)?),
                (None, Some(scenario)) => FrameSource::Scheduled(load_scenario(scenario, config.seed)?),
                (None, None) => FrameSource::None,
            };
            runtime()?.block_on(async {
                let handle = server::start(config, source, speed).await?;
                announce(&handle);
                handle.run_until_ctrl_c().await.map_err(|e| Failure::Runtime(e.to_string()))
            })
        }
        Command::Record { out, input, count } => {
            let create = |out: &Path| File::create(out).map_err(io_failure("cannot create", out));
            match (&input.serial, &input.simulate) {
                (None, Some(scenario)) => {
                    let frames = load_scenario(scenario, config.seed)?;
                    let sink = BufWriter::new(create(&out)?);
                    let written = record(&frames, sink).map_err(|e| Failure::Runtime(e.to_string()))?;
                    eprintln!("recorded {written} frames to {}", out.display());
                    Ok(())
                }
                (Some(port), None) => {
                    let reader = open_serial(port, input.baud)?;
                    record_serial(reader, LineWriter::new(create(&out)?), count)
                }
                _ => Err(Failure::Usage("record needs --simulate or --serial".into())),
            }
        }
        Command::Replay { log, speed } => {
            let file = File::open(&log).map_err(io_failure("cannot open", &log))?;
            let contents = read_log(BufReader::new(file)).map_err(io_failure("cannot read", &log))?;
            let schedule = replay_schedule(&contents.records);
            let skipped = contents.skipped + schedule.skipped;
            if skipped > 0 {
                tracing::warn!(skipped, "log lines skipped");
            }
            runtime()?.block_on(async {
                let handle = server::start(config, FrameSource::Scheduled(schedule.frames), speed).await?;
                announce(&handle);
                handle.wait_settled().await;
                let mut stdout = io::stdout().lock();
                for event in handle.transitions() {
                    writeln!(stdout, "{}", event.to_json()).map_err(|e| Failure::Runtime(e.to_string()))?;
                }
                drop(stdout);
                handle.shutdown().await;
                Ok(())
            })
        }
        Command::CheckConfig { .. } => unreachable!("handled above"),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(format!("cannot start runtime: {e}")))
}

fn announce(handle: &server::BridgeHandle) {
    println!("listening on http://{}", handle.local_addr());
    let _ = io::stdout().flush();
}

fn load_scenario(path: &Path, seed: u64) -> Result<Vec<crate::protocol::SensorFrame>, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let scenario: ScenarioFile =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("scenario {}: {e}", path.display())))?;
    generate_tracks(scenario.tracks(), seed).map_err(|e| Failure::Input(format!("scenario {}: {e}", path.display())))
}

fn open_serial(port: &str, baud: u32) -> Result<Box<dyn io::BufRead + Send>, Failure> {
    if port == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let port = serialport::new(port, baud)
        .data_bits(serialport::DataBits::Eight)
        .timeout(Duration::from_millis(500))
        .open()
        .map_err(|e| Failure::Runtime(format!("cannot open serial port {port}: {e}")))?;
    Ok(Box::new(BufReader::new(port)))
}

fn record_serial(
    mut input: Box<dyn io::BufRead + Send>,
    mut out: impl Write,
    count: Option<usize>,
) -> Result<(), Failure> {
    let started = Instant::now();
    let mut line = Vec::new();
    let mut written = 0;
    while count.is_none_or(|n| written < n) {
        match input.read_until(b'\n', &mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::Interrupted) => continue,
            Err(e) => return Err(Failure::Runtime(format!("serial read failed: {e}"))),
        }
        let text = String::from_utf8_lossy(&line);
        let text = text.trim_end_matches(['\r', '\n']);
        if !text.is_empty() {
            let ms = started.elapsed().as_millis() as u64;
            out.write_all(format_log_line(ms, text).as_bytes()).map_err(|e| Failure::Runtime(e.to_string()))?;
            written += 1;
        }
        line.clear();
    }
    out.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
    eprintln!("recorded {written} lines");
    Ok(())
}
