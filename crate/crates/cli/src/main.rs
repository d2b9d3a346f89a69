//! `wavecrush` command-line tool.
//!
//! Exit codes: 0 success, 1 anomalies found (`detect` only), 2 invalid
//! input or arguments, 3 I/O failure.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wavecrush::attacks::{craft, AttackKind};
use wavecrush::codec::{decode_capture, read_capture, write_capture, CommandTable, Frame, HomeId, NodeId};
use wavecrush::detection::{format_report, heartbeat_monitor, scan_frames, sort_events, ScanParams};
use wavecrush::scenario::Scenario;
use wavecrush::sim;

const CONSTANTS_ENV: &str = "WAVECRUSH_CONSTANTS";

#[derive(Parser)]
#[command(name = "wavecrush", version, about = "Z-Wave gateway DoS simulator, frame codec and detector")]
#[command(after_help = "Set WAVECRUSH_CONSTANTS to a key = value file to override command IDs.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its capture and metrics.
    Simulate(SimulateArgs),
    /// Print one line per frame of a capture file.
    Decode(DecodeArgs),
    /// Scan a capture for attack indicators. Exits 1 if any are found.
    Detect(DetectArgs),
    /// Write forged attack frames to a capture file.
    Craft(CraftArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config file.
    config: PathBuf,
    /// Capture output path.
    #[arg(short, long)]
    capture: Option<PathBuf>,
    /// Metrics output path. The report is always printed to stdout.
    #[arg(short, long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Capture file (`<t_us> <hex>` per line).
    capture: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Capture file (`<t_us> <hex>` per line).
    capture: PathBuf,
    /// Node id of the gateway.
    #[arg(long, default_value_t = 1)]
    gateway_id: u8,
    /// Expected gateway heartbeat period; enables the outage monitor.
    #[arg(long, value_name = "MS")]
    heartbeat_interval: Option<u64>,
    /// Missed heartbeats that count as an outage.
    #[arg(long, default_value_t = 3)]
    miss_threshold: u32,
    /// Comma-separated node ids of the network; enables the unknown-source rule.
    #[arg(long, value_delimiter = ',')]
    known: Option<Vec<u8>>,
    /// Nonce requests per window above which a storm is reported.
    #[arg(long, default_value_t = 10)]
    nonce_rate: usize,
    /// Nonce storm window.
    #[arg(long, value_name = "MS", default_value_t = 5_000)]
    window_ms: u64,
}

#[derive(Args)]
struct CraftArgs {
    /// noncense-s0, noncense-s2 or power-of-nope.
    kind: AttackKind,
    /// Target HomeID in hex.
    #[arg(long, value_parser = parse_home)]
    home: HomeId,
    /// Number of frames.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    count: u32,
    /// Timestamp spacing; defaults to the attack's usual interval.
    #[arg(long, value_name = "MS")]
    interval_ms: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_home(text: &str) -> Result<HomeId, String> {
    HomeId::parse_hex(text).ok_or_else(|| format!("`{text}` is not a hex HomeID (1-8 digits)"))
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: 3,
            message: format!("{}: {err}", path.display()),
        }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn command_table() -> Result<CommandTable, Failure> {
    let Some(path) = std::env::var_os(CONSTANTS_ENV) else {
        return Ok(CommandTable::default());
    };
    let path = PathBuf::from(path);
    CommandTable::parse(&read(&path)?)
        .map_err(|e| Failure::invalid(format!("{CONSTANTS_ENV}={}: {e}", path.display())))
}

fn simulate(args: SimulateArgs) -> Outcome {
    let text = read(&args.config)?;
    let scenario =
        Scenario::parse(&text).map_err(|e| Failure::invalid(format!("{}: {e}", args.config.display())))?;
    let table = command_table()?;
    let output = sim::run(&scenario).map_err(|e| Failure::invalid(e.to_string()))?;
    let report = output.metrics.report();
    if let Some(path) = &args.capture {
        let capture = output
            .capture_text(&table)
            .map_err(|e| Failure::invalid(format!("cannot encode capture: {e}")))?;
        write(path, &capture)?;
    }
    if let Some(path) = &args.metrics {
        write(path, &report)?;
    }
    print!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn describe(frame: &Frame, table: &CommandTable) -> String {
    let mut line = format!("{} {}->{}", frame.home_id, frame.src, frame.dst);
    if let Some(route) = &frame.route {
        let hops: Vec<String> = route.repeaters.iter().map(ToString::to_string).collect();
        write!(line, " via={}", hops.join(",")).expect("writing to a String");
    }
    let payload = frame.command.serialize_with(table);
    write!(line, " {} payload={}", frame.command, to_hex(&payload)).expect("writing to a String");
    line
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect()
}

fn decode(args: DecodeArgs) -> Outcome {
    let text = read(&args.capture)?;
    let table = command_table()?;
    let mut decoded = 0;
    for result in decode_capture(&text, &table) {
        match result {
            Ok(record) => {
                decoded += 1;
                println!("{} {}", record.t_us, describe(&record.frame, &table));
            }
            Err(err) => println!("error {err}"),
        }
    }
    if decoded == 0 {
        return Err(Failure::invalid(format!("{}: no decodable frames", args.capture.display())));
    }
    Ok(ExitCode::SUCCESS)
}

fn detect(args: DetectArgs) -> Outcome {
    let text = read(&args.capture)?;
    let table = command_table()?;
    let lines = read_capture(&text).len();
    let mut capture = Vec::new();
    for result in decode_capture(&text, &table) {
        match result {
            Ok(record) => capture.push(record),
            Err(err) => eprintln!("skipping {err}"),
        }
    }
    if lines > 0 && capture.is_empty() {
        return Err(Failure::invalid(format!("{}: no decodable frames", args.capture.display())));
    }
    capture.sort_by_key(|r| r.t_us);

    let gateway = NodeId(args.gateway_id);
    let params = ScanParams {
        gateway,
        nonce_rate: args.nonce_rate,
        window_ms: args.window_ms,
    };
    let known: Option<BTreeSet<NodeId>> = args.known.map(|ids| ids.into_iter().map(NodeId).collect());
    let mut events = scan_frames(&capture, known.as_ref(), &params);
    if let Some(interval) = args.heartbeat_interval {
        let lost = heartbeat_monitor(&capture, gateway, interval, args.miss_threshold)
            .map_err(|e| Failure::invalid(e.to_string()))?;
        events.extend(lost);
    }
    sort_events(&mut events);
    print!("{}", format_report(&events));
    Ok(if events.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn craft_cmd(args: CraftArgs) -> Outcome {
    let table = command_table()?;
    let interval = args.interval_ms.unwrap_or(args.kind.default_interval_ms());
    let records = craft(args.kind, args.home, args.count, interval);
    let text = write_capture(&records, &table).map_err(|e| Failure::invalid(e.to_string()))?;
    match &args.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Decode(args) => decode(args),
        Command::Detect(args) => detect(args),
        Command::Craft(args) => craft_cmd(args),
    };
    outcome.unwrap_or_else(|failure| {
        eprintln!("wavecrush: {}", failure.message);
        ExitCode::from(failure.code)
    })
}
