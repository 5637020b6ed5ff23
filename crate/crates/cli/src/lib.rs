//! Command-line front end: `complyscan <subcommand>`.
//!
//! Settings resolve as flags, then environment (`COMPLYSCAN_STORE`,
//! `COMPLYSCAN_MAC`, `COMPLYSCAN_CONFIG`), then the TOML config file, then
//! built-in defaults.

mod config;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use complyscan_core::discovery::WalkLimits;
use complyscan_core::ledger::{FileQuery, Ledger, SqliteLedger};
use complyscan_core::scanner::{run_scan, ScanOptions};
use complyscan_core::{Error, ExecMode, FileFormat, FileRecord, FileStatus, MachineConfig, MachineId, Timestamp};
use serde::Serialize;

pub use config::{ConfigFile, Settings, DEFAULT_ADDR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "complyscan",
    version,
    about = "Find, fingerprint and track sensitive medical-imaging files"
)]
struct Cli {
    /// Ledger database file.
    #[arg(long, global = true, value_name = "PATH")]
    store: Option<PathBuf>,

    /// TOML config file with `store`, `mac` and `addr` keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create the scan configuration for a user on a machine.
    Register(RegisterArgs),
    /// Change an existing scan configuration.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Scan the configured roots and commit the results.
    Run(RunArgs),
    /// Query the file ledger.
    Report(ReportArgs),
    /// Recompute staleness and list machines.
    Stale(JsonFlag),
    /// Serve the review API (and dashboard) over HTTP.
    Serve(ServeArgs),
    /// Check the ledger's version-history invariants.
    Audit(JsonFlag),
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[arg(long)]
    user: String,
    /// MAC address, or `auto` to read it from the first network interface.
    #[arg(long)]
    mac: Option<String>,
    /// Absolute scan root; repeat for several.
    #[arg(long = "path", required = true, value_name = "DIR")]
    paths: Vec<PathBuf>,
    /// dicom or nifti; repeat for both.
    #[arg(long = "format", required = true, value_name = "FORMAT")]
    formats: Vec<String>,
    /// Seconds between expected scans.
    #[arg(long, value_name = "SECONDS")]
    frequency: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum ConfigAction {
    /// Replace any of the paths, formats or frequency.
    Set(ConfigSetArgs),
}

#[derive(Debug, Args)]
struct ConfigSetArgs {
    #[arg(long)]
    user: String,
    #[arg(long)]
    mac: Option<String>,
    #[arg(long = "path", value_name = "DIR")]
    paths: Vec<PathBuf>,
    #[arg(long = "format", value_name = "FORMAT")]
    formats: Vec<String>,
    #[arg(long, value_name = "SECONDS")]
    frequency: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    user: String,
    #[arg(long)]
    mac: Option<String>,
    #[arg(long)]
    json: bool,
    /// Archive nesting levels to open.
    #[arg(long, value_name = "N")]
    max_archive_depth: Option<usize>,
    /// Skip files and archive members larger than this.
    #[arg(long, value_name = "BYTES")]
    max_file_bytes: Option<u64>,
    /// Disable data-parallel hashing.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    mac: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    status: Option<String>,
    #[arg(long, value_name = "TIME")]
    scanned_after: Option<String>,
    #[arg(long, value_name = "TIME")]
    scanned_before: Option<String>,
    #[arg(long)]
    version: Option<u32>,
    /// Show every version of one logical path (uses --mac or the local machine).
    #[arg(long, value_name = "PATH")]
    history: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct JsonFlag {
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, value_name = "HOST:PORT")]
    addr: Option<SocketAddr>,
    /// Built dashboard assets to host at `/`.
    #[arg(long, value_name = "DIR")]
    ui_dir: Option<PathBuf>,
}

/// Failure carried to the exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Store(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_user_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Store(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Store(e.to_string())
    }
}

struct Ctx<'a> {
    settings: Settings,
    out: &'a mut dyn Write,
}

/// Runs one command line. `env` looks up environment variables.
pub fn run<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };

    let settings = match Settings::resolve(cli.store.clone(), cli.config.clone(), env) {
        Ok(s) => s,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            return EXIT_USAGE;
        }
    };
    let mut ctx = Ctx { settings, out };
    match dispatch(cli.command, &mut ctx) {
        Ok(code) => code,
        Err(Failure::Usage(message)) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_USAGE
        }
        Err(Failure::Store(message)) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(command: Command, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    match command {
        Command::Register(a) => register(a, ctx),
        Command::Config {
            action: ConfigAction::Set(a),
        } => config_set(a, ctx),
        Command::Run(a) => scan(a, ctx),
        Command::Report(a) => report(a, ctx),
        Command::Stale(a) => stale(a, ctx),
        Command::Serve(a) => serve(a, ctx),
        Command::Audit(a) => audit(a, ctx),
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

fn parse_formats(raw: &[String]) -> Result<BTreeSet<FileFormat>, Failure> {
    raw.iter()
        .flat_map(|s| s.split(','))
        .map(|s| {
            s.trim()
                .parse::<FileFormat>()
                .map_err(|e| usage(format!("--format: {e}")))
        })
        .collect()
}

fn parse_time(flag: &str, raw: Option<String>) -> Result<Option<Timestamp>, Failure> {
    raw.map(|s| s.parse().map_err(|e| usage(format!("{flag}: {e}"))))
        .transpose()
}

fn open_store(ctx: &Ctx<'_>) -> Result<SqliteLedger, Failure> {
    Ok(SqliteLedger::open(&ctx.settings.store)?)
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Failure::Store(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn print_machine(out: &mut dyn Write, m: &MachineConfig) -> std::io::Result<()> {
    let formats: Vec<&str> = m.formats.iter().map(|f| f.as_str()).collect();
    let paths: Vec<String> = m.paths.iter().map(|p| p.display().to_string()).collect();
    let last = m.last_scanned.map(|t| t.to_string()).unwrap_or_else(|| "never".into());
    writeln!(
        out,
        "{}\t{}\t{}\tevery {}s\tlast scan {}\t{}\t{}",
        m.username,
        m.mac,
        if m.stale { "STALE" } else { "fresh" },
        m.scan_frequency,
        last,
        formats.join(","),
        paths.join(":")
    )
}

fn register(a: RegisterArgs, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    let mac = ctx.settings.machine(a.mac.as_deref())?;
    let formats = parse_formats(&a.formats)?;
    let mut ledger = open_store(ctx)?;
    if ledger.machine_config(&a.user, &mac)?.is_some() {
        return Err(usage(format!(
            "{} is already registered on {mac}; use `complyscan config set` to change it",
            a.user
        )));
    }
    let row = ledger.upsert_machine_config(&a.user, &mac, &a.paths, &formats, a.frequency)?;
    if a.json {
        emit_json(ctx.out, &row)?;
    } else {
        writeln!(ctx.out, "registered {} on machine {}", row.username, row.mac)?;
    }
    Ok(EXIT_OK)
}

fn config_set(a: ConfigSetArgs, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    let mac = ctx.settings.machine(a.mac.as_deref())?;
    let mut ledger = open_store(ctx)?;
    let current = ledger
        .machine_config(&a.user, &mac)?
        .ok_or_else(|| Error::Unregistered {
            username: a.user.clone(),
            mac: mac.to_string(),
        })?;
    let paths = if a.paths.is_empty() { current.paths } else { a.paths };
    let formats = if a.formats.is_empty() {
        current.formats
    } else {
        parse_formats(&a.formats)?
    };
    let frequency = a.frequency.unwrap_or(current.scan_frequency);
    let row = ledger.upsert_machine_config(&a.user, &mac, &paths, &formats, frequency)?;
    if a.json {
        emit_json(ctx.out, &row)?;
    } else {
        print_machine(ctx.out, &row)?;
    }
    Ok(EXIT_OK)
}

fn scan(a: RunArgs, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    let mac = ctx.settings.machine(a.mac.as_deref())?;
    let mut ledger = open_store(ctx)?;
    let options = ScanOptions {
        limits: WalkLimits {
            max_archive_depth: a
                .max_archive_depth
                .unwrap_or(complyscan_core::discovery::DEFAULT_MAX_ARCHIVE_DEPTH),
            max_file_bytes: a.max_file_bytes,
            ..Default::default()
        },
        exec: if a.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::default()
        },
    };
    let report = run_scan(&mut ledger, &a.user, &mac, Timestamp::now(), &options)?;
    if a.json {
        emit_json(ctx.out, &report)?;
    } else {
        let c = report.counts;
        writeln!(
            ctx.out,
            "scan of {} for {} {}",
            report.mac,
            report.username,
            if report.committed { "committed" } else { "ROLLED BACK" }
        )?;
        writeln!(
            ctx.out,
            "  new {}  modified {}  unchanged {}  deleted {}  (resurrected {})",
            c.new, c.modified, c.unchanged, c.deleted, c.resurrected
        )?;
        for (label, list) in [("error", &report.errors), ("note", &report.notes)] {
            for issue in list {
                writeln!(ctx.out, "  {label}: {}: {}", issue.path, issue.message)?;
            }
        }
    }
    Ok(if report.committed { EXIT_OK } else { EXIT_FAILURE })
}

fn report(a: ReportArgs, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    let ledger = open_store(ctx)?;
    let rows: Vec<FileRecord> = match a.history {
        Some(path) => {
            let mac = ctx.settings.machine(a.mac.as_deref())?;
            ledger.file_history(&mac, &path)?
        }
        None => {
            let filter = FileQuery {
                mac: a.mac.as_deref().map(str::parse::<MachineId>).transpose()?,
                format: a
                    .format
                    .as_deref()
                    .map(|f| f.parse().map_err(|e| usage(format!("--format: {e}"))))
                    .transpose()?,
                status: a.status.as_deref().map(str::parse::<FileStatus>).transpose()?,
                scanned_after: parse_time("--scanned-after", a.scanned_after)?,
                scanned_before: parse_time("--scanned-before", a.scanned_before)?,
                version: a.version,
            };
            ledger.query_files(&filter)?
        }
    };
    if a.json {
        emit_json(ctx.out, &rows)?;
    } else {
        for r in &rows {
            writeln!(
                ctx.out,
                "{}\tv{}\t{}\t{}\t{}\t{}\t{}",
                r.status,
                r.version,
                r.format,
                r.last_scanned,
                r.mac,
                &r.file_hash.to_hex()[..12],
                r.filepath
            )?;
        }
        writeln!(ctx.out, "{} row(s)", rows.len())?;
    }
    Ok(EXIT_OK)
}

fn stale(a: JsonFlag, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    let mut ledger = open_store(ctx)?;
    let count = ledger.recompute_staleness(Timestamp::now())?;
    let machines = ledger.list_machines()?;
    if a.json {
        emit_json(ctx.out, &machines)?;
    } else {
        for m in &machines {
            print_machine(ctx.out, m)?;
        }
        writeln!(ctx.out, "{count} of {} machine(s) stale", machines.len())?;
    }
    Ok(EXIT_OK)
}

fn serve(a: ServeArgs, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    // creates the schema so read-only request handles can open it
    drop(open_store(ctx)?);
    let addr = match a.addr {
        Some(addr) => addr,
        None => ctx.settings.addr()?,
    };
    if let Some(dir) = &a.ui_dir {
        if !dir.is_dir() {
            return Err(usage(format!("--ui-dir {} is not a directory", dir.display())));
        }
    }
    writeln!(ctx.out, "serving {} on http://{addr}", ctx.settings.store.display())?;
    ctx.out.flush()?;
    let state = complyscan_api::AppState {
        ui_dir: a.ui_dir,
        ..complyscan_api::AppState::new(&ctx.settings.store)
    };
    complyscan_api::serve_blocking(addr, state)?;
    Ok(EXIT_OK)
}

fn audit(a: JsonFlag, ctx: &mut Ctx<'_>) -> Result<i32, Failure> {
    let ledger = open_store(ctx)?;
    let violations = ledger.audit()?;
    if a.json {
        emit_json(ctx.out, &violations)?;
    } else if violations.is_empty() {
        writeln!(ctx.out, "ledger consistent")?;
    } else {
        for v in &violations {
            writeln!(ctx.out, "{}\t{}\t{}", v.mac, v.filepath, v.message)?;
        }
        writeln!(ctx.out, "{} violation(s)", violations.len())?;
    }
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_USAGE })
}
