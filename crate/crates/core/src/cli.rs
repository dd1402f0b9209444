//! Operator command line.
//!
//! ```text
//! viewmark serve    --config <server.json>
//! viewmark export   --data <dir> --out <file> [--approved-only] [--categories <file>]
//! viewmark stats    --data <dir> [--format table|json] [--include-pending] [--categories <file>]
//! viewmark validate <coco.json>
//! viewmark qc       --data <dir> --image <hash> --verdict approved|disqualified [--reason <text>] --reviewer <name>
//! ```
//!
//! Exit codes: 0 success, 1 failure (invalid file, unknown image), 2 usage or
//! configuration error, 3 storage integrity error.
//!
//! `serve` copies its category config into the data directory as
//! `categories.json`; `export` and `stats` read it from there unless
//! `--categories` is given. `export`, `stats` and `validate` only read and may
//! run next to a live server. `qc` appends to the QC log and must not run
//! while a server owns the same directory; use `POST /api/v1/qc/{image}`
//! instead.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::categories::CategorySet;
use crate::coco;
use crate::config::ServerConfig;
use crate::service::{self, ServiceError};
use crate::snapshot;
use crate::stats;
use crate::storage::{self, QcEvent, StorageError, Store, Verdict};
use crate::timestamp::Timestamp;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;

/// File name of the category config copy kept in the data directory.
pub const DATA_CATEGORIES: &str = "categories.json";

#[derive(Debug, Parser)]
#[command(name = "viewmark", version, about = "Ingest, review and export browser viewport annotations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerdictArg {
    Approved,
    Disqualified,
}

impl From<VerdictArg> for Verdict {
    fn from(v: VerdictArg) -> Self {
        match v {
            VerdictArg::Approved => Verdict::Approved,
            VerdictArg::Disqualified => Verdict::Disqualified,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a COCO snapshot of a data directory.
    Export {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        approved_only: bool,
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Print dataset and per-annotator statistics.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Count pending and disqualified images too.
        #[arg(long)]
        include_pending: bool,
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Check a COCO file against every dataset invariant.
    Validate { file: PathBuf },
    /// Record a QC verdict for a stored image.
    Qc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        image: String,
        #[arg(long, value_enum)]
        verdict: VerdictArg,
        #[arg(long, required_if_eq("verdict", "disqualified"))]
        reason: Option<String>,
        #[arg(long)]
        reviewer: String,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn storage_failure(e: StorageError) -> Failure {
    let code = if e.is_integrity() { EXIT_INTEGRITY } else { EXIT_FAILURE };
    Failure::new(code, e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Serve { config } => serve(&config),
        Command::Export { data, out: path, approved_only, categories } => {
            let (state, categories) = open_read_only(&data, categories.as_deref(), err)?;
            let bytes = snapshot::snapshot_json(&state, &categories, approved_only)
                .map_err(|e| Failure::new(EXIT_INTEGRITY, e.to_string()))?;
            std::fs::write(&path, &bytes)
                .map_err(|e| Failure::new(EXIT_FAILURE, format!("cannot write {}: {e}", path.display())))?;
            let _ = writeln!(err, "wrote {} ({} bytes)", path.display(), bytes.len());
            Ok(())
        }
        Command::Stats { data, format, include_pending, categories } => {
            let (state, categories) = open_read_only(&data, categories.as_deref(), err)?;
            let report = stats::compute_report(&state, &categories, !include_pending);
            let text = match format {
                Format::Json => crate::canonical::to_string(&report).expect("report serializes") + "\n",
                Format::Table => stats::render_table(&report, &categories),
            };
            out.write_all(text.as_bytes()).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))
        }
        Command::Validate { file } => validate(&file, out),
        Command::Qc { data, image, verdict, reason, reviewer } => {
            let (store, report) = Store::open(&data).map_err(storage_failure)?;
            for w in report.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            let ev = QcEvent {
                image_ref: image.clone(),
                verdict: verdict.into(),
                reason: reason.unwrap_or_default(),
                reviewer,
                at: Timestamp::now(),
            };
            let effective = store.append_qc(ev).map_err(storage_failure)?;
            let label = match effective {
                Verdict::Approved => "approved",
                Verdict::Disqualified => "disqualified",
            };
            let _ = writeln!(out, "{image} {label}");
            Ok(())
        }
    }
}

fn open_read_only(
    data: &Path,
    categories: Option<&Path>,
    err: &mut dyn Write,
) -> Result<(storage::State, CategorySet), Failure> {
    let path = categories.map_or_else(|| data.join(DATA_CATEGORIES), Path::to_owned);
    let categories = CategorySet::load(&path).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let (state, report) = storage::replay(data).map_err(|e| match e {
        StorageError::NotFound(m) => Failure::new(EXIT_CONFIG, m),
        other => storage_failure(other),
    })?;
    for w in report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok((state, categories))
}

fn validate(file: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let bytes =
        std::fs::read(file).map_err(|e| Failure::new(EXIT_FAILURE, format!("cannot read {}: {e}", file.display())))?;
    let ds = coco::parse_dataset_unchecked(&bytes).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    let violations = coco::validate_dataset(&ds);
    if violations.is_empty() {
        let _ = writeln!(out, "valid: {} images, {} annotations", ds.images.len(), ds.annotations.len());
        return Ok(());
    }
    for v in &violations {
        let _ = writeln!(out, "{v}");
    }
    Err(Failure::new(EXIT_FAILURE, format!("{} violation(s)", violations.len())))
}

/// Writes the canonical category config into the data directory so that
/// offline `export`/`stats` produce the same ids as the server.
pub fn sync_data_categories(data_dir: &Path, categories: &CategorySet) -> std::io::Result<()> {
    let path = data_dir.join(DATA_CATEGORIES);
    let bytes = categories.to_canonical_json();
    if std::fs::read(&path).ok().as_deref() == Some(&bytes[..]) {
        return Ok(());
    }
    std::fs::write(path, bytes)
}

fn serve(config: &Path) -> Result<(), Failure> {
    let cfg = ServerConfig::load(config).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let (categories, _) = cfg.validate().map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    sync_data_categories(&cfg.data_dir, &categories)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("cannot write category copy: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    };
    runtime.block_on(service::serve(&cfg, shutdown)).map_err(|e| match e {
        ServiceError::Config(_) | ServiceError::Bind { .. } => Failure::new(EXIT_CONFIG, e.to_string()),
        ServiceError::Storage(s) => storage_failure(s),
        ServiceError::Serve(_) => Failure::new(EXIT_FAILURE, e.to_string()),
    })
}
