//! Append-only persistence for submissions, image blobs and QC verdicts.
//!
//! On-disk layout under the data directory:
//!
//! ```text
//! blobs/<first-2-hex>/<sha256>.png   images, stored byte-for-byte as received
//! submissions.ndjson                  one canonical-JSON SubmissionRecord per line
//! qc.ndjson                           one canonical-JSON QcEvent per line
//! ```
//!
//! Log files are only ever appended to. Replaying them yields a [`State`];
//! the live [`Store`] keeps the current state behind an atomically swapped
//! `Arc`, so readers never block writers and never observe half an append.
//! All appends go through a single writer lock.
//!
//! A final line without its terminating newline is a torn write: [`Store::open`]
//! truncates it (with a warning) and [`replay`] skips it. A malformed line
//! anywhere before that is an integrity error.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical;
use crate::geometry::Polygon;
use crate::png_io;
use crate::timestamp::Timestamp;
use crate::url_metadata::GeoMetadata;

pub const SUBMISSIONS_LOG: &str = "submissions.ndjson";
pub const QC_LOG: &str = "qc.ndjson";
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("not found: {0}")]
    NotFound(String),
}

impl StorageError {
    fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| StorageError::Io { path, source }
    }

    /// Whether this error means the stored data itself is damaged.
    pub fn is_integrity(&self) -> bool {
        matches!(self, StorageError::Integrity(_))
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_content_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// One outlined object inside a submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDraft {
    pub category_name: String,
    pub polygon: Polygon,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// One annotator submission as persisted in the submission log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub submission_id: String,
    pub annotator_id: String,
    pub captured_at: Timestamp,
    pub page_url: String,
    pub image_ref: String,
    pub image_width: u32,
    pub image_height: u32,
    pub device_pixel_ratio: f64,
    pub drafts: Vec<AnnotationDraft>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoMetadata>,
    pub received_at: Timestamp,
}

#[derive(Serialize)]
struct IdentityFields<'a> {
    annotator_id: &'a str,
    captured_at: &'a Timestamp,
    image_ref: &'a str,
    drafts: &'a [AnnotationDraft],
}

impl SubmissionRecord {
    /// Content hash identifying a submission: who, when, which image, and
    /// the canonical encoding of the drafts. Server-side fields such as
    /// `received_at` are excluded, so a retried upload maps to the same id.
    pub fn compute_id(
        annotator_id: &str,
        captured_at: &Timestamp,
        image_ref: &str,
        drafts: &[AnnotationDraft],
    ) -> String {
        let fields = IdentityFields { annotator_id, captured_at, image_ref, drafts };
        content_hash(&canonical::to_vec(&fields).expect("identity fields serialize"))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        annotator_id: impl Into<String>,
        captured_at: Timestamp,
        page_url: impl Into<String>,
        image_ref: impl Into<String>,
        (image_width, image_height): (u32, u32),
        device_pixel_ratio: f64,
        drafts: Vec<AnnotationDraft>,
        geo: Option<GeoMetadata>,
        received_at: Timestamp,
    ) -> Self {
        let annotator_id = annotator_id.into();
        let image_ref = image_ref.into();
        let submission_id = Self::compute_id(&annotator_id, &captured_at, &image_ref, &drafts);
        Self {
            submission_id,
            annotator_id,
            captured_at,
            page_url: page_url.into(),
            image_ref,
            image_width,
            image_height,
            device_pixel_ratio,
            drafts,
            geo,
            received_at,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.annotator_id.is_empty() {
            return Err("annotator_id is empty".into());
        }
        if self.drafts.is_empty() {
            return Err("submission has no drafts".into());
        }
        if !is_content_hash(&self.image_ref) {
            return Err(format!("image_ref {:?} is not a content hash", self.image_ref));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err("image dimensions must be positive".into());
        }
        let expected = Self::compute_id(&self.annotator_id, &self.captured_at, &self.image_ref, &self.drafts);
        if expected != self.submission_id {
            return Err(format!("submission_id {} does not match content hash {expected}", self.submission_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Disqualified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcEvent {
    pub image_ref: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub reason: String,
    pub reviewer: String,
    pub at: Timestamp,
}

impl QcEvent {
    pub fn approve(image_ref: &str, reviewer: &str, at: Timestamp) -> Self {
        Self { image_ref: image_ref.into(), verdict: Verdict::Approved, reason: String::new(), reviewer: reviewer.into(), at }
    }

    pub fn disqualify(image_ref: &str, reason: &str, reviewer: &str, at: Timestamp) -> Self {
        Self {
            image_ref: image_ref.into(),
            verdict: Verdict::Disqualified,
            reason: reason.into(),
            reviewer: reviewer.into(),
            at,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.verdict == Verdict::Disqualified && self.reason.trim().is_empty() {
            return Err("a disqualification needs a reason".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EffectiveQc {
    at: Timestamp,
    seq: usize,
    verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubmissionReceipt {
    pub duplicate: bool,
}

/// Replayed store contents. Cheap to clone; persistent collections share
/// structure between successive versions.
#[derive(Debug, Clone, Default)]
pub struct State {
    submissions: im::Vector<Arc<SubmissionRecord>>,
    by_id: im::HashMap<String, usize>,
    submitted_images: im::HashMap<String, usize>,
    blobs: im::HashSet<String>,
    qc: im::HashMap<String, EffectiveQc>,
    qc_len: usize,
}

impl State {
    pub fn submissions(&self) -> impl Iterator<Item = &SubmissionRecord> + '_ {
        self.submissions.iter().map(|r| r.as_ref())
    }

    pub fn submission(&self, id: &str) -> Option<&SubmissionRecord> {
        self.by_id.get(id).map(|&i| self.submissions[i].as_ref())
    }

    pub fn len(&self) -> usize {
        self.submissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submissions.is_empty()
    }

    pub fn has_blob(&self, hash: &str) -> bool {
        self.blobs.contains(hash)
    }

    pub fn blob_count(&self) -> usize {
        self.blobs.len()
    }

    /// Whether any stored submission uses this image.
    pub fn has_image(&self, image_ref: &str) -> bool {
        self.submitted_images.contains_key(image_ref)
    }

    /// Distinct submitted images.
    pub fn image_count(&self) -> usize {
        self.submitted_images.len()
    }

    /// Effective QC verdict; `None` while the image is pending review.
    pub fn verdict(&self, image_ref: &str) -> Option<Verdict> {
        self.qc.get(image_ref).map(|q| q.verdict)
    }

    pub fn qc_len(&self) -> usize {
        self.qc_len
    }

    fn with_blob(&self, hash: String) -> Self {
        let mut next = self.clone();
        next.blobs.insert(hash);
        next
    }

    fn with_submission(&self, rec: SubmissionRecord) -> Self {
        let mut next = self.clone();
        let idx = next.submissions.len();
        next.by_id.insert(rec.submission_id.clone(), idx);
        *next.submitted_images.entry(rec.image_ref.clone()).or_insert(0) += 1;
        next.submissions.push_back(Arc::new(rec));
        next
    }

    fn with_qc(&self, ev: &QcEvent) -> Self {
        let mut next = self.clone();
        let seq = next.qc_len;
        next.qc_len += 1;
        let incoming = EffectiveQc { at: ev.at, seq, verdict: ev.verdict };
        match next.qc.get(&ev.image_ref) {
            // later timestamp wins; equal timestamps fall back to ledger order
            Some(cur) if cur.at > ev.at => {}
            _ => {
                next.qc.insert(ev.image_ref.clone(), incoming);
            }
        }
        next
    }
}

/// Non-fatal findings from a replay.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub warnings: Vec<String>,
}

pub fn blob_path(root: &Path, hash: &str) -> PathBuf {
    root.join(BLOB_DIR).join(&hash[..2]).join(format!("{hash}.png"))
}

fn scan_blobs(root: &Path) -> Result<im::HashSet<String>, StorageError> {
    let mut out = im::HashSet::new();
    let dir = root.join(BLOB_DIR);
    if !dir.exists() {
        return Ok(out);
    }
    for shard in fs::read_dir(&dir).map_err(StorageError::io(&dir))? {
        let shard = shard.map_err(StorageError::io(&dir))?.path();
        if !shard.is_dir() {
            continue;
        }
        for entry in fs::read_dir(&shard).map_err(StorageError::io(&shard))? {
            let path = entry.map_err(StorageError::io(&shard))?.path();
            if path.extension().is_some_and(|e| e == "png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if is_content_hash(stem) {
                        out.insert(stem.to_owned());
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Complete lines of an NDJSON log plus the byte length they cover.
struct LogLines {
    lines: Vec<(usize, Vec<u8>)>,
    complete_len: u64,
    torn_tail: bool,
}

fn read_log(path: &Path) -> Result<LogLines, StorageError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(StorageError::Io { path: path.to_owned(), source: e }),
    };
    let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let lines = match complete_len {
        0 => Vec::new(),
        n => bytes[..n - 1].split(|&b| b == b'\n').enumerate().map(|(i, l)| (i + 1, l.to_vec())).collect(),
    };
    Ok(LogLines { lines, complete_len: complete_len as u64, torn_tail: complete_len < bytes.len() })
}

fn parse_line<T: for<'de> Deserialize<'de>>(file: &str, lineno: usize, line: &[u8]) -> Result<T, StorageError> {
    serde_json::from_slice(line)
        .map_err(|e| StorageError::Integrity(format!("{file} line {lineno} is corrupt: {e}")))
}

fn replay_logs(root: &Path, truncate_torn: bool) -> Result<(State, ReplayReport), StorageError> {
    let mut report = ReplayReport::default();
    let mut state = State { blobs: scan_blobs(root)?, ..State::default() };

    for (file, is_subs) in [(SUBMISSIONS_LOG, true), (QC_LOG, false)] {
        let path = root.join(file);
        let log = read_log(&path)?;
        if log.torn_tail {
            report.warnings.push(format!(
                "{file}: dropping incomplete final line after byte {}",
                log.complete_len
            ));
            tracing::warn!(file, offset = log.complete_len, "incomplete final log line");
            if truncate_torn {
                let f = OpenOptions::new().write(true).open(&path).map_err(StorageError::io(&path))?;
                f.set_len(log.complete_len).map_err(StorageError::io(&path))?;
            }
        }
        for (lineno, line) in &log.lines {
            if is_subs {
                let rec: SubmissionRecord = parse_line(file, *lineno, line)?;
                rec.check().map_err(|e| StorageError::Integrity(format!("{file} line {lineno}: {e}")))?;
                if !state.has_blob(&rec.image_ref) {
                    return Err(StorageError::Integrity(format!(
                        "{file} line {lineno}: image blob {} is missing",
                        rec.image_ref
                    )));
                }
                if state.submission(&rec.submission_id).is_some() {
                    report.warnings.push(format!("{file} line {lineno}: repeated submission {}", rec.submission_id));
                    continue;
                }
                state = state.with_submission(rec);
            } else {
                let ev: QcEvent = parse_line(file, *lineno, line)?;
                if !state.has_image(&ev.image_ref) {
                    return Err(StorageError::Integrity(format!(
                        "{file} line {lineno}: QC event for unknown image {}",
                        ev.image_ref
                    )));
                }
                state = state.with_qc(&ev);
            }
        }
    }
    Ok((state, report))
}

/// Rebuilds the state from a data directory without modifying it.
///
/// Safe to run while a server owns the directory: a torn final line is
/// skipped rather than truncated.
pub fn replay(root: impl AsRef<Path>) -> Result<(State, ReplayReport), StorageError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(StorageError::NotFound(format!("data directory {} does not exist", root.display())));
    }
    replay_logs(root, false)
}

struct Writer {
    submissions: File,
    qc: File,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    /// fsync log files after every append.
    pub sync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self { sync: true }
    }
}

/// The live store: single writer, lock-free readers.
pub struct Store {
    root: PathBuf,
    options: StoreOptions,
    state: ArcSwap<State>,
    writer: Mutex<Writer>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<(Self, ReplayReport), StorageError> {
        Self::open_with(root, StoreOptions::default())
    }

    /// Opens (creating the layout if needed) and replays a data directory.
    pub fn open_with(root: impl AsRef<Path>, options: StoreOptions) -> Result<(Self, ReplayReport), StorageError> {
        let root = root.as_ref().to_owned();
        if !root.is_dir() {
            return Err(StorageError::NotFound(format!("data directory {} does not exist", root.display())));
        }
        let blobs = root.join(BLOB_DIR);
        fs::create_dir_all(&blobs).map_err(StorageError::io(&blobs))?;
        let (state, report) = replay_logs(&root, true)?;
        let open = |name: &str| {
            let path = root.join(name);
            OpenOptions::new().create(true).append(true).open(&path).map_err(StorageError::io(path))
        };
        let writer = Writer { submissions: open(SUBMISSIONS_LOG)?, qc: open(QC_LOG)? };
        Ok((
            Self { root, options, state: ArcSwap::from_pointee(state), writer: Mutex::new(writer) },
            report,
        ))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Current immutable state.
    pub fn state(&self) -> Arc<State> {
        self.state.load_full()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Writer> {
        // a panic while holding the lock leaves the files consistent: each
        // append either completed or was rolled back
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Stores PNG bytes under their SHA-256 and returns the hash.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String, StorageError> {
        png_io::png_dimensions(bytes).map_err(StorageError::InvalidImage)?;
        let hash = content_hash(bytes);
        let _guard = self.lock();
        if self.state.load().has_blob(&hash) {
            return Ok(hash);
        }
        let path = blob_path(&self.root, &hash);
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir).map_err(StorageError::io(dir))?;
        let tmp = dir.join(format!(".{hash}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(StorageError::io(&tmp))?;
            f.write_all(bytes).map_err(StorageError::io(&tmp))?;
            if self.options.sync {
                f.sync_all().map_err(StorageError::io(&tmp))?;
            }
        }
        fs::rename(&tmp, &path).map_err(StorageError::io(&path))?;
        let next = self.state.load().with_blob(hash.clone());
        self.state.store(Arc::new(next));
        Ok(hash)
    }

    pub fn read_blob(&self, hash: &str) -> Result<Vec<u8>, StorageError> {
        if !is_content_hash(hash) || !self.state.load().has_blob(hash) {
            return Err(StorageError::NotFound(format!("blob {hash}")));
        }
        let path = blob_path(&self.root, hash);
        fs::read(&path).map_err(StorageError::io(path))
    }

    fn append_line(&self, file: &mut File, name: &str, line: &[u8]) -> Result<(), StorageError> {
        let path = self.root.join(name);
        let before = file.metadata().map_err(StorageError::io(&path))?.len();
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line);
        buf.push(b'\n');
        let written = file.write_all(&buf).and_then(|_| file.flush()).and_then(|_| {
            if self.options.sync {
                file.sync_data()
            } else {
                Ok(())
            }
        });
        if let Err(e) = written {
            // roll back a partial line so later appends stay well-formed
            let _ = file.set_len(before);
            return Err(StorageError::Io { path, source: e });
        }
        Ok(())
    }

    /// Appends a submission unless one with the same id is already stored.
    pub fn append_submission(&self, rec: SubmissionRecord) -> Result<SubmissionReceipt, StorageError> {
        rec.check().map_err(StorageError::InvalidRecord)?;
        let mut writer = self.lock();
        let current = self.state.load_full();
        if current.submission(&rec.submission_id).is_some() {
            return Ok(SubmissionReceipt { duplicate: true });
        }
        if !current.has_blob(&rec.image_ref) {
            return Err(StorageError::Integrity(format!("image blob {} is not stored", rec.image_ref)));
        }
        let line = canonical::to_vec(&rec).expect("record serializes");
        self.append_line(&mut writer.submissions, SUBMISSIONS_LOG, &line)?;
        self.state.store(Arc::new(current.with_submission(rec)));
        Ok(SubmissionReceipt { duplicate: false })
    }

    /// Appends a QC event and returns the image's new effective verdict.
    pub fn append_qc(&self, ev: QcEvent) -> Result<Verdict, StorageError> {
        ev.check().map_err(StorageError::InvalidRecord)?;
        let mut writer = self.lock();
        let current = self.state.load_full();
        if !current.has_image(&ev.image_ref) {
            return Err(StorageError::NotFound(format!("image {}", ev.image_ref)));
        }
        let line = canonical::to_vec(&ev).expect("event serializes");
        self.append_line(&mut writer.qc, QC_LOG, &line)?;
        let next = current.with_qc(&ev);
        let verdict = next.verdict(&ev.image_ref).expect("verdict just recorded");
        self.state.store(Arc::new(next));
        Ok(verdict)
    }
}
