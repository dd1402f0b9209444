//! Server-side engine for browser viewport annotation.
//!
//! Annotators capture whatever their browser currently shows, outline objects
//! with polygons and post the result here. This crate turns those submissions
//! into a quality-checked, COCO-compatible dataset:
//!
//! - [`geometry`]: polygon area, bounding boxes, validity checks and the
//!   small/medium/large area classes.
//! - [`coco`]: the COCO data model with canonical serialization, validation
//!   and merging.
//! - [`url_metadata`]: source classification and street-view URL parsing.
//! - [`storage`]: content-addressed PNG blobs plus append-only NDJSON logs for
//!   submissions and QC verdicts.
//! - [`stats`]: dataset and per-annotator statistics.
//! - [`snapshot`]: deterministic COCO export of the stored state.
//! - [`service`]: the HTTP ingestion/administration API.
//! - [`cli`]: the operator command line (`serve`, `export`, `stats`,
//!   `validate`, `qc`).
//!
//! Runnable walkthroughs for each of these live in the crate's `examples/`
//! directory.

pub mod canonical;
pub mod categories;
pub mod cli;
pub mod coco;
pub mod config;
pub mod geometry;
pub mod png_io;
pub mod service;
pub mod snapshot;
pub mod stats;
pub mod storage;
pub mod synthetic;
pub mod timestamp;
pub mod url_metadata;
pub mod violation;

pub use categories::{CategoryDef, CategoryError, CategorySet};
pub use coco::{CocoAnnotation, CocoCategory, CocoDataset, CocoImage};
pub use geometry::{AreaClass, BBox, Point, Polygon};
pub use storage::{QcEvent, Store, SubmissionRecord, Verdict};
pub use timestamp::Timestamp;
pub use url_metadata::{GeoMetadata, SourceTag, UrlParserRule, UrlRegistry};
pub use violation::{Severity, Violation, ViolationCode};

/// Build version reported by the health endpoint.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
