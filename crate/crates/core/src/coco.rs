//! COCO-compatible dataset model.
//!
//! Standard COCO objects carry extra keys for provenance (`source_url`,
//! `captured_at`, `annotator_id`, `geo`, `attributes`); loaders that only know
//! the core schema ignore them. Any other unknown key found while parsing is
//! kept in the owning object's `extra` map and written back out.
//!
//! Serialization is canonical (see [`crate::canonical`]), so
//! `serialize(parse(serialize(ds)))` is byte-identical to `serialize(ds)`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical;
use crate::categories::CategorySet;
use crate::geometry::{BBox, Point};
use crate::url_metadata::GeoMetadata;
use crate::violation::{Violation, ViolationCode};

/// Keys that must be present at the top level of a COCO file.
pub const REQUIRED_KEYS: [&str; 3] = ["images", "annotations", "categories"];

/// Slack, in pixels, for bbox-contains-vertex checks.
const BBOX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoDataset {
    #[serde(default)]
    pub info: BTreeMap<String, String>,
    #[serde(default)]
    pub licenses: Vec<Value>,
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source_url: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub captured_at: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub annotator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoMetadata>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: Vec<Vec<f64>>,
    pub area: f64,
    pub bbox: BBox,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Exported category: the COCO triple without UI colour or shortcut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(default)]
    pub supercategory: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl CocoCategory {
    pub fn new(id: u64, name: &str, supercategory: &str) -> Self {
        Self { id, name: name.to_owned(), supercategory: supercategory.to_owned(), extra: BTreeMap::new() }
    }
}

impl CocoDataset {
    /// Empty dataset carrying the configured categories.
    pub fn with_categories(categories: &CategorySet) -> Self {
        Self {
            categories: categories
                .iter()
                .map(|d| CocoCategory::new(d.id, &d.name, &d.supercategory))
                .collect(),
            ..Default::default()
        }
    }

    pub fn image(&self, id: u64) -> Option<&CocoImage> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn category(&self, id: u64) -> Option<&CocoCategory> {
        self.categories.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Error)]
pub enum CocoError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema error at {key:?}: {message}")]
    Schema { key: String, message: String },
    #[error("dataset has {} violation(s): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("merge conflict: category {name:?} has supercategory {left:?} in one dataset and {right:?} in the other")]
    MergeConflict { name: String, left: String, right: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Writes `ds` as canonical UTF-8 JSON after checking every invariant.
pub fn serialize_dataset(ds: &CocoDataset) -> Result<Vec<u8>, CocoError> {
    let violations = validate_dataset(ds);
    if !violations.is_empty() {
        return Err(CocoError::Validation(violations));
    }
    Ok(canonical::to_vec(ds).expect("dataset serializes"))
}

/// Parses and validates a COCO file.
pub fn parse_dataset(bytes: &[u8]) -> Result<CocoDataset, CocoError> {
    let ds = parse_dataset_unchecked(bytes)?;
    let violations = validate_dataset(&ds);
    if !violations.is_empty() {
        return Err(CocoError::Validation(violations));
    }
    Ok(ds)
}

/// Parses a COCO file, checking syntax and schema but not invariants.
pub fn parse_dataset_unchecked(bytes: &[u8]) -> Result<CocoDataset, CocoError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| CocoError::Parse {
        offset: canonical::byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(top) = &value else {
        return Err(CocoError::Schema { key: "$".into(), message: "top level must be an object".into() });
    };
    for key in REQUIRED_KEYS {
        if !top.contains_key(key) {
            return Err(CocoError::Schema {
                key: key.into(),
                message: format!("missing required key {key:?}"),
            });
        }
    }
    serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        let key = missing_field_name(&message).unwrap_or_default();
        CocoError::Schema { key, message }
    })
}

fn missing_field_name(message: &str) -> Option<String> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next().map(str::to_owned)
}

/// Lists every broken invariant; empty means the dataset is valid.
pub fn validate_dataset(ds: &CocoDataset) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut image_ids = HashSet::new();
    for img in &ds.images {
        let at = format!("image {}", img.id);
        if img.id == 0 {
            out.push(Violation::error(ViolationCode::ZeroId, "image id must be positive").at(&at));
        }
        if !image_ids.insert(img.id) {
            out.push(Violation::error(ViolationCode::DuplicateImageId, "duplicate image id").at(&at));
        }
        if img.width == 0 || img.height == 0 {
            out.push(
                Violation::error(
                    ViolationCode::InvalidImageDimensions,
                    format!("image is {}x{}, both sides must be at least 1 px", img.width, img.height),
                )
                .at(&at),
            );
        }
        if img.file_name.is_empty() {
            out.push(Violation::error(ViolationCode::EmptyFileName, "file_name is empty").at(&at));
        }
    }

    let mut category_ids = HashSet::new();
    let mut category_names = HashSet::new();
    for cat in &ds.categories {
        let at = format!("category {}", cat.id);
        if cat.id == 0 {
            out.push(Violation::error(ViolationCode::ZeroId, "category id must be positive").at(&at));
        }
        if !category_ids.insert(cat.id) {
            out.push(Violation::error(ViolationCode::DuplicateCategoryId, "duplicate category id").at(&at));
        }
        if cat.name.is_empty() {
            out.push(Violation::error(ViolationCode::EmptyCategoryName, "category name is empty").at(&at));
        } else if !category_names.insert(cat.name.as_str()) {
            out.push(
                Violation::error(ViolationCode::DuplicateCategoryName, format!("duplicate category name {:?}", cat.name))
                    .at(&at),
            );
        }
    }

    let mut annotation_ids = HashSet::new();
    for ann in &ds.annotations {
        let at = format!("annotation {}", ann.id);
        if ann.id == 0 {
            out.push(Violation::error(ViolationCode::ZeroId, "annotation id must be positive").at(&at));
        }
        if !annotation_ids.insert(ann.id) {
            out.push(Violation::error(ViolationCode::DuplicateAnnotationId, "duplicate annotation id").at(&at));
        }
        if !image_ids.contains(&ann.image_id) {
            out.push(
                Violation::error(ViolationCode::DanglingImageId, format!("references missing image id {}", ann.image_id))
                    .at(&at),
            );
        }
        if !category_ids.contains(&ann.category_id) {
            out.push(
                Violation::error(
                    ViolationCode::DanglingCategoryId,
                    format!("references missing category id {}", ann.category_id),
                )
                .at(&at),
            );
        }
        if ann.iscrowd != 0 {
            out.push(
                Violation::error(ViolationCode::NonZeroIscrowd, format!("iscrowd is {}, only 0 is supported", ann.iscrowd))
                    .at(&at),
            );
        }
        if !(ann.area.is_finite() && ann.area > 0.0) {
            out.push(
                Violation::error(ViolationCode::NonPositiveArea, format!("area {} must be positive", ann.area)).at(&at),
            );
        }
        let bbox = ann.bbox;
        let bbox_ok = bbox.to_array().iter().all(|v| v.is_finite()) && bbox.width > 0.0 && bbox.height > 0.0;
        if !bbox_ok {
            out.push(
                Violation::error(
                    ViolationCode::InvalidBbox,
                    format!("bbox {:?} needs finite values and positive width and height", bbox.to_array()),
                )
                .at(&at),
            );
        }
        if ann.segmentation.is_empty() {
            out.push(Violation::error(ViolationCode::EmptySegmentation, "segmentation has no polygons").at(&at));
        }
        for (k, poly) in ann.segmentation.iter().enumerate() {
            if poly.len() < 6 {
                out.push(
                    Violation::error(
                        ViolationCode::PolygonTooShort,
                        format!("polygon too short: polygon {k} has {} values, at least 6 required", poly.len()),
                    )
                    .at(&at),
                );
            } else if poly.len() % 2 != 0 {
                out.push(
                    Violation::error(
                        ViolationCode::PolygonOddLength,
                        format!("polygon {k} has an odd number of values ({})", poly.len()),
                    )
                    .at(&at),
                );
            }
            if poly.iter().any(|v| !v.is_finite()) {
                out.push(
                    Violation::error(ViolationCode::NonFiniteCoordinate, format!("polygon {k} has a non-finite value"))
                        .at(&at),
                );
                continue;
            }
            if bbox_ok {
                let outside = poly
                    .chunks_exact(2)
                    .map(|c| Point::new(c[0], c[1]))
                    .find(|p| !bbox.contains(*p, BBOX_TOLERANCE));
                if let Some(p) = outside {
                    out.push(
                        Violation::error(
                            ViolationCode::BboxDoesNotContainSegmentation,
                            format!("vertex ({}, {}) of polygon {k} lies outside bbox {:?}", p.x, p.y, bbox.to_array()),
                        )
                        .at(&at),
                    );
                }
            }
        }
    }
    out
}

/// Merges `b` into `a`.
///
/// Categories are unified by name. Images of `b` whose `file_name` already
/// occurs in `a` collapse onto the existing image; every other image and every
/// annotation of `b` gets a fresh id continuing after the maximum id in `a`.
pub fn merge_datasets(a: &CocoDataset, b: &CocoDataset) -> Result<CocoDataset, CocoError> {
    for ds in [a, b] {
        let v = validate_dataset(ds);
        if !v.is_empty() {
            return Err(CocoError::Validation(v));
        }
    }
    let mut out = a.clone();

    let mut next_category = a.categories.iter().map(|c| c.id).max().unwrap_or(0) + 1;
    let mut category_map = HashMap::new();
    for cat in &b.categories {
        match out.categories.iter().find(|c| c.name == cat.name) {
            Some(existing) if existing.supercategory != cat.supercategory => {
                return Err(CocoError::MergeConflict {
                    name: cat.name.clone(),
                    left: existing.supercategory.clone(),
                    right: cat.supercategory.clone(),
                });
            }
            Some(existing) => {
                category_map.insert(cat.id, existing.id);
            }
            None => {
                let mut added = cat.clone();
                added.id = next_category;
                next_category += 1;
                category_map.insert(cat.id, added.id);
                out.categories.push(added);
            }
        }
    }

    let mut by_file: HashMap<&str, u64> = a.images.iter().map(|i| (i.file_name.as_str(), i.id)).collect();
    let mut next_image = a.images.iter().map(|i| i.id).max().unwrap_or(0) + 1;
    let mut image_map = HashMap::new();
    for img in &b.images {
        if let Some(&existing) = by_file.get(img.file_name.as_str()) {
            image_map.insert(img.id, existing);
            continue;
        }
        let mut added = img.clone();
        added.id = next_image;
        next_image += 1;
        image_map.insert(img.id, added.id);
        by_file.insert(img.file_name.as_str(), added.id);
        out.images.push(added);
    }

    let first_annotation = a.annotations.iter().map(|x| x.id).max().unwrap_or(0) + 1;
    for (id, ann) in (first_annotation..).zip(&b.annotations) {
        let mut added = ann.clone();
        added.id = id;
        added.image_id = image_map[&ann.image_id];
        added.category_id = category_map[&ann.category_id];
        out.annotations.push(added);
    }

    for lic in &b.licenses {
        if !out.licenses.contains(lic) {
            out.licenses.push(lic.clone());
        }
    }
    for (k, v) in &b.info {
        out.info.entry(k.clone()).or_insert_with(|| v.clone());
    }
    for (k, v) in &b.extra {
        out.extra.entry(k.clone()).or_insert_with(|| v.clone());
    }
    Ok(out)
}
