//! Category configuration: the one list of object categories shared by the
//! server and the browser extension.
//!
//! The file is a JSON array of [`CategoryDef`] records. Besides the COCO
//! triple (`id`, `name`, `supercategory`) each entry carries the UI colour and
//! an optional keyboard shortcut. Unknown keys (for example an `attributes`
//! list describing free-text fields) are kept and served back untouched.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDef {
    pub id: u64,
    pub name: String,
    #[serde(default)]
    pub supercategory: String,
    /// `#RRGGBB`
    pub display_color: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortcut_key: Option<char>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl CategoryDef {
    pub fn new(id: u64, name: &str, supercategory: &str, display_color: &str) -> Self {
        Self {
            id,
            name: name.to_owned(),
            supercategory: supercategory.to_owned(),
            display_color: display_color.to_owned(),
            shortcut_key: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_shortcut(mut self, key: char) -> Self {
        self.shortcut_key = Some(key);
        self
    }
}

#[derive(Debug, Error)]
pub enum CategoryError {
    #[error("cannot read category file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("category file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("category config has no entries")]
    Empty,
    #[error("category id must be positive ({name:?})")]
    ZeroId { name: String },
    #[error("category name must not be empty (id {id})")]
    EmptyName { id: u64 },
    #[error("duplicate category id {0}")]
    DuplicateId(u64),
    #[error("duplicate category name {0:?}")]
    DuplicateName(String),
    #[error("duplicate shortcut key {key:?} on {name:?}")]
    DuplicateShortcut { key: char, name: String },
    #[error("shortcut key {key:?} on {name:?} is not a printable character")]
    UnprintableShortcut { key: char, name: String },
    #[error("display_color {color:?} on {name:?} is not #RRGGBB")]
    BadColor { color: String, name: String },
}

fn is_hex_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].bytes().all(|b| b.is_ascii_hexdigit())
}

/// A validated, ordered category list with name and id lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySet {
    defs: Vec<CategoryDef>,
    by_name: HashMap<String, usize>,
}

impl CategorySet {
    pub fn new(defs: Vec<CategoryDef>) -> Result<Self, CategoryError> {
        if defs.is_empty() {
            return Err(CategoryError::Empty);
        }
        let mut ids = HashSet::new();
        let mut keys = HashSet::new();
        let mut by_name = HashMap::new();
        for (i, d) in defs.iter().enumerate() {
            if d.id == 0 {
                return Err(CategoryError::ZeroId { name: d.name.clone() });
            }
            if d.name.is_empty() {
                return Err(CategoryError::EmptyName { id: d.id });
            }
            if !ids.insert(d.id) {
                return Err(CategoryError::DuplicateId(d.id));
            }
            if by_name.insert(d.name.clone(), i).is_some() {
                return Err(CategoryError::DuplicateName(d.name.clone()));
            }
            if !is_hex_color(&d.display_color) {
                return Err(CategoryError::BadColor {
                    color: d.display_color.clone(),
                    name: d.name.clone(),
                });
            }
            if let Some(key) = d.shortcut_key {
                if key.is_control() || key.is_whitespace() {
                    return Err(CategoryError::UnprintableShortcut { key, name: d.name.clone() });
                }
                if !keys.insert(key) {
                    return Err(CategoryError::DuplicateShortcut { key, name: d.name.clone() });
                }
            }
        }
        Ok(Self { defs, by_name })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, CategoryError> {
        Self::new(serde_json::from_slice(bytes)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CategoryError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|source| CategoryError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&bytes)
    }

    pub fn defs(&self) -> &[CategoryDef] {
        &self.defs
    }

    pub fn by_name(&self, name: &str) -> Option<&CategoryDef> {
        self.by_name.get(name).map(|&i| &self.defs[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CategoryDef> {
        self.defs.iter()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// Canonical JSON of the full config, colours and shortcuts included.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        canonical::to_vec(&self.defs).expect("category defs serialize")
    }
}
