//! Server configuration file.
//!
//! ```json
//! {
//!   "bind": "127.0.0.1:8080",
//!   "data_dir": "data",
//!   "categories_path": "categories.json",
//!   "url_rules": [ ... ],
//!   "max_payload_bytes": 16777216,
//!   "token": "optional shared secret",
//!   "allowed_origins": []
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! `VIEWMARK_BIND`, `VIEWMARK_DATA_DIR` and `VIEWMARK_TOKEN` override the
//! corresponding keys. Omitting `url_rules` selects the built-in rules.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories::{CategoryError, CategorySet};
use crate::url_metadata::{RuleError, UrlParserRule, UrlRegistry};

pub const MIN_PAYLOAD_BYTES: usize = 1 << 20;
pub const DEFAULT_PAYLOAD_BYTES: usize = 32 << 20;

pub const ENV_BIND: &str = "VIEWMARK_BIND";
pub const ENV_DATA_DIR: &str = "VIEWMARK_DATA_DIR";
pub const ENV_TOKEN: &str = "VIEWMARK_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    pub categories_path: PathBuf,
    #[serde(default = "UrlRegistry::default_rules")]
    pub url_rules: Vec<UrlParserRule>,
    #[serde(default = "default_payload")]
    pub max_payload_bytes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    /// Origins allowed to call the API from a browser; empty allows any.
    #[serde(default)]
    pub allowed_origins: Vec<String>,
}

fn default_payload() -> usize {
    DEFAULT_PAYLOAD_BYTES
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bind address {0:?} is not host:port")]
    Bind(String),
    #[error("data directory {0} does not exist")]
    DataDir(PathBuf),
    #[error("category config: {0}")]
    Categories(#[from] CategoryError),
    #[error("URL rules: {0}")]
    Rules(#[from] RuleError),
    #[error("max_payload_bytes {0} is below the 1 MiB minimum")]
    PayloadLimit(usize),
}

impl ServerConfig {
    pub fn new(bind: &str, data_dir: impl Into<PathBuf>, categories_path: impl Into<PathBuf>) -> Self {
        Self {
            bind: bind.into(),
            data_dir: data_dir.into(),
            categories_path: categories_path.into(),
            url_rules: UrlRegistry::default_rules(),
            max_payload_bytes: DEFAULT_PAYLOAD_BYTES,
            token: None,
            allowed_origins: Vec::new(),
        }
    }

    /// Reads a config file, applies environment overrides and resolves
    /// relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let mut cfg: ServerConfig = serde_json::from_slice(&bytes)?;
        cfg.apply_env(|k| std::env::var(k).ok());
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data_dir = resolve(base, &cfg.data_dir);
        cfg.categories_path = resolve(base, &cfg.categories_path);
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_BIND) {
            self.bind = v;
        }
        if let Some(v) = get(ENV_DATA_DIR) {
            self.data_dir = v.into();
        }
        if let Some(v) = get(ENV_TOKEN) {
            self.token = (!v.is_empty()).then_some(v);
        }
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.bind.parse().map_err(|_| ConfigError::Bind(self.bind.clone()))
    }

    /// Checks everything that can be checked before opening the store.
    pub fn validate(&self) -> Result<(CategorySet, UrlRegistry), ConfigError> {
        self.bind_addr()?;
        if self.max_payload_bytes < MIN_PAYLOAD_BYTES {
            return Err(ConfigError::PayloadLimit(self.max_payload_bytes));
        }
        if !self.data_dir.is_dir() {
            return Err(ConfigError::DataDir(self.data_dir.clone()));
        }
        let categories = CategorySet::load(&self.categories_path)?;
        let rules = UrlRegistry::from_rules(self.url_rules.iter().cloned())?;
        Ok((categories, rules))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_categories(dir: &Path) {
        std::fs::write(
            dir.join("categories.json"),
            r##"[{"id":1,"name":"directed","supercategory":"camera","display_color":"#ff0000"}]"##,
        )
        .unwrap();
    }

    #[test]
    fn loads_with_relative_paths_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("data")).unwrap();
        write_categories(dir.path());
        let path = dir.path().join("server.json");
        std::fs::write(&path, r#"{"bind":"127.0.0.1:0","data_dir":"data","categories_path":"categories.json"}"#)
            .unwrap();
        let cfg = ServerConfig::load(&path).unwrap();
        assert_eq!(cfg.data_dir, dir.path().join("data"));
        assert_eq!(cfg.url_rules, UrlRegistry::default_rules());
        let (cats, rules) = cfg.validate().unwrap();
        assert_eq!(cats.len(), 1);
        assert_eq!(rules.len(), 2);
    }

    #[test]
    fn rejects_bad_settings() {
        let dir = tempfile::tempdir().unwrap();
        write_categories(dir.path());
        let cats = dir.path().join("categories.json");
        let missing = ServerConfig::new("127.0.0.1:0", dir.path().join("nope"), &cats);
        assert!(matches!(missing.validate(), Err(ConfigError::DataDir(_))));
        let mut small = ServerConfig::new("127.0.0.1:0", dir.path(), &cats);
        small.max_payload_bytes = 1000;
        assert!(matches!(small.validate(), Err(ConfigError::PayloadLimit(1000))));
        let bad_bind = ServerConfig::new("localhost", dir.path(), &cats);
        assert!(matches!(bad_bind.validate(), Err(ConfigError::Bind(_))));
        let mut bad_rule = ServerConfig::new("127.0.0.1:0", dir.path(), &cats);
        bad_rule.url_rules.push(UrlParserRule::new("x", "a.com", "([", "none"));
        assert!(matches!(bad_rule.validate(), Err(ConfigError::Rules(_))));
    }

    #[test]
    fn env_overrides() {
        let mut cfg = ServerConfig::new("127.0.0.1:1", "/a", "/c.json");
        cfg.apply_env(|k| match k {
            ENV_BIND => Some("0.0.0.0:9".into()),
            ENV_TOKEN => Some("s3cret".into()),
            _ => None,
        });
        assert_eq!(cfg.bind, "0.0.0.0:9");
        assert_eq!(cfg.token.as_deref(), Some("s3cret"));
        assert_eq!(cfg.data_dir, PathBuf::from("/a"));
    }
}
