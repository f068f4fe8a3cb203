//! Runtime settings and the editable tables, read from the config directory.
//!
//! Files: `teiresias.yaml`, `keywords.yaml`, `patterns.yaml`, `storage-lookup.yaml`.
//! Missing files fall back to the shipped defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::{KeywordTable, PatternTable, DEFAULT_KEYWORDS_YAML, DEFAULT_PATTERNS_YAML};
use crate::codeanalysis::{LookupTable, DEFAULT_LOOKUP_YAML};
use crate::retrieval::{DEFAULT_REFERENCE_CAP, DEFAULT_SAMPLE_LIMIT};

pub const DEFAULT_SETTINGS_YAML: &str = include_str!("defaults/teiresias.yaml");
pub const CONFIG_DIR_ENV: &str = "TEIRESIAS_CONFIG_DIR";

pub const SETTINGS_FILE: &str = "teiresias.yaml";
pub const KEYWORDS_FILE: &str = "keywords.yaml";
pub const PATTERNS_FILE: &str = "patterns.yaml";
pub const LOOKUP_FILE: &str = "storage-lookup.yaml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub sample_limit: usize,
    pub reference_cap: usize,
    pub parallelism: Option<usize>,
    pub retry_limit: u32,
    pub retry_backoff_ms: u64,
    pub retention_days: Option<u32>,
    pub queue_capacity: usize,
    pub tabular_in_place: bool,
    pub environment: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            sample_limit: DEFAULT_SAMPLE_LIMIT,
            reference_cap: DEFAULT_REFERENCE_CAP,
            parallelism: None,
            retry_limit: 1,
            retry_backoff_ms: 1000,
            retention_days: None,
            queue_capacity: 16,
            tabular_in_place: false,
            environment: BTreeMap::new(),
        }
    }
}

impl Settings {
    pub fn retry_backoff(&self) -> Duration {
        Duration::from_millis(self.retry_backoff_ms)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0} already exists (use --force to overwrite)")]
    Exists(PathBuf),
}

/// Settings and tables in effect for one execution.
#[derive(Debug, Clone)]
pub struct Config {
    pub settings: Settings,
    pub keywords: KeywordTable,
    pub patterns: PatternTable,
    pub lookup: LookupTable,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            settings: Settings::default(),
            keywords: KeywordTable::default(),
            patterns: PatternTable::default(),
            lookup: LookupTable::default(),
        }
    }
}

/// `$TEIRESIAS_CONFIG_DIR`, else `~/.config/teiresias`, else `./.teiresias`.
pub fn default_config_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".config").join("teiresias"),
        None => PathBuf::from(".teiresias"),
    }
}

fn read_optional(path: &Path) -> Result<Option<String>, ConfigError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(ConfigError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

fn invalid(path: &Path, detail: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

impl Config {
    /// Reads every file of `dir` that exists. Called once per execution so edits apply to the next run.
    pub fn load(dir: &Path) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let path = dir.join(SETTINGS_FILE);
        if let Some(text) = read_optional(&path)? {
            config.settings = serde_yaml::from_str::<Option<Settings>>(&text)
                .map_err(|e| invalid(&path, e))?
                .unwrap_or_default();
            if config.settings.sample_limit == 0 {
                return Err(invalid(&path, "sample_limit must be positive"));
            }
            if config.settings.queue_capacity == 0 {
                return Err(invalid(&path, "queue_capacity must be positive"));
            }
        }
        let path = dir.join(KEYWORDS_FILE);
        if let Some(text) = read_optional(&path)? {
            config.keywords = KeywordTable::from_yaml(&text).map_err(|e| invalid(&path, e))?;
        }
        let path = dir.join(PATTERNS_FILE);
        if let Some(text) = read_optional(&path)? {
            config.patterns = PatternTable::from_yaml(&text).map_err(|e| invalid(&path, e))?;
        }
        let path = dir.join(LOOKUP_FILE);
        if let Some(text) = read_optional(&path)? {
            config.lookup = LookupTable::from_yaml(&text).map_err(|e| invalid(&path, e))?;
        }
        Ok(config)
    }
}

/// Writes the shipped defaults into `dir`. Existing files are kept unless `force`.
pub fn write_defaults(dir: &Path, force: bool) -> Result<Vec<PathBuf>, ConfigError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ConfigError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let files = [
        (SETTINGS_FILE, DEFAULT_SETTINGS_YAML),
        (KEYWORDS_FILE, DEFAULT_KEYWORDS_YAML),
        (PATTERNS_FILE, DEFAULT_PATTERNS_YAML),
        (LOOKUP_FILE, DEFAULT_LOOKUP_YAML),
    ];
    if !force {
        if let Some((name, _)) = files.iter().find(|(name, _)| dir.join(name).exists()) {
            return Err(ConfigError::Exists(dir.join(name)));
        }
    }
    let mut written = Vec::new();
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
