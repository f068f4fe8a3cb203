use std::collections::BTreeMap;
use std::path::Path;

use glob::Pattern;
use serde::{Deserialize, Serialize};

pub const DEFAULT_LOOKUP_YAML: &str = include_str!("../defaults/storage-lookup.yaml");

/// Fields a lookup entry may map.
pub const MAPPABLE_FIELDS: [&str; 5] = ["host", "port", "database", "username", "password"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldDefault {
    From { from: String },
    Value(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleRule {
    pub names: Vec<String>,
    pub params: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub defaults: BTreeMap<String, FieldDefault>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageRule {
    pub storage_type: String,
    pub default_port: u16,
    #[serde(default)]
    pub images: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub environment: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub defaults: BTreeMap<String, FieldDefault>,
    #[serde(default)]
    pub optional: Vec<String>,
    #[serde(default)]
    pub modules: Vec<ModuleRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LookupFile {
    #[serde(default)]
    container_modules: Vec<String>,
    storages: Vec<StorageRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum LookupError {
    #[error("lookup table: {0}")]
    Parse(String),
    #[error("lookup table: invalid glob '{glob}': {detail}")]
    Glob { glob: String, detail: String },
    #[error("lookup table: '{storage_type}' maps unknown field '{field}'")]
    UnknownField { storage_type: String, field: String },
    #[error("lookup table: cannot read {path}: {detail}")]
    Read { path: String, detail: String },
}

#[derive(Debug, Clone)]
struct CompiledRule {
    images: Vec<Pattern>,
    exclude: Vec<Pattern>,
    modules: Vec<Vec<Pattern>>,
}

/// Maps image names and Ansible modules to storage types and credential conventions.
/// Entries are tried in file order; the first match wins.
#[derive(Debug, Clone)]
pub struct LookupTable {
    container_modules: Vec<Pattern>,
    rules: Vec<StorageRule>,
    compiled: Vec<CompiledRule>,
}

fn compile_globs(globs: &[String]) -> Result<Vec<Pattern>, LookupError> {
    globs
        .iter()
        .map(|g| {
            Pattern::new(g).map_err(|e| LookupError::Glob {
                glob: g.clone(),
                detail: e.to_string(),
            })
        })
        .collect()
}

fn check_fields<'a>(storage_type: &str, fields: impl Iterator<Item = &'a String>) -> Result<(), LookupError> {
    for field in fields {
        if !MAPPABLE_FIELDS.contains(&field.as_str()) {
            return Err(LookupError::UnknownField {
                storage_type: storage_type.to_string(),
                field: field.clone(),
            });
        }
    }
    Ok(())
}

impl LookupTable {
    pub fn from_yaml(text: &str) -> Result<Self, LookupError> {
        let file: LookupFile = serde_yaml::from_str(text).map_err(|e| LookupError::Parse(e.to_string()))?;
        let mut compiled = Vec::new();
        for rule in &file.storages {
            let t = &rule.storage_type;
            check_fields(t, rule.environment.keys())?;
            check_fields(t, rule.defaults.keys())?;
            check_fields(t, rule.optional.iter())?;
            for m in &rule.modules {
                check_fields(t, m.params.keys())?;
                check_fields(t, m.defaults.keys())?;
            }
            compiled.push(CompiledRule {
                images: compile_globs(&rule.images)?,
                exclude: compile_globs(&rule.exclude)?,
                modules: rule.modules.iter().map(|m| compile_globs(&m.names)).collect::<Result<_, _>>()?,
            });
        }
        Ok(Self {
            container_modules: compile_globs(&file.container_modules)?,
            rules: file.storages,
            compiled,
        })
    }

    /// Reads `path`, or the shipped table if it does not exist.
    pub fn load(path: &Path) -> Result<Self, LookupError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_yaml(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(LookupError::Read {
                path: path.display().to_string(),
                detail: e.to_string(),
            }),
        }
    }

    pub fn rules(&self) -> &[StorageRule] {
        &self.rules
    }

    pub fn match_image(&self, image: &str) -> Option<&StorageRule> {
        let repo = image_repository(image);
        self.rules.iter().zip(&self.compiled).find_map(|(rule, c)| {
            let hit = c.images.iter().any(|p| p.matches(&repo)) && !c.exclude.iter().any(|p| p.matches(&repo));
            hit.then_some(rule)
        })
    }

    pub fn match_module(&self, module: &str) -> Option<(&StorageRule, &ModuleRule)> {
        self.rules.iter().zip(&self.compiled).find_map(|(rule, c)| {
            rule.modules
                .iter()
                .zip(&c.modules)
                .find(|(_, globs)| globs.iter().any(|p| p.matches(module)))
                .map(|(m, _)| (rule, m))
        })
    }

    pub fn is_container_module(&self, module: &str) -> bool {
        self.container_modules.iter().any(|p| p.matches(module))
    }
}

impl Default for LookupTable {
    fn default() -> Self {
        Self::from_yaml(DEFAULT_LOOKUP_YAML).expect("shipped lookup table is valid")
    }
}

/// Repository name of an image reference, lowercased, without registry, path, tag or digest.
pub fn image_repository(image: &str) -> String {
    let without_digest = image.split('@').next().unwrap_or(image);
    let last = without_digest.rsplit('/').next().unwrap_or(without_digest);
    last.split(':').next().unwrap_or(last).trim().to_ascii_lowercase()
}
