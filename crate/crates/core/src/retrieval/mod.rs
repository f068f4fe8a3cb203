//! Read-only access to storages: sessions, collection profiles and in-place matching.

pub mod document;
mod tabular;

#[cfg(feature = "mongodb")]
mod mongodb;
#[cfg(feature = "postgres")]
mod postgres;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::CompiledPattern;
use crate::codeanalysis::ConnectionDescriptor;

#[cfg(feature = "mongodb")]
pub use self::mongodb::MongoAdapter;
#[cfg(feature = "postgres")]
pub use self::postgres::PostgresAdapter;
pub use tabular::TabularAdapter;

/// Default number of entities sampled per collection.
pub const DEFAULT_SAMPLE_LIMIT: usize = 10_000;
/// Default cap on entity references reported per (collection, pattern).
pub const DEFAULT_REFERENCE_CAP: usize = 100;

/// Personal-data hint derived from a declared storage type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeIndicator {
    IpAddress,
}

impl TypeIndicator {
    /// The fixed type → indicator table. Type names are compared case-insensitively.
    pub fn for_declared_type(declared: &str) -> Option<Self> {
        match declared.trim().to_ascii_lowercase().as_str() {
            "inet" | "cidr" => Some(Self::IpAddress),
            _ => None,
        }
    }

    /// Keyword the indicator counts as in metadata proximity.
    pub fn keyword(self) -> &'static str {
        match self {
            Self::IpAddress => "ip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMeta {
    pub name: String,
    pub declared_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_indicator: Option<TypeIndicator>,
}

impl AttributeMeta {
    pub fn new(name: impl Into<String>, declared_type: impl Into<String>) -> Self {
        let declared_type = declared_type.into();
        Self {
            name: name.into(),
            type_indicator: TypeIndicator::for_declared_type(&declared_type),
            declared_type,
        }
    }

    /// Whether values of this attribute are matched against data patterns.
    pub fn is_textual(&self) -> bool {
        let t = self.declared_type.to_ascii_lowercase();
        matches!(
            t.as_str(),
            "text" | "string" | "varchar" | "character varying" | "character" | "char" | "bpchar" | "citext"
                | "name" | "inet" | "cidr"
        )
    }
}

/// One sampled entity. Held in memory for analysis only; deliberately not serializable.
#[derive(Clone, PartialEq)]
pub struct Entity {
    pub reference: String,
    pub values: BTreeMap<String, Value>,
}

impl fmt::Debug for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Entity")
            .field("reference", &self.reference)
            .field("attributes", &self.values.keys().collect::<Vec<_>>())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    /// First entities in primary-key or natural order.
    Head,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub limit: usize,
    pub method: SamplingMethod,
    /// Reserved for randomized methods; head sampling ignores it.
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            limit: DEFAULT_SAMPLE_LIMIT,
            method: SamplingMethod::Head,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionProfile {
    pub storage_ref: String,
    pub collection: String,
    pub attributes: Vec<AttributeMeta>,
    pub entity_count: u64,
    /// Set when the adapter could not count exactly.
    pub count_estimated: bool,
    pub primary_key: Option<String>,
    pub sample: Vec<Entity>,
    pub sampling: SamplingConfig,
}

impl CollectionProfile {
    /// Whether the sample misses entities, so full coverage needs in-place evaluation.
    pub fn is_partial(&self) -> bool {
        self.entity_count > self.sample.len() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub in_place_regex: bool,
    pub exact_count: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InPlaceMatch {
    pub count: u64,
    pub references: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("manual completion required: unresolved {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error("no adapter for storage type '{0}'")]
    UnsupportedType(String),
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("collection '{0}' not found")]
    NotFound(String),
    #[error("permission denied on '{0}'")]
    PermissionDenied(String),
    #[error("storage engine cannot evaluate pattern: {0}")]
    PatternUnsupported(String),
    #[error("query failed: {0}")]
    Query(String),
    #[error("in-place matching is not supported by this adapter")]
    InPlaceUnsupported,
}

/// A read-only connection to one storage.
pub trait Session: Send {
    fn capabilities(&self) -> Capabilities;
    fn list_collections(&mut self) -> Result<Vec<String>, RetrievalError>;
    fn profile(&mut self, collection: &str, sampling: &SamplingConfig) -> Result<CollectionProfile, RetrievalError>;
    /// Counts entities whose `attribute` matches, evaluated by the storage engine.
    /// Returns at most `reference_cap` references.
    fn count_matches(
        &mut self,
        collection: &str,
        attribute: &str,
        pattern: &CompiledPattern,
        reference_cap: usize,
    ) -> Result<InPlaceMatch, RetrievalError>;
}

pub trait StorageAdapter: Send + Sync {
    fn storage_type(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    /// Only called with complete descriptors.
    fn connect(&self, descriptor: &ConnectionDescriptor) -> Result<Box<dyn Session>, RetrievalError>;
}

#[derive(Clone, Default)]
pub struct AdapterRegistry {
    adapters: BTreeMap<String, Arc<dyn StorageAdapter>>,
}

impl AdapterRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The built-in adapters. `tabular_in_place` turns on engine emulation for the file adapter.
    pub fn builtin(tabular_in_place: bool) -> Self {
        let mut registry = Self::empty();
        registry.register(TabularAdapter::new().with_in_place(tabular_in_place));
        #[cfg(feature = "postgres")]
        registry.register(PostgresAdapter::new());
        #[cfg(feature = "mongodb")]
        registry.register(MongoAdapter::new());
        registry
    }

    pub fn register(&mut self, adapter: impl StorageAdapter + 'static) {
        self.adapters.insert(adapter.storage_type().to_string(), Arc::new(adapter));
    }

    pub fn get(&self, storage_type: &str) -> Option<&Arc<dyn StorageAdapter>> {
        self.adapters.get(storage_type)
    }

    pub fn storage_types(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }
}

/// Opens a read-only session. Incomplete descriptors are refused before any I/O.
pub fn open_session(
    adapters: &AdapterRegistry,
    descriptor: &ConnectionDescriptor,
) -> Result<Box<dyn Session>, RetrievalError> {
    let unresolved = descriptor.unresolved_fields();
    if !unresolved.is_empty() {
        return Err(RetrievalError::Incomplete(unresolved.iter().map(|s| s.to_string()).collect()));
    }
    let adapter = adapters
        .get(&descriptor.storage_type)
        .ok_or_else(|| RetrievalError::UnsupportedType(descriptor.storage_type.clone()))?;
    adapter.connect(descriptor)
}

/// Renders a JSON value as the text a pattern is matched against. Arrays yield one text per element.
pub fn match_texts(value: &Value) -> Vec<&str> {
    match value {
        Value::String(s) => vec![s.as_str()],
        Value::Array(items) => items.iter().filter_map(Value::as_str).collect(),
        _ => Vec::new(),
    }
}
