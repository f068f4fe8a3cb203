use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::secret::Secret;

const UNRESOLVED: &str = "UNRESOLVED";

/// A descriptor field: a value, a marker that it could not be resolved, or not
/// applicable for this storage type (e.g. no credentials configured at all).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Field<T> {
    Value(T),
    Unresolved,
    NotApplicable,
}

impl<T> Field<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Self::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_unresolved(&self) -> bool {
        matches!(self, Self::Unresolved)
    }
}

impl<T: Serialize> Serialize for Field<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => v.serialize(s),
            Self::Unresolved => s.serialize_str(UNRESOLVED),
            Self::NotApplicable => s.serialize_none(),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Field<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(d)?;
        match raw {
            serde_json::Value::Null => Ok(Self::NotApplicable),
            serde_json::Value::String(ref s) if s == UNRESOLVED => Ok(Self::Unresolved),
            other => T::deserialize(other).map(Self::Value).map_err(serde::de::Error::custom),
        }
    }
}

/// Where a descriptor was found: the source tree, the file within it and a
/// locator inside the document (`services.db`, `plays[0].tasks[2]`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DescriptorSource {
    pub origin: String,
    pub file: String,
    pub locator: String,
}

impl DescriptorSource {
    pub fn new(origin: impl Into<String>, file: impl Into<String>, locator: impl Into<String>) -> Self {
        Self {
            origin: origin.into(),
            file: file.into(),
            locator: locator.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionDescriptor {
    /// Stable across runs: see [`storage_id`].
    pub id: String,
    pub storage_type: String,
    pub host: Field<String>,
    pub port: Field<u16>,
    pub database: Field<String>,
    pub username: Field<String>,
    pub password: Field<Secret>,
    pub source: DescriptorSource,
    /// Field name → where its value came from.
    pub provenance: BTreeMap<String, String>,
}

pub const DESCRIPTOR_FIELDS: [&str; 5] = ["host", "port", "database", "username", "password"];

/// `sha256(origin/file, storage type, host key)`, hex, first 16 characters.
pub fn storage_id(source: &DescriptorSource, storage_type: &str, host_key: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(source.origin.as_bytes());
    hasher.update(b"/");
    hasher.update(source.file.as_bytes());
    hasher.update(b"\0");
    hasher.update(storage_type.as_bytes());
    hasher.update(b"\0");
    hasher.update(host_key.as_bytes());
    hex::encode(hasher.finalize())[..16].to_string()
}

impl ConnectionDescriptor {
    /// An all-unresolved descriptor whose id is derived from `host_key`.
    pub fn new(storage_type: impl Into<String>, source: DescriptorSource, host_key: &str) -> Self {
        let storage_type = storage_type.into();
        Self {
            id: storage_id(&source, &storage_type, host_key),
            storage_type,
            host: Field::Unresolved,
            port: Field::Unresolved,
            database: Field::Unresolved,
            username: Field::Unresolved,
            password: Field::Unresolved,
            source,
            provenance: BTreeMap::new(),
        }
    }

    pub fn unresolved_fields(&self) -> Vec<&'static str> {
        let flags = [
            self.host.is_unresolved(),
            self.port.is_unresolved(),
            self.database.is_unresolved(),
            self.username.is_unresolved(),
            self.password.is_unresolved(),
        ];
        DESCRIPTOR_FIELDS
            .iter()
            .zip(flags)
            .filter_map(|(name, unresolved)| unresolved.then_some(*name))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.unresolved_fields().is_empty()
    }

    /// Presence marker for reports: `"present"`, `"UNRESOLVED"` or null.
    pub fn password_status(&self) -> serde_json::Value {
        match &self.password {
            Field::Value(_) => serde_json::Value::String("present".into()),
            Field::Unresolved => serde_json::Value::String(UNRESOLVED.into()),
            Field::NotApplicable => serde_json::Value::Null,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    id: String,
    storage_type: String,
    host: Field<String>,
    port: Field<u16>,
    database: Field<String>,
    username: Field<String>,
    password: Field<Secret>,
    #[serde(default, skip_deserializing)]
    complete: bool,
    source: DescriptorSource,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

impl Serialize for ConnectionDescriptor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Wire {
            id: self.id.clone(),
            storage_type: self.storage_type.clone(),
            host: self.host.clone(),
            port: self.port.clone(),
            database: self.database.clone(),
            username: self.username.clone(),
            password: self.password.clone(),
            complete: self.is_complete(),
            source: self.source.clone(),
            provenance: self.provenance.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConnectionDescriptor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = Wire::deserialize(d)?;
        Ok(Self {
            id: w.id,
            storage_type: w.storage_type,
            host: w.host,
            port: w.port,
            database: w.database,
            username: w.username,
            password: w.password,
            source: w.source,
            provenance: w.provenance,
        })
    }
}
