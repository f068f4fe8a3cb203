use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::store::write_atomic;
use crate::codeanalysis::{storage_id, ConnectionDescriptor, DescriptorSource, Field, SourceOrigin};
use crate::secret::Secret;

pub const REACTIVATED_NOTE: &str = "previously deleted storage re-appeared";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryOrigin {
    Discovered,
    Manual,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryStatus {
    Active,
    Excluded,
    Deleted,
}

/// Manually supplied descriptor fields. Passwords are accepted only as
/// environment or file references so the registry never holds a credential.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub username: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password: Option<Secret>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Later values win field by field.
    pub fn merge(&mut self, newer: Overrides) {
        self.host = newer.host.or(self.host.take());
        self.port = newer.port.or(self.port.take());
        self.database = newer.database.or(self.database.take());
        self.username = newer.username.or(self.username.take());
        self.password = newer.password.or(self.password.take());
    }

    pub fn apply(&self, descriptor: &mut ConnectionDescriptor) {
        let mut applied = Vec::new();
        if let Some(v) = &self.host {
            descriptor.host = Field::Value(v.clone());
            applied.push("host");
        }
        if let Some(v) = self.port {
            descriptor.port = Field::Value(v);
            applied.push("port");
        }
        if let Some(v) = &self.database {
            descriptor.database = Field::Value(v.clone());
            applied.push("database");
        }
        if let Some(v) = &self.username {
            descriptor.username = Field::Value(v.clone());
            applied.push("username");
        }
        if let Some(v) = &self.password {
            descriptor.password = Field::Value(v.clone());
            applied.push("password");
        }
        for field in applied {
            descriptor.provenance.insert(field.to_string(), "registry override".to_string());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: String,
    /// `None` once deleted: the id stays as a tombstone.
    pub descriptor: Option<ConnectionDescriptor>,
    pub origin: EntryOrigin,
    pub status: EntryStatus,
    #[serde(default, skip_serializing_if = "Overrides::is_empty")]
    pub overrides: Overrides,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RegistryEntry {
    /// The stored descriptor with overrides applied.
    pub fn effective_descriptor(&self) -> Option<ConnectionDescriptor> {
        let mut d = self.descriptor.clone()?;
        self.overrides.apply(&mut d);
        Some(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repository {
    pub origin: SourceOrigin,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct RegistryData {
    #[serde(default)]
    repositories: Vec<Repository>,
    #[serde(default)]
    storages: BTreeMap<String, RegistryEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("storage '{0}' not found")]
    NotFound(String),
    #[error("storage '{0}' was deleted")]
    Deleted(String),
    #[error("{0}")]
    Invalid(String),
    #[error("registry {path}: {detail}")]
    Io { path: PathBuf, detail: String },
}

/// A storage as the next execution will see it.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveStorage {
    pub descriptor: ConnectionDescriptor,
    pub origin: EntryOrigin,
    pub status: EntryStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconciled {
    /// Ordered as discovered, then registry-only entries by id.
    pub storages: Vec<EffectiveStorage>,
    pub notes: Vec<String>,
}

/// Repositories and storages that outlive single executions, kept in one JSON file.
#[derive(Debug)]
pub struct Registry {
    path: PathBuf,
    data: RegistryData,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let data = match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| RegistryError::Io {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => RegistryData::default(),
            Err(e) => {
                return Err(RegistryError::Io {
                    path: path.to_path_buf(),
                    detail: e.to_string(),
                })
            }
        };
        Ok(Self {
            path: path.to_path_buf(),
            data,
        })
    }

    pub fn save(&self) -> Result<(), RegistryError> {
        let bytes = serde_json::to_vec_pretty(&self.data).expect("registry serializes");
        write_atomic(&self.path, &bytes).map_err(|e| RegistryError::Io {
            path: self.path.clone(),
            detail: e.to_string(),
        })
    }

    pub fn repositories(&self) -> &[Repository] {
        &self.data.repositories
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.data.storages.values()
    }

    pub fn get(&self, id: &str) -> Option<&RegistryEntry> {
        self.data.storages.get(id)
    }

    /// Returns false if the origin was already registered.
    pub fn register_repository(&mut self, origin: SourceOrigin) -> Result<bool, RegistryError> {
        if let SourceOrigin::GitRemote { uri, branch } = &origin {
            validate_repository(uri, branch)?;
        }
        if self.data.repositories.iter().any(|r| r.origin == origin) {
            return Ok(false);
        }
        self.data.repositories.push(Repository {
            origin,
            registered_at: Utc::now(),
        });
        Ok(true)
    }

    fn live_entry(&mut self, id: &str) -> Result<&mut RegistryEntry, RegistryError> {
        let entry = self
            .data
            .storages
            .get_mut(id)
            .ok_or_else(|| RegistryError::NotFound(id.to_string()))?;
        if entry.status == EntryStatus::Deleted {
            return Err(RegistryError::Deleted(id.to_string()));
        }
        Ok(entry)
    }

    pub fn complete_storage(&mut self, id: &str, overrides: Overrides) -> Result<&RegistryEntry, RegistryError> {
        check_password(&overrides)?;
        let entry = self.live_entry(id)?;
        entry.overrides.merge(overrides);
        Ok(entry)
    }

    /// Idempotent.
    pub fn exclude_storage(&mut self, id: &str) -> Result<&RegistryEntry, RegistryError> {
        let entry = self.live_entry(id)?;
        entry.status = EntryStatus::Excluded;
        Ok(entry)
    }

    pub fn include_storage(&mut self, id: &str) -> Result<&RegistryEntry, RegistryError> {
        let entry = self.live_entry(id)?;
        entry.status = EntryStatus::Active;
        Ok(entry)
    }

    /// Tombstones the entry: the id remains so that re-discovery is recognised.
    pub fn delete_storage(&mut self, id: &str) -> Result<(), RegistryError> {
        let entry = self
            .data
            .storages
            .get_mut(id)
            .ok_or_else(|| RegistryError::NotFound(id.to_string()))?;
        entry.status = EntryStatus::Deleted;
        entry.descriptor = None;
        entry.overrides = Overrides::default();
        Ok(())
    }

    /// Registers a storage that no code defines. Its id derives from `name`, type and host.
    pub fn add_storage(
        &mut self,
        origin: EntryOrigin,
        name: &str,
        storage_type: &str,
        overrides: Overrides,
    ) -> Result<&RegistryEntry, RegistryError> {
        check_password(&overrides)?;
        if name.trim().is_empty() {
            return Err(RegistryError::Invalid("storage name must not be empty".into()));
        }
        let Some(host) = overrides.host.clone() else {
            return Err(RegistryError::Invalid("a host is required".into()));
        };
        let label = match origin {
            EntryOrigin::External => "external",
            _ => "manual",
        };
        let source = DescriptorSource::new(label, "registry", name);
        let id = storage_id(&source, storage_type, &host);
        let mut descriptor = ConnectionDescriptor::new(storage_type, source, &host);
        // Nothing about an unlisted field is known; only the host is required to connect.
        descriptor.port = Field::NotApplicable;
        descriptor.database = Field::NotApplicable;
        descriptor.username = Field::NotApplicable;
        descriptor.password = Field::NotApplicable;
        overrides.apply(&mut descriptor);
        let entry = RegistryEntry {
            id: id.clone(),
            descriptor: Some(descriptor),
            origin,
            status: EntryStatus::Active,
            overrides: Overrides::default(),
            notes: Vec::new(),
        };
        self.data.storages.insert(id.clone(), entry);
        Ok(&self.data.storages[&id])
    }

    /// Merges freshly discovered descriptors into the registry and returns what
    /// the execution should process. `scanned` are the origin labels analyzed in
    /// this run: discovered entries of those origins that no longer appear are
    /// noted and left out.
    pub fn reconcile(&mut self, discovered: Vec<ConnectionDescriptor>, scanned: &BTreeSet<String>) -> Reconciled {
        let mut out = Reconciled::default();
        let mut seen = BTreeSet::new();
        for d in discovered {
            seen.insert(d.id.clone());
            let entry = self.data.storages.entry(d.id.clone()).or_insert_with(|| RegistryEntry {
                id: d.id.clone(),
                descriptor: None,
                origin: EntryOrigin::Discovered,
                status: EntryStatus::Active,
                overrides: Overrides::default(),
                notes: Vec::new(),
            });
            if entry.status == EntryStatus::Deleted {
                entry.status = EntryStatus::Active;
                let note = format!("{REACTIVATED_NOTE}: {}", d.id);
                entry.notes.push(format!("{}: {note}", Utc::now().format("%Y-%m-%dT%H:%M:%SZ")));
                out.notes.push(note);
            }
            let mut effective = d.clone();
            entry.overrides.apply(&mut effective);
            entry.descriptor = Some(d);
            out.storages.push(EffectiveStorage {
                descriptor: effective,
                origin: entry.origin,
                status: entry.status,
            });
        }
        for entry in self.data.storages.values() {
            if seen.contains(&entry.id) || entry.status == EntryStatus::Deleted {
                continue;
            }
            let Some(descriptor) = entry.effective_descriptor() else { continue };
            match entry.origin {
                EntryOrigin::Discovered => {
                    if scanned.contains(&descriptor.source.origin) {
                        out.notes.push(format!("storage {} is no longer defined in {}", entry.id, descriptor.source.file));
                    }
                }
                EntryOrigin::Manual | EntryOrigin::External => out.storages.push(EffectiveStorage {
                    descriptor,
                    origin: entry.origin,
                    status: entry.status,
                }),
            }
        }
        out
    }
}

fn check_password(overrides: &Overrides) -> Result<(), RegistryError> {
    match &overrides.password {
        Some(s) if !s.is_reference() => Err(RegistryError::Invalid(
            "passwords must be given as {\"env\": NAME} or {\"file\": PATH}".into(),
        )),
        _ => Ok(()),
    }
}

fn validate_repository(uri: &str, branch: &str) -> Result<(), RegistryError> {
    let invalid = |why: &str| Err(RegistryError::Invalid(format!("repository '{uri}': {why}")));
    if branch.trim().is_empty() || branch.starts_with('-') || branch.contains(char::is_whitespace) {
        return Err(RegistryError::Invalid(format!("invalid branch name '{branch}'")));
    }
    if uri.starts_with('-') || uri.contains(char::is_whitespace) {
        return invalid("malformed");
    }
    if let Ok(url) = url::Url::parse(uri) {
        return match url.scheme() {
            "https" | "http" | "ssh" | "git" | "file" if url.scheme() == "file" || url.host().is_some() => Ok(()),
            _ => invalid("unsupported scheme or missing host"),
        };
    }
    if uri.contains("://") {
        return invalid("malformed");
    }
    // scp-like `user@host:path`.
    match uri.split_once(':') {
        Some((host, path)) if !host.is_empty() && !path.is_empty() && !host.contains('/') => Ok(()),
        _ => invalid("malformed"),
    }
}
