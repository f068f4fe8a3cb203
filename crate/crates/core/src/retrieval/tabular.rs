//! File-backed storage: a directory whose `*.csv` and `*.jsonl` files are collections.
//!
//! An optional `<stem>.schema.json` next to a data file declares column types
//! and the primary key:
//!
//! ```json
//! {"primary_key": "id", "types": {"client_addr": "inet"}}
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use super::{
    AttributeMeta, Capabilities, CollectionProfile, Entity, InPlaceMatch, RetrievalError, SamplingConfig,
    Session, StorageAdapter,
};
use crate::analysis::CompiledPattern;
use crate::codeanalysis::{ConnectionDescriptor, Field};

pub const STORAGE_TYPE: &str = "tabular";

#[derive(Debug, Clone, Default)]
pub struct TabularAdapter {
    in_place: bool,
}

impl TabularAdapter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Emulates engine-side matching by scanning whole files. Off by default:
    /// files have no engine, so a full scan costs the same as sampling everything.
    pub fn with_in_place(mut self, enabled: bool) -> Self {
        self.in_place = enabled;
        self
    }
}

impl StorageAdapter for TabularAdapter {
    fn storage_type(&self) -> &str {
        STORAGE_TYPE
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            in_place_regex: self.in_place,
            exact_count: true,
        }
    }

    fn connect(&self, descriptor: &ConnectionDescriptor) -> Result<Box<dyn Session>, RetrievalError> {
        let Field::Value(dir) = &descriptor.host else {
            return Err(RetrievalError::Connect("tabular storage needs a directory as host".into()));
        };
        let dir = PathBuf::from(dir);
        if !dir.is_dir() {
            return Err(RetrievalError::Connect(format!("{} is not a directory", dir.display())));
        }
        Ok(Box::new(TabularSession {
            storage_ref: descriptor.id.clone(),
            dir,
            capabilities: self.capabilities(),
        }))
    }
}

pub struct TabularSession {
    storage_ref: String,
    dir: PathBuf,
    capabilities: Capabilities,
}

#[derive(Debug, Default, Deserialize)]
struct Schema {
    #[serde(default)]
    primary_key: Option<String>,
    #[serde(default)]
    types: BTreeMap<String, String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    JsonLines,
}

impl TabularSession {
    fn locate(&self, collection: &str) -> Result<(PathBuf, Format), RetrievalError> {
        let format = match Path::new(collection).extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            Some("jsonl") => Format::JsonLines,
            _ => return Err(RetrievalError::NotFound(collection.to_string())),
        };
        if collection.contains('/') || collection.contains('\\') {
            return Err(RetrievalError::NotFound(collection.to_string()));
        }
        let path = self.dir.join(collection);
        if !path.is_file() {
            return Err(RetrievalError::NotFound(collection.to_string()));
        }
        Ok((path, format))
    }

    fn schema(&self, data_file: &Path) -> Result<Schema, RetrievalError> {
        let path = data_file.with_extension("schema.json");
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| RetrievalError::Query(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Schema::default()),
            Err(e) => Err(io_error(&path, e)),
        }
    }

    /// Visits every entity in file order; `visit` returns false to stop early.
    fn scan(
        &self,
        path: &Path,
        format: Format,
        primary_key: Option<&str>,
        mut visit: impl FnMut(u64, &dyn Fn() -> String, &dyn Fn(&str) -> Option<Value>) -> bool,
    ) -> Result<(), RetrievalError> {
        let file = File::open(path).map_err(|e| io_error(path, e))?;
        match format {
            Format::Csv => {
                let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
                let headers = reader
                    .headers()
                    .map_err(|e| RetrievalError::Query(format!("{}: {e}", path.display())))?
                    .clone();
                let pk_index = primary_key.and_then(|pk| headers.iter().position(|h| h == pk));
                let mut record = csv::StringRecord::new();
                let mut row = 0u64;
                while reader
                    .read_record(&mut record)
                    .map_err(|e| RetrievalError::Query(format!("{}: {e}", path.display())))?
                {
                    row += 1;
                    let reference = || match pk_index.and_then(|i| record.get(i)) {
                        Some(pk) => pk.to_string(),
                        None => format!("row:{row}"),
                    };
                    let value = |attr: &str| {
                        headers
                            .iter()
                            .position(|h| h == attr)
                            .and_then(|i| record.get(i))
                            .map(|v| Value::String(v.to_string()))
                    };
                    if !visit(row, &reference, &value) {
                        break;
                    }
                }
            }
            Format::JsonLines => {
                let mut line_no = 0u64;
                let mut entity = 0u64;
                for line in BufReader::new(file).lines() {
                    let line = line.map_err(|e| io_error(path, e))?;
                    line_no += 1;
                    if line.trim().is_empty() {
                        continue;
                    }
                    entity += 1;
                    let object: serde_json::Map<String, Value> = serde_json::from_str(&line).map_err(|e| {
                        RetrievalError::Query(format!("{}:{line_no}: {e}", path.display()))
                    })?;
                    let reference = || jsonl_reference(&object, primary_key, line_no);
                    let flat = super::document::flatten(&Value::Object(object.clone()));
                    let value = |attr: &str| flat.get(attr).cloned();
                    if !visit(entity, &reference, &value) {
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

impl Session for TabularSession {
    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn list_collections(&mut self) -> Result<Vec<String>, RetrievalError> {
        let entries = std::fs::read_dir(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| io_error(&self.dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if (name.ends_with(".csv") || name.ends_with(".jsonl")) && entry.path().is_file() {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }

    fn profile(&mut self, collection: &str, sampling: &SamplingConfig) -> Result<CollectionProfile, RetrievalError> {
        let (path, format) = self.locate(collection)?;
        let schema = self.schema(&path)?;
        let pk = schema.primary_key.as_deref();

        let mut attribute_names: Vec<String> = Vec::new();
        let mut first_types: BTreeMap<String, String> = BTreeMap::new();
        if format == Format::Csv {
            let mut reader = csv::Reader::from_path(&path).map_err(|e| RetrievalError::Query(e.to_string()))?;
            let headers = reader.headers().map_err(|e| RetrievalError::Query(e.to_string()))?;
            attribute_names = headers.iter().map(str::to_string).collect();
        }

        let mut sample = Vec::new();
        let mut count = 0u64;
        let limit = sampling.limit;
        if format == Format::Csv {
            self.scan(&path, format, pk, |n, reference, value| {
                count = n;
                if sample.len() < limit {
                    let values = attribute_names
                        .iter()
                        .filter_map(|a| value(a).map(|v| (a.clone(), v)))
                        .collect();
                    sample.push(Entity {
                        reference: reference(),
                        values,
                    });
                }
                true
            })?;
        } else {
            // Parse only the sampled head; the rest is counted line by line.
            let file = File::open(&path).map_err(|e| io_error(&path, e))?;
            let mut line_no = 0u64;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| io_error(&path, e))?;
                line_no += 1;
                if line.trim().is_empty() {
                    continue;
                }
                count += 1;
                if sample.len() >= limit {
                    continue;
                }
                let object: serde_json::Map<String, Value> = serde_json::from_str(&line)
                    .map_err(|e| RetrievalError::Query(format!("{}:{line_no}: {e}", path.display())))?;
                let reference = jsonl_reference(&object, pk, line_no);
                let values = super::document::flatten(&Value::Object(object));
                for (key, value) in &values {
                    if !attribute_names.contains(key) {
                        attribute_names.push(key.clone());
                    }
                    if !value.is_null() {
                        first_types
                            .entry(key.clone())
                            .or_insert_with(|| super::document::value_type(value).to_string());
                    }
                }
                sample.push(Entity { reference, values });
            }
        }

        let default_type = if format == Format::Csv { "text" } else { "null" };
        let attributes = attribute_names
            .iter()
            .map(|name| {
                let declared = schema
                    .types
                    .get(name)
                    .or_else(|| first_types.get(name))
                    .map(String::as_str)
                    .unwrap_or(default_type);
                AttributeMeta::new(name.clone(), declared)
            })
            .collect();

        Ok(CollectionProfile {
            storage_ref: self.storage_ref.clone(),
            collection: collection.to_string(),
            attributes,
            entity_count: count,
            count_estimated: false,
            primary_key: schema.primary_key.clone(),
            sample,
            sampling: sampling.clone(),
        })
    }

    fn count_matches(
        &mut self,
        collection: &str,
        attribute: &str,
        pattern: &CompiledPattern,
        reference_cap: usize,
    ) -> Result<InPlaceMatch, RetrievalError> {
        if !self.capabilities.in_place_regex {
            return Err(RetrievalError::InPlaceUnsupported);
        }
        let (path, format) = self.locate(collection)?;
        let schema = self.schema(&path)?;
        let mut result = InPlaceMatch::default();
        self.scan(&path, format, schema.primary_key.as_deref(), |_, reference, value| {
            let hit = value(attribute)
                .as_ref()
                .is_some_and(|v| super::match_texts(v).into_iter().any(|t| pattern.is_match(t)));
            if hit {
                result.count += 1;
                if result.references.len() < reference_cap {
                    result.references.push(reference());
                }
            }
            true
        })?;
        Ok(result)
    }
}

fn jsonl_reference(object: &serde_json::Map<String, Value>, primary_key: Option<&str>, line_no: u64) -> String {
    let key = primary_key.or(object.contains_key("_id").then_some("_id"));
    match key.and_then(|k| object.get(k)) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Object(o)) if o.get("$oid").is_some_and(Value::is_string) => {
            o["$oid"].as_str().unwrap_or_default().to_string()
        }
        Some(v @ Value::Number(_)) => v.to_string(),
        _ => format!("line:{line_no}"),
    }
}

fn io_error(path: &Path, e: io::Error) -> RetrievalError {
    match e.kind() {
        io::ErrorKind::PermissionDenied => RetrievalError::PermissionDenied(path.display().to_string()),
        io::ErrorKind::NotFound => RetrievalError::NotFound(path.display().to_string()),
        _ => RetrievalError::Query(format!("{}: {e}", path.display())),
    }
}
