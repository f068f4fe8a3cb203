use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::report::{summarize, DiscoveryReport, REPORT_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    CodeAnalysis,
    Retrieval,
    Analysis,
    Inventory,
    Api,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PortionStatus {
    Succeeded,
    Failed,
    Skipped,
    /// The step could not run without information a person has to supply.
    ManualInteraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPortion {
    pub execution_id: String,
    pub task_id: String,
    pub stage: Stage,
    pub status: PortionStatus,
    pub payload: Value,
    pub produced_at: DateTime<Utc>,
}

impl ReportPortion {
    pub fn new(execution_id: &str, task_id: impl Into<String>, stage: Stage, status: PortionStatus, payload: Value) -> Self {
        Self {
            execution_id: execution_id.to_string(),
            task_id: task_id.into(),
            stage,
            status,
            payload,
            produced_at: Utc::now(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    Manual,
    Schedule,
    Api,
    SourceChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionState {
    Running,
    Completed,
    /// The run itself broke down (invalid workflow, store failure); task failures do not count.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub execution_id: String,
    pub trigger: Trigger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identifier: Option<String>,
    pub started: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished: Option<DateTime<Utc>>,
    pub state: ExecutionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("execution '{0}' not found")]
    NotFound(String),
    #[error("portion {task_id} rejected: {reason}")]
    SchemaViolation { task_id: String, reason: String },
    #[error("inventory store: {path}: {detail}")]
    Io { path: PathBuf, detail: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Stored,
    /// A portion for this (execution, task) already exists; nothing was written.
    Duplicate,
}

/// Keys whose values could carry credentials.
const SECRET_KEYS: [&str; 3] = ["password", "passwd", "secret"];
/// Keys whose values could carry copied data.
const DATA_KEYS: [&str; 3] = ["sample", "raw_value", "values"];

/// Rejects payloads that could persist credentials or data values. Secret-like keys
/// may only hold presence markers; data-like keys may only hold numbers, booleans or null.
pub fn check_payload(payload: &Value) -> Result<(), String> {
    fn walk(path: &str, v: &Value) -> Result<(), String> {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    let key = k.to_ascii_lowercase();
                    if SECRET_KEYS.contains(&key.as_str()) {
                        let allowed = match child {
                            Value::String(s) => s == "present" || s == "UNRESOLVED",
                            Value::Null | Value::Bool(_) => true,
                            _ => false,
                        };
                        if !allowed {
                            return Err(format!("field '{here}' may only record presence"));
                        }
                    }
                    if DATA_KEYS.contains(&key.as_str())
                        && matches!(child, Value::String(_) | Value::Array(_) | Value::Object(_))
                    {
                        return Err(format!("field '{here}' would persist data values"));
                    }
                    walk(&here, child)?;
                }
                Ok(())
            }
            Value::Array(items) => items.iter().enumerate().try_for_each(|(i, c)| walk(&format!("{path}[{i}]"), c)),
            _ => Ok(()),
        }
    }
    walk("", payload)
}

/// `YYYYmmddTHHMMSSZ-<8 hex>`: sortable by start time, unique with overwhelming probability.
pub fn new_execution_id() -> String {
    let suffix: u32 = rand::thread_rng().gen();
    format!("{}-{suffix:08x}", Utc::now().format("%Y%m%dT%H%M%SZ"))
}

fn valid_execution_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Writes `content` to `path` through a temporary file in the same directory.
pub(crate) fn write_atomic(path: &Path, content: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(content).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// Embedded report store under a state directory:
///
/// - `portions/<execution-id>.jsonl`: append-only portions, one per line
/// - `executions.json`: execution index
/// - `reports/report-<execution-id>.json`: exported bundles
/// - `executions/<execution-id>.jsonl`: the workflow journal, written by the executor
pub struct InventoryStore {
    root: PathBuf,
    /// Task ids already stored, per execution.
    seen: Mutex<BTreeMap<String, BTreeSet<String>>>,
    index: Mutex<()>,
}

impl InventoryStore {
    pub fn open(state_dir: &Path) -> Result<Self, StoreError> {
        for sub in ["portions", "reports", "executions"] {
            let dir = state_dir.join(sub);
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self {
            root: state_dir.to_path_buf(),
            seen: Mutex::new(BTreeMap::new()),
            index: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn portions_path(&self, execution_id: &str) -> PathBuf {
        self.root.join("portions").join(format!("{execution_id}.jsonl"))
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("executions.json")
    }

    pub fn report_path(&self, execution_id: &str) -> PathBuf {
        self.root.join("reports").join(format!("report-{execution_id}.json"))
    }

    fn read_index(&self) -> Result<Vec<ExecutionRecord>, StoreError> {
        let path = self.index_path();
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Io {
                path,
                detail: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn update_index(&self, f: impl FnOnce(&mut Vec<ExecutionRecord>)) -> Result<(), StoreError> {
        let _guard = self.index.lock().unwrap_or_else(|e| e.into_inner());
        let mut records = self.read_index()?;
        f(&mut records);
        records.sort_by(|a, b| a.execution_id.cmp(&b.execution_id));
        let bytes = serde_json::to_vec_pretty(&records).expect("records serialize");
        write_atomic(&self.index_path(), &bytes)
    }

    pub fn begin_execution(&self, trigger: Trigger, identifier: Option<String>) -> Result<ExecutionRecord, StoreError> {
        let record = ExecutionRecord {
            execution_id: new_execution_id(),
            trigger,
            identifier,
            started: Utc::now(),
            finished: None,
            state: ExecutionState::Running,
            fault: None,
        };
        let stored = record.clone();
        self.update_index(move |records| records.push(stored))?;
        Ok(record)
    }

    pub fn finish_execution(&self, execution_id: &str, state: ExecutionState, fault: Option<String>) -> Result<(), StoreError> {
        let mut found = false;
        self.update_index(|records| {
            if let Some(r) = records.iter_mut().find(|r| r.execution_id == execution_id) {
                r.state = state;
                r.fault = fault;
                r.finished = Some(Utc::now());
                found = true;
            }
        })?;
        if found {
            Ok(())
        } else {
            Err(StoreError::NotFound(execution_id.to_string()))
        }
    }

    pub fn execution(&self, execution_id: &str) -> Result<ExecutionRecord, StoreError> {
        self.read_index()?
            .into_iter()
            .find(|r| r.execution_id == execution_id)
            .ok_or_else(|| StoreError::NotFound(execution_id.to_string()))
    }

    /// Newest first.
    pub fn executions(&self) -> Result<Vec<ExecutionRecord>, StoreError> {
        let mut records = self.read_index()?;
        records.sort_by(|a, b| b.started.cmp(&a.started).then_with(|| b.execution_id.cmp(&a.execution_id)));
        Ok(records)
    }

    /// Durable, idempotent append. Payloads failing [`check_payload`] are refused.
    pub fn append_portion(&self, portion: &ReportPortion) -> Result<AppendOutcome, StoreError> {
        if !valid_execution_id(&portion.execution_id) {
            return Err(StoreError::SchemaViolation {
                task_id: portion.task_id.clone(),
                reason: format!("invalid execution id '{}'", portion.execution_id),
            });
        }
        check_payload(&portion.payload).map_err(|reason| StoreError::SchemaViolation {
            task_id: portion.task_id.clone(),
            reason,
        })?;
        let mut seen = self.seen.lock().unwrap_or_else(|e| e.into_inner());
        if !seen.contains_key(&portion.execution_id) {
            let existing = self.read_portions(&portion.execution_id)?;
            seen.insert(
                portion.execution_id.clone(),
                existing.into_iter().map(|p| p.task_id).collect(),
            );
        }
        let ids = seen.get_mut(&portion.execution_id).expect("inserted above");
        if ids.contains(&portion.task_id) {
            return Ok(AppendOutcome::Duplicate);
        }
        let path = self.portions_path(&portion.execution_id);
        let mut line = serde_json::to_vec(portion).expect("portion serializes");
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        file.write_all(&line).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))?;
        ids.insert(portion.task_id.clone());
        Ok(AppendOutcome::Stored)
    }

    fn read_portions(&self, execution_id: &str) -> Result<Vec<ReportPortion>, StoreError> {
        let path = self.portions_path(execution_id);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut portions = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            // A torn last line from a crash mid-append is ignored.
            if let Ok(p) = serde_json::from_str(&line) {
                portions.push(p);
            }
        }
        Ok(portions)
    }

    /// Portions in append order.
    pub fn portions(&self, execution_id: &str) -> Result<Vec<ReportPortion>, StoreError> {
        self.execution(execution_id)?;
        self.read_portions(execution_id)
    }

    /// The bundle of an execution with its summary recomputed from the portions.
    pub fn get_report(&self, execution_id: &str) -> Result<DiscoveryReport, StoreError> {
        let record = self.execution(execution_id)?;
        let portions = self.read_portions(execution_id)?;
        Ok(DiscoveryReport {
            schema: REPORT_SCHEMA,
            summary: summarize(&portions),
            execution_id: record.execution_id,
            trigger: record.trigger,
            identifier: record.identifier,
            started: record.started,
            finished: record.finished,
            state: record.state,
            fault: record.fault,
            portions,
        })
    }

    /// Writes `reports/report-<id>.json`; the bytes equal [`DiscoveryReport::to_json`].
    pub fn export_report(&self, execution_id: &str) -> Result<PathBuf, StoreError> {
        let report = self.get_report(execution_id)?;
        let path = self.report_path(execution_id);
        write_atomic(&path, report.to_json().as_bytes())?;
        Ok(path)
    }

    /// Removes executions that started before `cutoff`. Returns the removed ids.
    pub fn prune(&self, cutoff: DateTime<Utc>) -> Result<Vec<String>, StoreError> {
        let mut removed = Vec::new();
        self.update_index(|records| {
            records.retain(|r| {
                let keep = r.started >= cutoff || r.state == ExecutionState::Running;
                if !keep {
                    removed.push(r.execution_id.clone());
                }
                keep
            })
        })?;
        let mut seen = self.seen.lock().unwrap_or_else(|e| e.into_inner());
        for id in &removed {
            seen.remove(id);
            for path in [
                self.portions_path(id),
                self.report_path(id),
                self.root.join("executions").join(format!("{id}.jsonl")),
            ] {
                match std::fs::remove_file(&path) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                    Err(e) => return Err(io_err(&path)(e)),
                }
            }
        }
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn store() -> (tempfile::TempDir, InventoryStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = InventoryStore::open(dir.path()).unwrap();
        (dir, store)
    }

    #[test]
    fn execution_ids_sort_by_time() {
        let id = new_execution_id();
        assert_eq!(id.len(), "20260101T000000Z-0123abcd".len());
        assert!(id.as_bytes()[8] == b'T' && id.as_bytes()[15] == b'Z');
    }

    #[test]
    fn appends_are_idempotent() {
        let (_dir, store) = store();
        let e = store.begin_execution(Trigger::Manual, None).unwrap();
        let p = ReportPortion::new(&e.execution_id, "t1", Stage::Inventory, PortionStatus::Succeeded, json!({"n": 1}));
        assert_eq!(store.append_portion(&p).unwrap(), AppendOutcome::Stored);
        assert_eq!(store.append_portion(&p).unwrap(), AppendOutcome::Duplicate);
        let reopened = InventoryStore::open(store.root()).unwrap();
        assert_eq!(reopened.append_portion(&p).unwrap(), AppendOutcome::Duplicate);
        assert_eq!(store.portions(&e.execution_id).unwrap().len(), 1);
    }

    #[test]
    fn deny_list() {
        assert!(check_payload(&json!({"descriptor": {"password": "present", "username": "UNRESOLVED"}})).is_ok());
        assert!(check_payload(&json!({"descriptor": {"password": "hunter2"}})).is_err());
        assert!(check_payload(&json!({"password": {"env": "X"}})).is_err());
        assert!(check_payload(&json!({"list": [{"Secret": "x"}]})).is_err());
        assert!(check_payload(&json!({"sample": ["10.0.0.1"]})).is_err());
        assert!(check_payload(&json!({"sample": 10000})).is_ok());
        let (_dir, store) = store();
        let e = store.begin_execution(Trigger::Manual, None).unwrap();
        let p = ReportPortion::new(&e.execution_id, "t", Stage::Retrieval, PortionStatus::Succeeded, json!({"password": "x"}));
        assert!(matches!(store.append_portion(&p), Err(StoreError::SchemaViolation { .. })));
        assert!(store.portions(&e.execution_id).unwrap().is_empty());
    }

    #[test]
    fn unknown_execution_is_not_found() {
        let (_dir, store) = store();
        assert!(matches!(store.get_report("20260101T000000Z-00000000"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn export_matches_report_serialization() {
        let (_dir, store) = store();
        let e = store.begin_execution(Trigger::Api, Some("doc".into())).unwrap();
        store.finish_execution(&e.execution_id, ExecutionState::Completed, None).unwrap();
        let path = store.export_report(&e.execution_id).unwrap();
        let report = store.get_report(&e.execution_id).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), report.to_json());
        assert_eq!(report.schema, 1);
    }

    #[test]
    fn prune_removes_old_executions() {
        let (_dir, store) = store();
        let e = store.begin_execution(Trigger::Manual, None).unwrap();
        store.finish_execution(&e.execution_id, ExecutionState::Completed, None).unwrap();
        store.export_report(&e.execution_id).unwrap();
        assert!(store.prune(Utc::now() - chrono::Duration::days(1)).unwrap().is_empty());
        let removed = store.prune(Utc::now() + chrono::Duration::seconds(1)).unwrap();
        assert_eq!(removed, [e.execution_id.clone()]);
        assert!(!store.report_path(&e.execution_id).exists());
        assert!(store.executions().unwrap().is_empty());
    }
}
