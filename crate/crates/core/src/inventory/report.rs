use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::store::{ExecutionState, PortionStatus, ReportPortion, Stage, Trigger};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub schema: u32,
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
    pub summary: ReportSummary,
    pub portions: Vec<ReportPortion>,
}

impl DiscoveryReport {
    /// The exported form: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn is_terminal(&self) -> bool {
        self.state != ExecutionState::Running
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StorageState {
    Pending,
    Analyzed,
    ManualInteraction,
    Excluded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionSummary {
    pub collection: String,
    pub n: u64,
    pub data_matches: u64,
    pub alpha: u8,
    pub beta: f64,
    pub t: f64,
    pub personal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSummary {
    pub storage_id: String,
    pub storage_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Value>,
    pub complete: bool,
    pub unresolved: Vec<String>,
    pub state: StorageState,
    pub manual_interaction: bool,
    pub personal: bool,
    pub collections: Vec<CollectionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub task_id: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_id: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub headline: String,
    pub storage_count: usize,
    pub incomplete_storages: usize,
    pub collections_analyzed: usize,
    pub personal_collections: usize,
    pub storages: Vec<StorageSummary>,
    /// Results of submitted documents.
    pub documents: Vec<CollectionSummary>,
    pub failures: Vec<FailureSummary>,
    pub notes: Vec<String>,
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

fn collection_summary(result: &Value) -> Option<CollectionSummary> {
    Some(CollectionSummary {
        collection: result.pointer("/collection/collection")?.as_str()?.to_string(),
        n: result.get("n")?.as_u64()?,
        data_matches: result.get("data_matches")?.as_u64()?,
        alpha: result.get("alpha")?.as_u64()? as u8,
        beta: result.get("beta")?.as_f64()?,
        t: result.get("t")?.as_f64()?,
        personal: result.get("personal")?.as_bool()?,
    })
}

fn blank_storage(id: &str, storage_type: &str) -> StorageSummary {
    StorageSummary {
        storage_id: id.to_string(),
        storage_type: storage_type.to_string(),
        source: None,
        complete: true,
        unresolved: Vec::new(),
        state: StorageState::Pending,
        manual_interaction: false,
        personal: false,
        collections: Vec::new(),
    }
}

/// Recomputes the summary from portions alone.
///
/// Payload conventions: a `storages` array lists discovered storages; `storage_id`
/// ties a portion to one storage; `result` holds a classification; `notes` and
/// `error` carry free text.
pub fn summarize(portions: &[ReportPortion]) -> ReportSummary {
    let mut storages: BTreeMap<String, StorageSummary> = BTreeMap::new();
    let mut summary = ReportSummary::default();
    let mut failed = BTreeMap::new();
    for p in portions {
        let payload = &p.payload;
        if let Some(list) = payload.get("storages").and_then(Value::as_array) {
            for s in list {
                let Some(id) = str_field(s, "id") else { continue };
                let entry = storages
                    .entry(id.to_string())
                    .or_insert_with(|| blank_storage(id, str_field(s, "storage_type").unwrap_or("unknown")));
                entry.source = s.get("source").cloned();
                entry.complete = s.get("complete").and_then(Value::as_bool).unwrap_or(false);
                entry.unresolved = s
                    .get("unresolved")
                    .and_then(Value::as_array)
                    .map(|u| u.iter().filter_map(Value::as_str).map(str::to_string).collect())
                    .unwrap_or_default();
            }
        }
        for note in payload.get("notes").and_then(Value::as_array).into_iter().flatten() {
            if let Some(n) = note.as_str() {
                if !summary.notes.iter().any(|x| x == n) {
                    summary.notes.push(n.to_string());
                }
            }
        }
        let storage_id = str_field(payload, "storage_id");
        if p.status == PortionStatus::Failed {
            summary.failures.push(FailureSummary {
                task_id: p.task_id.clone(),
                stage: p.stage,
                storage_id: storage_id.map(str::to_string),
                error: str_field(payload, "error").unwrap_or("failed").to_string(),
            });
        }
        let result = payload.get("result").and_then(collection_summary);
        if p.stage == Stage::Api {
            summary.documents.extend(result);
            continue;
        }
        let Some(id) = storage_id else { continue };
        let entry = storages
            .entry(id.to_string())
            .or_insert_with(|| blank_storage(id, str_field(payload, "storage_type").unwrap_or("unknown")));
        match (p.stage, p.status) {
            (_, PortionStatus::Failed) => {
                failed.insert(id.to_string(), ());
            }
            (Stage::Retrieval, PortionStatus::Skipped) => entry.state = StorageState::Excluded,
            (Stage::Retrieval, PortionStatus::ManualInteraction) => entry.state = StorageState::ManualInteraction,
            (Stage::Retrieval, PortionStatus::Succeeded) if entry.state == StorageState::Pending => {
                entry.state = StorageState::Analyzed
            }
            _ => {}
        }
        if let Some(c) = result {
            entry.personal |= c.personal;
            entry.collections.push(c);
        }
    }
    for (id, entry) in &mut storages {
        if failed.contains_key(id) && entry.state != StorageState::Excluded {
            entry.state = StorageState::Failed;
        }
        entry.manual_interaction = matches!(entry.state, StorageState::Failed | StorageState::ManualInteraction);
        entry.collections.sort_by(|a, b| a.collection.cmp(&b.collection));
    }
    summary.storages = storages.into_values().collect();
    summary.storage_count = summary.storages.len();
    summary.incomplete_storages = summary.storages.iter().filter(|s| !s.complete).count();
    let collections = summary.storages.iter().flat_map(|s| &s.collections).chain(&summary.documents);
    let (analyzed, personal) = collections.fold((0, 0), |(a, p), c| (a + 1, p + usize::from(c.personal)));
    summary.collections_analyzed = analyzed;
    summary.personal_collections = personal;
    summary.headline = headline(&summary);
    summary
}

fn headline(s: &ReportSummary) -> String {
    let plural = |n: usize, word: &str| format!("{n} {word}{}", if n == 1 { "" } else { "s" });
    let mut parts = Vec::new();
    if s.documents.is_empty() || s.storage_count > 0 {
        parts.push(plural(s.storage_count, "storage"));
    }
    if !s.documents.is_empty() {
        parts.push(plural(s.documents.len(), "document"));
    }
    if s.collections_analyzed > 0 {
        parts.push(format!(
            "{} of {} with personal data",
            s.personal_collections,
            plural(s.collections_analyzed, "collection")
        ));
    }
    let manual = s.storages.iter().filter(|x| x.manual_interaction).count();
    if manual > 0 {
        parts.push(format!("{manual} need manual interaction"));
    }
    if !s.failures.is_empty() {
        parts.push(plural(s.failures.len(), "failure"));
    }
    parts.join(", ")
}
