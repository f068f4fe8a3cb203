use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use super::source::SourceTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    DockerCompose,
    /// A playbook: a list of plays.
    Ansible,
    /// A list of tasks, as found under `roles/*/tasks/`.
    AnsibleTasks,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IacDocument {
    pub path: String,
    pub dialect: Dialect,
    /// First document of the file; `Null` for unknown dialects.
    pub parsed: Value,
    /// Variables the document declares itself: play `vars` for playbooks,
    /// inline `${NAME:-default}` defaults for compose files.
    pub raw_variables: BTreeMap<String, String>,
    pub diagnostics: Vec<String>,
}

impl IacDocument {
    fn unknown(path: &str, diagnostics: Vec<String>) -> Self {
        Self {
            path: path.to_string(),
            dialect: Dialect::Unknown,
            parsed: Value::Null,
            raw_variables: BTreeMap::new(),
            diagnostics,
        }
    }
}

pub fn is_yaml_path(path: &str) -> bool {
    path.ends_with(".yml") || path.ends_with(".yaml")
}

/// Parses every YAML file of the tree and detects its dialect. Malformed files
/// become unknown documents carrying a diagnostic.
pub fn classify_documents(tree: &SourceTree) -> Vec<IacDocument> {
    tree.files
        .iter()
        .filter(|f| is_yaml_path(&f.path))
        .map(|f| match std::str::from_utf8(&f.content) {
            Ok(text) => classify_text(&f.path, text),
            Err(_) => IacDocument::unknown(&f.path, vec![format!("{}: not valid UTF-8", f.path)]),
        })
        .collect()
}

pub fn classify_text(path: &str, text: &str) -> IacDocument {
    let parsed = match first_document(text) {
        Ok(Some(v)) => v,
        Ok(None) => return IacDocument::unknown(path, Vec::new()),
        Err(e) => return IacDocument::unknown(path, vec![format!("{path}: YAML parse error: {e}")]),
    };
    let dialect = detect(&parsed);
    if dialect == Dialect::Unknown {
        return IacDocument::unknown(path, Vec::new());
    }
    let raw_variables = match dialect {
        Dialect::DockerCompose => compose_defaults(&parsed),
        Dialect::Ansible => play_vars(&parsed),
        _ => BTreeMap::new(),
    };
    IacDocument {
        path: path.to_string(),
        dialect,
        parsed,
        raw_variables,
        diagnostics: Vec::new(),
    }
}

/// Parses a YAML text and returns its first document, or `None` if empty.
pub fn first_document(text: &str) -> Result<Option<Value>, serde_yaml::Error> {
    // Catches panics from the parser on adversarial input; malformed YAML is data here.
    let parsed = std::panic::catch_unwind(|| -> Result<Option<Value>, serde_yaml::Error> {
        match serde_yaml::Deserializer::from_str(text).next() {
            Some(doc) => Value::deserialize(doc).map(Some),
            None => Ok(None),
        }
    });
    match parsed {
        Ok(Ok(Some(Value::Null))) => Ok(None),
        Ok(r) => r,
        Err(_) => Ok(None),
    }
}

const PLAY_KEYS: [&str; 4] = ["hosts", "tasks", "roles", "import_playbook"];

fn detect(doc: &Value) -> Dialect {
    match doc {
        Value::Mapping(m) if m.get("services").is_some_and(Value::is_mapping) => Dialect::DockerCompose,
        Value::Sequence(items) if !items.is_empty() && items.iter().all(Value::is_mapping) => {
            let is_play = |v: &Value| PLAY_KEYS.iter().any(|k| v.get(k).is_some());
            if items.iter().any(is_play) {
                Dialect::Ansible
            } else if items.iter().all(is_task) {
                Dialect::AnsibleTasks
            } else {
                Dialect::Unknown
            }
        }
        _ => Dialect::Unknown,
    }
}

/// Keywords a task may carry besides its module.
pub(crate) const TASK_KEYWORDS: &[&str] = &[
    "name", "when", "register", "become", "become_user", "tags", "vars", "loop", "with_items", "notify",
    "ignore_errors", "changed_when", "failed_when", "delegate_to", "environment", "no_log", "until", "retries",
    "delay", "args", "run_once", "rescue", "always", "block", "listen", "loop_control", "check_mode",
];

/// A task names a module (any non-keyword key) or groups tasks in a block.
fn is_task(v: &Value) -> bool {
    let Some(m) = v.as_mapping() else { return false };
    m.keys()
        .filter_map(Value::as_str)
        .any(|k| k == "block" || !TASK_KEYWORDS.contains(&k))
}

pub(crate) fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn play_vars(doc: &Value) -> BTreeMap<String, String> {
    let mut vars = BTreeMap::new();
    for play in doc.as_sequence().into_iter().flatten() {
        let Some(m) = play.get("vars").and_then(Value::as_mapping) else { continue };
        for (k, v) in m {
            if let (Some(k), Some(v)) = (k.as_str(), scalar_string(v)) {
                vars.entry(k.to_string()).or_insert(v);
            }
        }
    }
    vars
}

/// Inline `${NAME:-default}` / `${NAME-default}` defaults anywhere in the file.
fn compose_defaults(doc: &Value) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    visit_strings(doc, &mut |s| {
        for (name, default) in super::variables::inline_defaults(s) {
            out.entry(name).or_insert(default);
        }
    });
    out
}

fn visit_strings(v: &Value, f: &mut dyn FnMut(&str)) {
    match v {
        Value::String(s) => f(s),
        Value::Sequence(items) => items.iter().for_each(|i| visit_strings(i, f)),
        Value::Mapping(m) => m.values().for_each(|i| visit_strings(i, f)),
        Value::Tagged(t) => visit_strings(&t.value, f),
        _ => {}
    }
}
