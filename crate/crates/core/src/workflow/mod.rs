//! In-process DAG workflow runtime.
//!
//! A [`DagSpec`] describes tasks and their dependency edges. The
//! [`Executor`] runs a validated spec on a bounded worker pool, honouring
//! four task kinds:
//!
//! - `Function`: runs a registered operator.
//! - `BranchSelector`: picks exactly one downstream branch; the others are skipped.
//! - `FanOutTemplate`: its operator yields items and the runtime instantiates the
//!   declared sub-graph template once per item, wired in front of the template's join.
//! - `Join`: runs once all upstreams are terminal, with whatever subset succeeded.
//!
//! Any other task whose upstream failed or was skipped is skipped itself.

mod branch;
mod engine;
mod fanout;
mod journal;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use branch::{select_branch, BranchError};
pub use engine::{
    Artifact, ExecuteError, ExecutionContext, ExecutionObserver, ExecutionOutcome, Executor, FanOutItem,
    MissingInput, Operator, OperatorRegistry, TaskError, TaskInput, TaskOutput,
};
pub use fanout::{expand_fan_out, instance_id, FanOutError};
pub use journal::{read_journal, Journal};

pub type TaskId = String;

/// Default retry policy: one retry after a fixed one second pause.
pub const DEFAULT_RETRY_LIMIT: u32 = 1;
pub const DEFAULT_BACKOFF: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Function,
    BranchSelector,
    FanOutTemplate,
    Join,
}

/// Sub-graph instantiated once per fan-out item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphTemplate {
    pub tasks: Vec<TaskSpec>,
    pub edges: Vec<(TaskId, TaskId)>,
    /// Task that every instantiated sub-graph feeds into. For top-level fan-outs
    /// this is a task of the enclosing DAG; for nested fan-outs a task of the
    /// enclosing template.
    pub join: TaskId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub kind: TaskKind,
    /// Name of the operator in the [`OperatorRegistry`]. Branch selectors may
    /// omit it and use the built-in payload evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    #[serde(default)]
    pub payload: Value,
    pub retry_limit: u32,
    #[serde(with = "duration_millis")]
    pub backoff: Duration,
    pub idempotency_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<SubgraphTemplate>,
    /// Permits a task without any edges in a multi-task DAG.
    #[serde(default)]
    pub standalone: bool,
}

impl TaskSpec {
    fn new(id: impl Into<String>, kind: TaskKind, operator: Option<String>) -> Self {
        let id = id.into();
        Self {
            idempotency_key: id.clone(),
            id,
            kind,
            operator,
            payload: Value::Null,
            retry_limit: DEFAULT_RETRY_LIMIT,
            backoff: DEFAULT_BACKOFF,
            template: None,
            standalone: false,
        }
    }

    pub fn function(id: impl Into<String>, operator: impl Into<String>) -> Self {
        Self::new(id, TaskKind::Function, Some(operator.into()))
    }

    pub fn join(id: impl Into<String>, operator: impl Into<String>) -> Self {
        Self::new(id, TaskKind::Join, Some(operator.into()))
    }

    /// Selector evaluated by [`select_branch`] against the payload.
    pub fn branch_selector(id: impl Into<String>, payload: Value) -> Self {
        let mut spec = Self::new(id, TaskKind::BranchSelector, None);
        spec.payload = payload;
        spec
    }

    pub fn fan_out(
        id: impl Into<String>,
        operator: impl Into<String>,
        template: SubgraphTemplate,
    ) -> Self {
        let mut spec = Self::new(id, TaskKind::FanOutTemplate, Some(operator.into()));
        spec.template = Some(template);
        spec
    }

    pub fn with_payload(mut self, payload: Value) -> Self {
        self.payload = payload;
        self
    }

    pub fn with_retry(mut self, retry_limit: u32, backoff: Duration) -> Self {
        self.retry_limit = retry_limit;
        self.backoff = backoff;
        self
    }

    pub fn standalone(mut self) -> Self {
        self.standalone = true;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DagSpec {
    pub id: String,
    pub tasks: BTreeMap<TaskId, TaskSpec>,
    pub edges: BTreeSet<(TaskId, TaskId)>,
}

impl DagSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..Self::default()
        }
    }

    pub fn task(mut self, spec: TaskSpec) -> Self {
        self.tasks.insert(spec.id.clone(), spec);
        self
    }

    pub fn edge(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.edges.insert((from.into(), to.into()));
        self
    }

    pub fn downstream(&self, id: &str) -> Vec<&TaskId> {
        self.edges
            .iter()
            .filter(|(from, _)| from == id)
            .map(|(_, to)| to)
            .collect()
    }

    pub fn upstream(&self, id: &str) -> Vec<&TaskId> {
        self.edges
            .iter()
            .filter(|(_, to)| to == id)
            .map(|(from, _)| from)
            .collect()
    }

    /// Task ids in a deterministic topological order (Kahn, lexicographic ties).
    /// Returns `None` when the edge relation has a cycle.
    pub fn topological_order(&self) -> Option<Vec<TaskId>> {
        let mut indegree: BTreeMap<&str, usize> =
            self.tasks.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, to) in &self.edges {
            *indegree.entry(to.as_str()).or_default() += 1;
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(next) = ready.pop_first() {
            order.push(next.to_string());
            for (from, to) in &self.edges {
                if from == next {
                    let d = indegree.get_mut(to.as_str()).expect("edge target");
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(to.as_str());
                    }
                }
            }
        }
        (order.len() == indegree.len()).then_some(order)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    KeyMismatch { key: TaskId, id: TaskId },
    UnknownEndpoint { from: TaskId, to: TaskId, missing: TaskId },
    Cycle(Vec<TaskId>),
    Orphan(TaskId),
    SelectorFanOut { task: TaskId, downstream: usize },
    MissingTemplate(TaskId),
    TemplateJoinNotDownstream { task: TaskId, join: TaskId },
    Template { task: TaskId, violation: Box<Violation> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::KeyMismatch { key, id } => {
                write!(f, "task stored under key '{key}' declares id '{id}'")
            }
            Violation::UnknownEndpoint { from, to, missing } => {
                write!(f, "edge {from}→{to} references unknown task '{missing}'")
            }
            Violation::Cycle(path) => write!(f, "cycle: {}", path.join("→")),
            Violation::Orphan(task) => write!(f, "orphan task '{task}' has no edges"),
            Violation::SelectorFanOut { task, downstream } => write!(
                f,
                "branch selector '{task}' needs at least 2 downstream branches, has {downstream}"
            ),
            Violation::MissingTemplate(task) => {
                write!(f, "fan-out task '{task}' declares no sub-graph template")
            }
            Violation::TemplateJoinNotDownstream { task, join } => write!(
                f,
                "fan-out task '{task}' joins into '{join}', which is not a direct downstream"
            ),
            Violation::Template { task, violation } => {
                write!(f, "template of '{task}': {violation}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Checks every structural invariant of a DAG. Violations are returned as data.
pub fn validate_dag(spec: &DagSpec) -> ValidationReport {
    let mut violations = Vec::new();
    validate_graph(&spec.tasks, &spec.edges, &mut violations);
    ValidationReport { violations }
}

fn validate_graph(
    tasks: &BTreeMap<TaskId, TaskSpec>,
    edges: &BTreeSet<(TaskId, TaskId)>,
    out: &mut Vec<Violation>,
) {
    for (key, task) in tasks {
        if key != &task.id {
            out.push(Violation::KeyMismatch {
                key: key.clone(),
                id: task.id.clone(),
            });
        }
    }

    let mut dangling = false;
    for (from, to) in edges {
        for endpoint in [from, to] {
            if !tasks.contains_key(endpoint) {
                dangling = true;
                out.push(Violation::UnknownEndpoint {
                    from: from.clone(),
                    to: to.clone(),
                    missing: endpoint.clone(),
                });
            }
        }
    }

    if !dangling {
        if let Some(cycle) = find_cycle(tasks, edges) {
            out.push(Violation::Cycle(cycle));
        }
    }

    if tasks.len() > 1 {
        for (id, task) in tasks {
            let touched = edges.iter().any(|(a, b)| a == id || b == id);
            if !touched && !task.standalone {
                out.push(Violation::Orphan(id.clone()));
            }
        }
    }

    for (id, task) in tasks {
        let downstream: Vec<&TaskId> = edges
            .iter()
            .filter(|(from, _)| from == id)
            .map(|(_, to)| to)
            .collect();
        match task.kind {
            TaskKind::BranchSelector if downstream.len() < 2 => {
                out.push(Violation::SelectorFanOut {
                    task: id.clone(),
                    downstream: downstream.len(),
                });
            }
            TaskKind::FanOutTemplate => match &task.template {
                None => out.push(Violation::MissingTemplate(id.clone())),
                Some(template) => {
                    if !downstream.contains(&&template.join) {
                        out.push(Violation::TemplateJoinNotDownstream {
                            task: id.clone(),
                            join: template.join.clone(),
                        });
                    }
                    validate_template(id, template, out);
                }
            },
            _ => {}
        }
    }
}

fn validate_template(owner: &str, template: &SubgraphTemplate, out: &mut Vec<Violation>) {
    let tasks: BTreeMap<TaskId, TaskSpec> = template
        .tasks
        .iter()
        .map(|t| (t.id.clone(), t.clone()))
        .collect();
    let edges: BTreeSet<(TaskId, TaskId)> = template.edges.iter().cloned().collect();
    let mut inner = Vec::new();
    validate_graph(&tasks, &edges, &mut inner);
    out.extend(inner.into_iter().map(|v| Violation::Template {
        task: owner.to_string(),
        violation: Box::new(v),
    }));
}

/// Depth-first search for a cycle; returns the closed path, e.g. `[a, b, a]`.
fn find_cycle(
    tasks: &BTreeMap<TaskId, TaskSpec>,
    edges: &BTreeSet<(TaskId, TaskId)>,
) -> Option<Vec<TaskId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in edges {
        adjacency.entry(from).or_default().push(to);
    }
    let mut marks: BTreeMap<&str, Mark> = tasks.keys().map(|k| (k.as_str(), Mark::White)).collect();

    fn visit<'a>(
        node: &'a str,
        adjacency: &BTreeMap<&'a str, Vec<&'a str>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
    ) -> Option<Vec<TaskId>> {
        marks.insert(node, Mark::Grey);
        stack.push(node);
        for &next in adjacency.get(node).map(Vec::as_slice).unwrap_or_default() {
            match marks.get(next).copied().unwrap_or(Mark::White) {
                Mark::Grey => {
                    let start = stack.iter().position(|n| *n == next).unwrap_or(0);
                    let mut path: Vec<TaskId> =
                        stack[start..].iter().map(|s| s.to_string()).collect();
                    path.push(next.to_string());
                    return Some(path);
                }
                Mark::White => {
                    if let Some(path) = visit(next, adjacency, marks, stack) {
                        return Some(path);
                    }
                }
                Mark::Black => {}
            }
        }
        stack.pop();
        marks.insert(node, Mark::Black);
        None
    }

    let roots: Vec<&str> = tasks.keys().map(String::as_str).collect();
    let mut stack = Vec::new();
    for root in roots {
        if marks[root] == Mark::White {
            if let Some(path) = visit(root, &adjacency, &mut marks, &mut stack) {
                return Some(path);
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
    Skipped,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Succeeded | Self::Failed | Self::Skipped)
    }
}

/// Execution record of one task within one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRun {
    pub task_id: TaskId,
    pub execution_id: String,
    pub attempt: u32,
    pub status: TaskStatus,
    pub started: Option<chrono::DateTime<chrono::Utc>>,
    pub ended: Option<chrono::DateTime<chrono::Utc>>,
    pub log: Vec<String>,
    /// Persistable summary of the task result; never carries artifacts.
    pub output: Value,
}

mod duration_millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}
