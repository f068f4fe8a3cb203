use std::any::Any;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use crossbeam_channel as channel;
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::fanout::{expand_fan_out, scope_of};
use super::journal::Journal;
use super::{
    select_branch, validate_dag, DagSpec, TaskId, TaskKind, TaskRun, TaskSpec, TaskStatus,
    ValidationReport,
};

/// In-memory value handed between tasks. Never persisted.
pub type Artifact = Arc<dyn Any + Send + Sync>;

/// One element produced by a fan-out task. `variables` are merged into the
/// context of every task instantiated for this item.
#[derive(Clone)]
pub struct FanOutItem {
    pub label: String,
    pub variables: BTreeMap<String, Value>,
    pub value: Option<Artifact>,
}

impl FanOutItem {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            variables: BTreeMap::new(),
            value: None,
        }
    }

    pub fn with_var(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.variables.insert(key.into(), value.into());
        self
    }

    pub fn with_value<T: Any + Send + Sync>(mut self, value: T) -> Self {
        self.value = Some(Arc::new(value));
        self
    }

    pub fn value<T: Any>(&self) -> Option<&T> {
        self.value.as_ref().and_then(|v| v.downcast_ref())
    }
}

impl fmt::Debug for FanOutItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FanOutItem")
            .field("label", &self.label)
            .field("variables", &self.variables)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Default)]
pub struct TaskOutput {
    /// Persisted into the journal. Must not carry raw data.
    pub summary: Value,
    pub artifact: Option<Artifact>,
    /// Chosen downstream, for branch selectors with a custom operator.
    pub branch: Option<TaskId>,
    /// Items to fan out over, for fan-out templates.
    pub items: Vec<FanOutItem>,
}

impl TaskOutput {
    pub fn new(summary: Value) -> Self {
        Self {
            summary,
            ..Self::default()
        }
    }

    pub fn with_artifact<T: Any + Send + Sync>(mut self, value: T) -> Self {
        self.artifact = Some(Arc::new(value));
        self
    }

    pub fn with_items(mut self, items: Vec<FanOutItem>) -> Self {
        self.items = items;
        self
    }

    pub fn with_branch(mut self, branch: impl Into<String>) -> Self {
        self.branch = Some(branch.into());
        self
    }

    pub fn artifact<T: Any>(&self) -> Option<&T> {
        self.artifact.as_ref().and_then(|a| a.downcast_ref())
    }
}

impl fmt::Debug for TaskOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskOutput")
            .field("summary", &self.summary)
            .field("branch", &self.branch)
            .field("items", &self.items.len())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskError(pub String);

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for TaskError {}

impl From<String> for TaskError {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for TaskError {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// An upstream of a join that did not succeed (or was not selected).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingInput {
    pub task_id: TaskId,
    pub status: TaskStatus,
}

pub struct TaskInput {
    pub execution_id: String,
    pub task: TaskSpec,
    pub attempt: u32,
    pub variables: BTreeMap<String, Value>,
    pub resources: Arc<BTreeMap<String, Artifact>>,
    pub item: Option<FanOutItem>,
    /// Outputs of upstream tasks that succeeded (and selected this task).
    pub upstream: BTreeMap<TaskId, TaskOutput>,
    pub missing: Vec<MissingInput>,
    log: Mutex<Vec<String>>,
}

impl TaskInput {
    pub fn log(&self, line: impl Into<String>) {
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(line.into());
    }

    pub fn resource<T: Any>(&self, name: &str) -> Option<&T> {
        self.resources.get(name).and_then(|r| r.downcast_ref())
    }

    pub fn item_value<T: Any>(&self) -> Option<&T> {
        self.item.as_ref().and_then(FanOutItem::value)
    }

    pub fn var_str(&self, name: &str) -> Option<&str> {
        self.variables.get(name).and_then(Value::as_str)
    }

    /// Artifacts of type `T` among the successful upstream outputs, in task-id order.
    pub fn upstream_artifacts<T: Any>(&self) -> impl Iterator<Item = (&TaskId, &T)> {
        self.upstream
            .iter()
            .filter_map(|(id, out)| out.artifact::<T>().map(|a| (id, a)))
    }

    fn take_log(&self) -> Vec<String> {
        std::mem::take(&mut *self.log.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

pub trait Operator: Send + Sync {
    fn run(&self, input: &TaskInput) -> Result<TaskOutput, TaskError>;
}

impl<F> Operator for F
where
    F: Fn(&TaskInput) -> Result<TaskOutput, TaskError> + Send + Sync,
{
    fn run(&self, input: &TaskInput) -> Result<TaskOutput, TaskError> {
        self(input)
    }
}

#[derive(Clone, Default)]
pub struct OperatorRegistry {
    operators: HashMap<String, Arc<dyn Operator>>,
}

impl OperatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, op: impl Operator + 'static) {
        self.operators.insert(name.into(), Arc::new(op));
    }

    pub fn with(mut self, name: impl Into<String>, op: impl Operator + 'static) -> Self {
        self.register(name, op);
        self
    }

    fn get(&self, name: &str) -> Option<&Arc<dyn Operator>> {
        self.operators.get(name)
    }
}

pub struct ExecutionContext {
    pub execution_id: String,
    pub variables: BTreeMap<String, Value>,
    pub parallelism_limit: usize,
    /// Shared in-memory handles available to every task (stores, configs, documents).
    pub resources: BTreeMap<String, Artifact>,
}

impl ExecutionContext {
    pub fn new(execution_id: impl Into<String>) -> Self {
        Self {
            execution_id: execution_id.into(),
            variables: BTreeMap::new(),
            parallelism_limit: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .max(2),
            resources: BTreeMap::new(),
        }
    }

    pub fn with_parallelism(mut self, limit: usize) -> Self {
        self.parallelism_limit = limit.max(1);
        self
    }

    pub fn with_var(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.variables.insert(key.into(), value.into());
        self
    }

    pub fn with_resource<T: Any + Send + Sync>(mut self, name: impl Into<String>, value: T) -> Self {
        self.resources.insert(name.into(), Arc::new(value));
        self
    }

    pub fn with_shared_resource(mut self, name: impl Into<String>, value: Artifact) -> Self {
        self.resources.insert(name.into(), value);
        self
    }
}

/// Notified on the control thread whenever a task reaches a terminal status.
pub trait ExecutionObserver: Send + Sync {
    fn task_finished(&self, run: &TaskRun, spec: &TaskSpec, variables: &BTreeMap<String, Value>);
}

pub struct ExecutionOutcome {
    pub execution_id: String,
    /// The DAG as executed, including every fan-out expansion.
    pub dag: DagSpec,
    pub runs: BTreeMap<TaskId, TaskRun>,
    pub outputs: BTreeMap<TaskId, TaskOutput>,
    /// Set when the scheduler itself broke down; runs are partial in that case.
    pub fault: Option<String>,
}

impl ExecutionOutcome {
    pub fn status(&self, task: &str) -> Option<TaskStatus> {
        self.runs.get(task).map(|r| r.status)
    }

    pub fn statuses(&self) -> BTreeMap<TaskId, TaskStatus> {
        self.runs
            .iter()
            .map(|(id, run)| (id.clone(), run.status))
            .collect()
    }
}

impl fmt::Debug for ExecutionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExecutionOutcome")
            .field("execution_id", &self.execution_id)
            .field("runs", &self.runs)
            .field("fault", &self.fault)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecuteError {
    #[error("invalid DAG: {}", .0.messages().join("; "))]
    Invalid(ValidationReport),
    #[error("cannot open execution journal: {0}")]
    Journal(#[from] std::io::Error),
}

pub struct Executor {
    operators: OperatorRegistry,
    journal_dir: Option<PathBuf>,
    observers: Vec<Arc<dyn ExecutionObserver>>,
}

struct Job {
    input: TaskInput,
}

struct JobResult {
    task_id: TaskId,
    attempt: u32,
    started: DateTime<Utc>,
    ended: DateTime<Utc>,
    log: Vec<String>,
    result: Result<TaskOutput, TaskError>,
}

impl Executor {
    pub fn new(operators: OperatorRegistry) -> Self {
        Self {
            operators,
            journal_dir: None,
            observers: Vec::new(),
        }
    }

    /// Persist every terminal task run under `<state_dir>/executions/`.
    pub fn with_journal(mut self, state_dir: impl Into<PathBuf>) -> Self {
        self.journal_dir = Some(state_dir.into());
        self
    }

    pub fn with_observer(mut self, observer: Arc<dyn ExecutionObserver>) -> Self {
        self.observers.push(observer);
        self
    }

    pub fn execute(
        &self,
        spec: &DagSpec,
        ctx: &ExecutionContext,
    ) -> Result<ExecutionOutcome, ExecuteError> {
        let report = validate_dag(spec);
        if !report.is_ok() {
            return Err(ExecuteError::Invalid(report));
        }
        let journal = match &self.journal_dir {
            Some(dir) => Some(Journal::open(dir, &ctx.execution_id)?),
            None => None,
        };

        let mut run = Run::new(spec, ctx);
        let limit = ctx.parallelism_limit.max(1);
        let (job_tx, job_rx) = channel::unbounded::<Job>();
        let (result_tx, result_rx) = channel::unbounded::<JobResult>();

        std::thread::scope(|scope| {
            for _ in 0..limit {
                let job_rx = job_rx.clone();
                let result_tx = result_tx.clone();
                let operators = &self.operators;
                scope.spawn(move || {
                    for job in job_rx.iter() {
                        let result = run_job(operators, job.input);
                        if result_tx.send(result).is_err() {
                            break;
                        }
                    }
                });
            }
            drop(result_tx);

            let mut in_flight = 0usize;
            loop {
                while in_flight < limit {
                    let Some(task_id) = run.ready.pop_front() else { break };
                    let input = run.prepare(&task_id);
                    debug!(task = %task_id, "dispatching");
                    if job_tx.send(Job { input }).is_err() {
                        run.fault = Some("worker pool disconnected".into());
                        break;
                    }
                    in_flight += 1;
                }
                if in_flight == 0 || run.fault.is_some() {
                    break;
                }
                match result_rx.recv() {
                    Ok(result) => {
                        in_flight -= 1;
                        run.complete(result, journal.as_ref(), &self.observers);
                    }
                    Err(_) => {
                        run.fault = Some("all workers terminated unexpectedly".into());
                        break;
                    }
                }
            }
            drop(job_tx);
            // Drain whatever is still running after a fault so partial runs are kept.
            while in_flight > 0 {
                match result_rx.recv() {
                    Ok(result) => {
                        in_flight -= 1;
                        run.complete(result, journal.as_ref(), &self.observers);
                    }
                    Err(_) => break,
                }
            }
        });

        if run.fault.is_none() {
            let stalled: Vec<&TaskId> = run
                .status
                .iter()
                .filter(|(_, s)| !s.is_terminal())
                .map(|(id, _)| id)
                .collect();
            if !stalled.is_empty() {
                run.fault = Some(format!(
                    "scheduler stalled with unfinished tasks: {}",
                    stalled
                        .iter()
                        .map(|s| s.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
        }
        if let Some(fault) = &run.fault {
            warn!(execution = %ctx.execution_id, %fault, "workflow run faulted");
        }
        Ok(run.finish())
    }
}

fn run_job(operators: &OperatorRegistry, input: TaskInput) -> JobResult {
    let started = Utc::now();
    let max_attempts = input.task.retry_limit.saturating_add(1);
    let mut attempt = 0;
    let mut input = input;
    let result = loop {
        attempt += 1;
        input.attempt = attempt;
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| invoke(operators, &input)))
            .unwrap_or_else(|panic| Err(TaskError(format!("task panicked: {}", panic_message(&panic)))));
        match outcome {
            Ok(output) => break Ok(output),
            Err(err) => {
                input.log(format!("attempt {attempt}/{max_attempts} failed: {err}"));
                if attempt >= max_attempts {
                    break Err(err);
                }
                std::thread::sleep(input.task.backoff);
            }
        }
    };
    JobResult {
        task_id: input.task.id.clone(),
        attempt,
        started,
        ended: Utc::now(),
        log: input.take_log(),
        result,
    }
}

fn invoke(operators: &OperatorRegistry, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let task = &input.task;
    match (&task.operator, task.kind) {
        (None, TaskKind::BranchSelector) => {
            let chosen = select_branch(task, &input.variables).map_err(|e| TaskError(e.to_string()))?;
            Ok(TaskOutput::new(json!({ "branch": chosen })).with_branch(chosen))
        }
        (Some(name), kind) => {
            let op = operators
                .get(name)
                .ok_or_else(|| TaskError(format!("no operator registered as '{name}'")))?;
            let output = op.run(input)?;
            if kind == TaskKind::BranchSelector && output.branch.is_none() {
                return Err(TaskError(format!("selector operator '{name}' chose no branch")));
            }
            Ok(output)
        }
        (None, kind) => Err(TaskError(format!("{kind:?} task '{}' has no operator", task.id))),
    }
}

fn panic_message(panic: &Box<dyn Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

/// Scheduler state of one execution. Lives on the control thread only.
struct Run {
    execution_id: String,
    graph: DagSpec,
    downstream: BTreeMap<TaskId, BTreeSet<TaskId>>,
    upstream: BTreeMap<TaskId, BTreeSet<TaskId>>,
    status: BTreeMap<TaskId, TaskStatus>,
    runs: BTreeMap<TaskId, TaskRun>,
    outputs: BTreeMap<TaskId, TaskOutput>,
    items: BTreeMap<TaskId, FanOutItem>,
    vars: BTreeMap<TaskId, BTreeMap<String, Value>>,
    base_vars: BTreeMap<String, Value>,
    resources: Arc<BTreeMap<String, Artifact>>,
    deselected: BTreeSet<(TaskId, TaskId)>,
    ready: VecDeque<TaskId>,
    fault: Option<String>,
}

impl Run {
    fn new(spec: &DagSpec, ctx: &ExecutionContext) -> Self {
        let mut run = Self {
            execution_id: ctx.execution_id.clone(),
            graph: DagSpec::new(spec.id.clone()),
            downstream: BTreeMap::new(),
            upstream: BTreeMap::new(),
            status: BTreeMap::new(),
            runs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            items: BTreeMap::new(),
            vars: BTreeMap::new(),
            base_vars: ctx.variables.clone(),
            resources: Arc::new(ctx.resources.clone()),
            deselected: BTreeSet::new(),
            ready: VecDeque::new(),
            fault: None,
        };
        run.insert(spec, None, &ctx.variables);
        let roots: Vec<TaskId> = run
            .status
            .keys()
            .filter(|id| run.upstream[*id].is_empty())
            .cloned()
            .collect();
        run.ready.extend(roots);
        run
    }

    fn insert(&mut self, fragment: &DagSpec, item: Option<(&[FanOutItem], &str)>, vars: &BTreeMap<String, Value>) {
        for (id, task) in &fragment.tasks {
            self.graph.tasks.insert(id.clone(), task.clone());
            self.downstream.entry(id.clone()).or_default();
            self.upstream.entry(id.clone()).or_default();
            self.status.insert(id.clone(), TaskStatus::Pending);
            self.runs.insert(id.clone(), self.blank_run(id));
            let mut task_vars = vars.clone();
            if let Some((items, fan_out)) = item {
                if let Some(index) = item_index(id, fan_out) {
                    let item = &items[index];
                    task_vars.extend(item.variables.clone());
                    self.items.insert(id.clone(), item.clone());
                }
            }
            self.vars.insert(id.clone(), task_vars);
        }
        for (from, to) in &fragment.edges {
            self.graph.edges.insert((from.clone(), to.clone()));
            self.downstream.entry(from.clone()).or_default().insert(to.clone());
            self.upstream.entry(to.clone()).or_default().insert(from.clone());
        }
    }

    fn blank_run(&self, id: &str) -> TaskRun {
        TaskRun {
            task_id: id.to_string(),
            execution_id: self.execution_id.clone(),
            attempt: 0,
            status: TaskStatus::Pending,
            started: None,
            ended: None,
            log: Vec::new(),
            output: Value::Null,
        }
    }

    fn effective_success(&self, from: &str, to: &str) -> bool {
        self.status[from] == TaskStatus::Succeeded
            && !self.deselected.contains(&(from.to_string(), to.to_string()))
    }

    fn prepare(&mut self, id: &TaskId) -> TaskInput {
        self.status.insert(id.clone(), TaskStatus::Running);
        if let Some(run) = self.runs.get_mut(id) {
            run.status = TaskStatus::Running;
        }
        let mut upstream = BTreeMap::new();
        let mut missing = Vec::new();
        for up in &self.upstream[id] {
            if self.effective_success(up, id) {
                if let Some(out) = self.outputs.get(up) {
                    upstream.insert(up.clone(), out.clone());
                }
            } else {
                missing.push(MissingInput {
                    task_id: up.clone(),
                    status: self.status[up],
                });
            }
        }
        TaskInput {
            execution_id: self.execution_id.clone(),
            task: self.graph.tasks[id].clone(),
            attempt: 0,
            variables: self.vars.get(id).cloned().unwrap_or_else(|| self.base_vars.clone()),
            resources: Arc::clone(&self.resources),
            item: self.items.get(id).cloned(),
            upstream,
            missing,
            log: Mutex::new(Vec::new()),
        }
    }

    fn complete(
        &mut self,
        result: JobResult,
        journal: Option<&Journal>,
        observers: &[Arc<dyn ExecutionObserver>],
    ) {
        let id = result.task_id.clone();
        let spec = self.graph.tasks[&id].clone();
        let mut log = result.log;
        let outcome = result.result.and_then(|output| self.apply(&spec, output));
        let (status, summary) = match outcome {
            Ok(output) => {
                let summary = output.summary.clone();
                self.outputs.insert(id.clone(), output);
                (TaskStatus::Succeeded, summary)
            }
            Err(err) => {
                if !log.iter().any(|l| l.contains(&err.0)) {
                    log.push(format!("failed: {err}"));
                }
                (TaskStatus::Failed, json!({ "error": err.0 }))
            }
        };
        self.status.insert(id.clone(), status);
        let run = TaskRun {
            task_id: id.clone(),
            execution_id: self.execution_id.clone(),
            attempt: result.attempt,
            status,
            started: Some(result.started),
            ended: Some(result.ended),
            log,
            output: summary,
        };
        self.finish_task(run, journal, observers);
        self.propagate(&id, journal, observers);
    }

    /// Applies selector and fan-out effects; an error turns the task into a failure.
    fn apply(&mut self, spec: &TaskSpec, output: TaskOutput) -> Result<TaskOutput, TaskError> {
        match spec.kind {
            TaskKind::BranchSelector => {
                let chosen = output.branch.clone().unwrap_or_default();
                let downstream = &self.downstream[&spec.id];
                let scoped = format!("{}{}", scope_of(&spec.id), chosen);
                let target = if downstream.contains(&chosen) {
                    chosen.clone()
                } else if downstream.contains(&scoped) {
                    scoped
                } else {
                    return Err(TaskError(format!(
                        "branch '{chosen}' is not a downstream of selector '{}'",
                        spec.id
                    )));
                };
                for other in downstream.iter().filter(|d| **d != target) {
                    self.deselected.insert((spec.id.clone(), other.clone()));
                }
                Ok(output)
            }
            TaskKind::FanOutTemplate => {
                let fragment = expand_fan_out(spec, &output.items).map_err(|e| TaskError(e.to_string()))?;
                if let Some(clash) = fragment.tasks.keys().find(|k| self.graph.tasks.contains_key(*k)) {
                    return Err(TaskError(format!("fan-out would redefine existing task '{clash}'")));
                }
                let vars = self.vars.get(&spec.id).cloned().unwrap_or_default();
                self.insert(&fragment, Some((&output.items, &spec.id)), &vars);
                Ok(output)
            }
            _ => Ok(output),
        }
    }

    fn finish_task(
        &mut self,
        run: TaskRun,
        journal: Option<&Journal>,
        observers: &[Arc<dyn ExecutionObserver>],
    ) {
        if let Some(journal) = journal {
            if let Err(err) = journal.record(&run) {
                warn!(task = %run.task_id, %err, "journal write failed");
            }
        }
        let spec = &self.graph.tasks[&run.task_id];
        let vars = self.vars.get(&run.task_id).unwrap_or(&self.base_vars);
        for observer in observers {
            observer.task_finished(&run, spec, vars);
        }
        self.runs.insert(run.task_id.clone(), run);
    }

    /// Re-evaluates the downstream of a task that just became terminal.
    fn propagate(
        &mut self,
        finished: &str,
        journal: Option<&Journal>,
        observers: &[Arc<dyn ExecutionObserver>],
    ) {
        let mut newly_ready = Vec::new();
        let mut queue: VecDeque<TaskId> = VecDeque::from([finished.to_string()]);
        while let Some(done) = queue.pop_front() {
            let candidates: Vec<TaskId> = self.downstream[&done].iter().cloned().collect();
            for next in candidates {
                if self.status[&next] != TaskStatus::Pending {
                    continue;
                }
                let ups = &self.upstream[&next];
                if !ups.iter().all(|u| self.status[u].is_terminal()) {
                    continue;
                }
                let is_join = self.graph.tasks[&next].kind == TaskKind::Join;
                let blocker = ups.iter().find(|u| !self.effective_success(u, &next)).cloned();
                match blocker {
                    Some(blocker) if !is_join => {
                        let reason = match self.status[&blocker] {
                            TaskStatus::Succeeded => format!("skipped: branch not selected by '{blocker}'"),
                            TaskStatus::Failed => format!("skipped: upstream '{blocker}' failed"),
                            _ => format!("skipped: upstream '{blocker}' was skipped"),
                        };
                        self.status.insert(next.clone(), TaskStatus::Skipped);
                        let mut run = self.blank_run(&next);
                        run.status = TaskStatus::Skipped;
                        run.log.push(reason);
                        self.finish_task(run, journal, observers);
                        queue.push_back(next);
                    }
                    _ => newly_ready.push(next),
                }
            }
        }
        newly_ready.sort();
        newly_ready.dedup();
        self.ready.extend(newly_ready);
    }

    fn finish(self) -> ExecutionOutcome {
        ExecutionOutcome {
            execution_id: self.execution_id,
            dag: self.graph,
            runs: self.runs,
            outputs: self.outputs,
            fault: self.fault,
        }
    }
}

/// Index of the fan-out item a freshly instantiated task belongs to.
fn item_index(id: &str, fan_out: &str) -> Option<usize> {
    let rest = id.strip_prefix(fan_out)?.strip_prefix('[')?;
    let end = rest.find(']')?;
    rest[..end].parse().ok()
}
