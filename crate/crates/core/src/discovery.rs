//! The discovery service: builds the main and the document DAGs, runs them on
//! the workflow engine and bundles every stage's output into the inventory.
//!
//! Main DAG, with fan-outs expanded per source, per storage and per collection:
//!
//! ```text
//! sources ─> sources[i].ingest ─> code_analysis ─> storages ─> storages[j].route
//!   route ─> retrieve ─> retrieve[k].analyze ─> done ─> inventory
//!   route ─> manual ──────────────────────────> done
//! ```
//!
//! Document DAG: `flatten → classify → inventory`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use tracing::warn;

use crate::analysis::analyze_profile;
use crate::codeanalysis::{analyze_tree, ingest_source, CodeAnalysis, ConnectionDescriptor, IgnoreSet, SourceOrigin};
use crate::config::{Config, ConfigError};
use crate::inventory::{
    DiscoveryReport, EffectiveStorage, EntryOrigin, EntryStatus, ExecutionRecord, ExecutionState, InventoryStore,
    Overrides, PortionStatus, Registry, RegistryEntry, RegistryError, ReportPortion, Stage, StoreError, Trigger,
};
use crate::retrieval::document::document_profile;
use crate::retrieval::{open_session, AdapterRegistry, CollectionProfile, SamplingConfig};
use crate::workflow::{
    DagSpec, ExecutionContext, ExecutionObserver, Executor, FanOutItem, OperatorRegistry, SubgraphTemplate, TaskError,
    TaskInput, TaskOutput, TaskRun, TaskSpec, TaskStatus,
};

pub const REGISTRY_FILE: &str = "registry.json";
pub const EXCLUDED_REASON: &str = "skipped: excluded";
pub const NO_STORAGES_NOTE: &str = "no storages found";
/// Storage id under which submitted documents are reported.
pub const DOCUMENT_STORAGE: &str = "api";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("source {0}")]
    Source(String),
    #[error("workflow: {0}")]
    Workflow(String),
}

/// Serializes load-modify-save cycles on the registry file.
#[derive(Debug)]
struct RegistryFile {
    path: PathBuf,
    lock: Mutex<()>,
}

impl RegistryFile {
    fn update<R>(&self, f: impl FnOnce(&mut Registry) -> Result<R, RegistryError>) -> Result<R, RegistryError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut registry = Registry::load(&self.path)?;
        let out = f(&mut registry)?;
        registry.save()?;
        Ok(out)
    }

    fn read(&self) -> Result<Registry, RegistryError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        Registry::load(&self.path)
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub execution_id: String,
    pub report: DiscoveryReport,
}

impl ScanOutcome {
    /// Whether a source could not be ingested.
    pub fn source_failed(&self) -> bool {
        self.report.summary.failures.iter().any(|f| f.stage == Stage::CodeAnalysis)
    }
}

pub struct DiscoveryService {
    state_dir: PathBuf,
    config_dir: Option<PathBuf>,
    store: Arc<InventoryStore>,
    registry: Arc<RegistryFile>,
    adapters: Option<AdapterRegistry>,
}

impl DiscoveryService {
    /// `config_dir` of `None` uses the shipped defaults.
    pub fn open(state_dir: &Path, config_dir: Option<&Path>) -> Result<Self, ServiceError> {
        let store = InventoryStore::open(state_dir)?;
        Ok(Self {
            state_dir: state_dir.to_path_buf(),
            config_dir: config_dir.map(Path::to_path_buf),
            store: Arc::new(store),
            registry: Arc::new(RegistryFile {
                path: state_dir.join(REGISTRY_FILE),
                lock: Mutex::new(()),
            }),
            adapters: None,
        })
    }

    /// Replaces the built-in adapters.
    pub fn with_adapters(mut self, adapters: AdapterRegistry) -> Self {
        self.adapters = Some(adapters);
        self
    }

    pub fn state_dir(&self) -> &Path {
        &self.state_dir
    }

    pub fn store(&self) -> &InventoryStore {
        &self.store
    }

    /// Re-read for every execution so table edits apply to the next run.
    pub fn load_config(&self) -> Result<Config, ServiceError> {
        Ok(match &self.config_dir {
            Some(dir) => Config::load(dir)?,
            None => Config::default(),
        })
    }

    pub fn registry(&self) -> Result<Registry, ServiceError> {
        Ok(self.registry.read()?)
    }

    pub fn registry_entry(&self, id: &str) -> Result<RegistryEntry, ServiceError> {
        self.registry()?
            .get(id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(id.to_string()).into())
    }

    /// Returns false when the origin was already registered.
    pub fn register_repository(&self, origin: SourceOrigin) -> Result<bool, ServiceError> {
        Ok(self.registry.update(|r| r.register_repository(origin))?)
    }

    pub fn registered_sources(&self) -> Result<Vec<SourceOrigin>, ServiceError> {
        Ok(self.registry()?.repositories().iter().map(|r| r.origin.clone()).collect())
    }

    pub fn complete_storage(&self, id: &str, overrides: Overrides) -> Result<RegistryEntry, ServiceError> {
        Ok(self.registry.update(|r| r.complete_storage(id, overrides).cloned())?)
    }

    pub fn exclude_storage(&self, id: &str) -> Result<RegistryEntry, ServiceError> {
        Ok(self.registry.update(|r| r.exclude_storage(id).cloned())?)
    }

    pub fn delete_storage(&self, id: &str) -> Result<(), ServiceError> {
        Ok(self.registry.update(|r| r.delete_storage(id))?)
    }

    pub fn add_storage(
        &self,
        origin: EntryOrigin,
        name: &str,
        storage_type: &str,
        overrides: Overrides,
    ) -> Result<RegistryEntry, ServiceError> {
        Ok(self.registry.update(|r| r.add_storage(origin, name, storage_type, overrides).cloned())?)
    }

    /// Records a running execution so its id can be handed out before the work starts.
    pub fn begin(&self, trigger: Trigger, identifier: Option<String>) -> Result<ExecutionRecord, ServiceError> {
        Ok(self.store.begin_execution(trigger, identifier)?)
    }

    /// Runs the main workflow synchronously.
    pub fn scan(&self, sources: &[SourceOrigin], trigger: Trigger) -> Result<ScanOutcome, ServiceError> {
        for source in sources {
            if let SourceOrigin::LocalDirectory { path } = source {
                if !path.is_dir() {
                    return Err(ServiceError::Source(format!("{}: not a directory", path.display())));
                }
            }
        }
        let record = self.begin(trigger, None)?;
        self.run_scan(&record.execution_id, sources)
    }

    /// Runs the main workflow for an execution created by [`Self::begin`].
    pub fn run_scan(&self, execution_id: &str, sources: &[SourceOrigin]) -> Result<ScanOutcome, ServiceError> {
        let result = self.load_config().and_then(|config| {
            let env = self.environment(execution_id, config);
            let dag = main_dag(&env.config);
            let ctx = self.context(execution_id, &env.config)
                .with_resource(SOURCES, sources.to_vec());
            self.execute(&env, &dag, ctx)
        });
        self.finish(execution_id, result)
    }

    /// Analyzes one submitted document synchronously.
    pub fn analyze_document(&self, identifier: &str, document: Value) -> Result<ScanOutcome, ServiceError> {
        let record = self.begin(Trigger::Api, Some(identifier.to_string()))?;
        self.run_document(&record.execution_id, identifier, document)
    }

    /// Runs the document workflow. The document lives only in this call's memory.
    pub fn run_document(&self, execution_id: &str, identifier: &str, document: Value) -> Result<ScanOutcome, ServiceError> {
        let result = self.load_config().and_then(|config| {
            let env = self.environment(execution_id, config);
            let dag = document_dag(&env.config);
            let ctx = self.context(execution_id, &env.config)
                .with_resource(DOCUMENT, SubmittedDocument {
                    identifier: identifier.to_string(),
                    document,
                });
            self.execute(&env, &dag, ctx)
        });
        self.finish(execution_id, result)
    }

    fn environment(&self, execution_id: &str, config: Config) -> Arc<Env> {
        let adapters = self
            .adapters
            .clone()
            .unwrap_or_else(|| AdapterRegistry::builtin(config.settings.tabular_in_place));
        Arc::new(Env {
            execution_id: execution_id.to_string(),
            config,
            adapters,
            store: Arc::clone(&self.store),
            registry: Arc::clone(&self.registry),
        })
    }

    fn context(&self, execution_id: &str, config: &Config) -> ExecutionContext {
        let ctx = ExecutionContext::new(execution_id);
        match config.settings.parallelism {
            Some(n) => ctx.with_parallelism(n),
            None => ctx,
        }
    }

    fn execute(&self, env: &Arc<Env>, dag: &DagSpec, ctx: ExecutionContext) -> Result<Option<String>, ServiceError> {
        let executor = Executor::new(operators(env))
            .with_journal(&self.state_dir)
            .with_observer(Arc::new(FailureRecorder(Arc::clone(env))));
        let outcome = executor.execute(dag, &ctx).map_err(|e| ServiceError::Workflow(e.to_string()))?;
        Ok(outcome.fault)
    }

    fn finish(&self, execution_id: &str, result: Result<Option<String>, ServiceError>) -> Result<ScanOutcome, ServiceError> {
        let (state, fault) = match &result {
            Ok(None) => (ExecutionState::Completed, None),
            Ok(Some(fault)) => (ExecutionState::Failed, Some(fault.clone())),
            Err(e) => (ExecutionState::Failed, Some(e.to_string())),
        };
        self.store.finish_execution(execution_id, state, fault)?;
        self.store.export_report(execution_id)?;
        result?;
        Ok(ScanOutcome {
            execution_id: execution_id.to_string(),
            report: self.store.get_report(execution_id)?,
        })
    }

    /// Marks an execution that never got to run as failed and exports its report.
    pub fn abandon(&self, execution_id: &str, reason: &str) -> Result<(), ServiceError> {
        self.store.finish_execution(execution_id, ExecutionState::Failed, Some(reason.to_string()))?;
        self.store.export_report(execution_id)?;
        Ok(())
    }
}

const SOURCES: &str = "sources";
const DOCUMENT: &str = "document";

struct SubmittedDocument {
    identifier: String,
    document: Value,
}

/// Everything operators of one execution share.
struct Env {
    execution_id: String,
    config: Config,
    adapters: AdapterRegistry,
    store: Arc<InventoryStore>,
    registry: Arc<RegistryFile>,
}

impl Env {
    fn append(&self, task_id: &str, stage: Stage, status: PortionStatus, payload: Value) -> Result<(), TaskError> {
        let portion = ReportPortion::new(&self.execution_id, task_id, stage, status, payload);
        self.store
            .append_portion(&portion)
            .map(|_| ())
            .map_err(|e| TaskError(format!("inventory: {e}")))
    }

    fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            limit: self.config.settings.sample_limit,
            ..SamplingConfig::default()
        }
    }
}

/// Stage a task belongs to, from its local name.
fn stage_of(task_id: &str) -> Stage {
    let local = task_id.rsplit('.').next().unwrap_or(task_id);
    let local = local.split('[').next().unwrap_or(local);
    match local {
        "sources" | "ingest" | "code_analysis" => Stage::CodeAnalysis,
        "storages" | "route" | "retrieve" | "manual" => Stage::Retrieval,
        "analyze" => Stage::Analysis,
        "flatten" | "classify" => Stage::Api,
        _ => Stage::Inventory,
    }
}

/// Writes a failure portion for every task that failed after its retries.
struct FailureRecorder(Arc<Env>);

impl ExecutionObserver for FailureRecorder {
    fn task_finished(&self, run: &TaskRun, _spec: &TaskSpec, variables: &BTreeMap<String, Value>) {
        if run.status != TaskStatus::Failed {
            return;
        }
        let mut payload = json!({
            "error": run.output.get("error").cloned().unwrap_or_else(|| json!("failed")),
            "attempt": run.attempt,
        });
        for key in ["storage_id", "storage_type", "collection", "origin"] {
            if let Some(v) = variables.get(key) {
                payload[key] = v.clone();
            }
        }
        if let Err(e) = self.0.append(&run.task_id, stage_of(&run.task_id), PortionStatus::Failed, payload) {
            warn!(task = %run.task_id, %e, "could not record failure portion");
        }
    }
}

fn retried(spec: TaskSpec, config: &Config) -> TaskSpec {
    spec.with_retry(config.settings.retry_limit, config.settings.retry_backoff())
}

pub fn main_dag(config: &Config) -> DagSpec {
    let per_collection = SubgraphTemplate {
        tasks: vec![retried(TaskSpec::function("analyze", "analyze"), config)],
        edges: vec![],
        join: "done".into(),
    };
    let per_storage = SubgraphTemplate {
        tasks: vec![
            TaskSpec::branch_selector(
                "route",
                json!({"variable": "route", "branches": {"retrieve": "retrieve", "manual": "manual"}}),
            ),
            retried(TaskSpec::fan_out("retrieve", "retrieve", per_collection), config),
            retried(TaskSpec::function("manual", "manual"), config),
            TaskSpec::join("done", "storage_done"),
        ],
        edges: vec![
            ("route".into(), "retrieve".into()),
            ("route".into(), "manual".into()),
            ("retrieve".into(), "done".into()),
            ("manual".into(), "done".into()),
        ],
        join: "inventory".into(),
    };
    let per_source = SubgraphTemplate {
        tasks: vec![retried(TaskSpec::function("ingest", "ingest"), config)],
        edges: vec![],
        join: "code_analysis".into(),
    };
    DagSpec::new("main")
        .task(TaskSpec::fan_out("sources", "list_sources", per_source))
        .task(retried(TaskSpec::join("code_analysis", "code_analysis"), config))
        .task(TaskSpec::fan_out("storages", "list_storages", per_storage))
        .task(retried(TaskSpec::join("inventory", "inventory"), config))
        .edge("sources", "code_analysis")
        .edge("code_analysis", "storages")
        .edge("storages", "inventory")
}

pub fn document_dag(config: &Config) -> DagSpec {
    DagSpec::new("document")
        .task(TaskSpec::function("flatten", "flatten"))
        .task(retried(TaskSpec::function("classify", "classify"), config))
        .task(retried(TaskSpec::join("inventory", "document_inventory"), config))
        .edge("flatten", "classify")
        .edge("classify", "inventory")
}

/// Result of ingesting and parsing one source.
struct SourceAnalysis {
    label: String,
    analysis: CodeAnalysis,
}

/// Descriptor as written to portions: the password reduced to its presence and
/// provenance listed as `{field, from}` so no key is named after a credential.
pub fn descriptor_view(d: &ConnectionDescriptor) -> Value {
    let mut v = serde_json::to_value(d).expect("descriptor serializes");
    v["password"] = d.password_status();
    v["provenance"] = d
        .provenance
        .iter()
        .map(|(field, from)| json!({"field": field, "from": from}))
        .collect();
    v
}

fn operators(env: &Arc<Env>) -> OperatorRegistry {
    let mut ops = OperatorRegistry::new();
    let e = Arc::clone(env);
    ops.register("list_sources", move |input: &TaskInput| list_sources(&e, input));
    let e = Arc::clone(env);
    ops.register("ingest", move |input: &TaskInput| ingest(&e, input));
    let e = Arc::clone(env);
    ops.register("code_analysis", move |input: &TaskInput| code_analysis(&e, input));
    let e = Arc::clone(env);
    ops.register("list_storages", move |input: &TaskInput| list_storages(&e, input));
    let e = Arc::clone(env);
    ops.register("retrieve", move |input: &TaskInput| retrieve(&e, input));
    let e = Arc::clone(env);
    ops.register("manual", move |input: &TaskInput| manual(&e, input));
    let e = Arc::clone(env);
    ops.register("analyze", move |input: &TaskInput| analyze(&e, input));
    ops.register("storage_done", |input: &TaskInput| {
        Ok(TaskOutput::new(json!({"missing": missing_ids(input)})))
    });
    let e = Arc::clone(env);
    ops.register("inventory", move |input: &TaskInput| inventory(&e, input));
    let e = Arc::clone(env);
    ops.register("flatten", move |input: &TaskInput| flatten(&e, input));
    let e = Arc::clone(env);
    ops.register("classify", move |input: &TaskInput| classify_document(&e, input));
    let e = Arc::clone(env);
    ops.register("document_inventory", move |input: &TaskInput| inventory(&e, input));
    ops
}

fn missing_ids(input: &TaskInput) -> Vec<String> {
    input.missing.iter().map(|m| m.task_id.clone()).collect()
}

fn list_sources(_env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let sources = input.resource::<Vec<SourceOrigin>>(SOURCES).cloned().unwrap_or_default();
    let items = sources
        .into_iter()
        .map(|s| FanOutItem::new(s.to_string()).with_var("origin", s.to_string()).with_value(s))
        .collect::<Vec<_>>();
    Ok(TaskOutput::new(json!({"sources": items.len()})).with_items(items))
}

fn ingest(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let origin = input
        .item_value::<SourceOrigin>()
        .ok_or_else(|| TaskError("ingest: no source given".into()))?;
    let tree = ingest_source(origin, &IgnoreSet::default()).map_err(|e| TaskError(e.to_string()))?;
    let label = origin.to_string();
    let analysis = analyze_tree(&label, &tree, &env.config.lookup, &env.config.settings.environment);
    let documents: Vec<Value> = analysis
        .documents
        .iter()
        .map(|d| json!({"path": d.path, "dialect": d.dialect}))
        .collect();
    let payload = json!({
        "origin": label,
        "files": tree.files.len(),
        "documents": documents,
        "descriptors": analysis.descriptors.iter().map(descriptor_view).collect::<Vec<_>>(),
        "diagnostics": analysis.diagnostics,
    });
    env.append(&input.task.id, Stage::CodeAnalysis, PortionStatus::Succeeded, payload)?;
    let summary = json!({"origin": label, "descriptors": analysis.descriptors.len()});
    Ok(TaskOutput::new(summary).with_artifact(SourceAnalysis { label, analysis }))
}

fn code_analysis(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let mut discovered = Vec::new();
    let mut scanned = BTreeSet::new();
    for (_, source) in input.upstream_artifacts::<SourceAnalysis>() {
        scanned.insert(source.label.clone());
        discovered.extend(source.analysis.descriptors.iter().cloned());
    }
    let reconciled = env
        .registry
        .update(|r| Ok(r.reconcile(discovered, &scanned)))
        .map_err(|e| TaskError(e.to_string()))?;
    let storages: Vec<Value> = reconciled
        .storages
        .iter()
        .map(|s| {
            json!({
                "id": s.descriptor.id,
                "storage_type": s.descriptor.storage_type,
                "source": s.descriptor.source,
                "complete": s.descriptor.is_complete(),
                "unresolved": s.descriptor.unresolved_fields(),
                "origin": s.origin,
                "status": s.status,
            })
        })
        .collect();
    let mut notes = reconciled.notes.clone();
    if reconciled.storages.is_empty() {
        notes.push(NO_STORAGES_NOTE.to_string());
    }
    let failed_sources = missing_ids(input);
    let payload = json!({"storages": storages, "notes": notes, "failed_sources": failed_sources});
    env.append(&input.task.id, Stage::CodeAnalysis, PortionStatus::Succeeded, payload)?;
    Ok(TaskOutput::new(json!({"storages": storages.len()})).with_artifact(reconciled.storages))
}

fn list_storages(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let storages = input
        .upstream_artifacts::<Vec<EffectiveStorage>>()
        .flat_map(|(_, list)| list.iter().cloned())
        .collect::<Vec<_>>();
    let mut items = Vec::new();
    let mut excluded = 0;
    for storage in storages {
        let d = storage.descriptor;
        if storage.status == EntryStatus::Excluded {
            excluded += 1;
            env.append(
                &format!("{}.excluded.{}", input.task.id, d.id),
                Stage::Retrieval,
                PortionStatus::Skipped,
                json!({"storage_id": d.id, "storage_type": d.storage_type, "reason": EXCLUDED_REASON}),
            )?;
            continue;
        }
        let route = if d.is_complete() { "retrieve" } else { "manual" };
        items.push(
            FanOutItem::new(d.id.clone())
                .with_var("route", route)
                .with_var("storage_id", d.id.clone())
                .with_var("storage_type", d.storage_type.clone())
                .with_value(d),
        );
    }
    Ok(TaskOutput::new(json!({"storages": items.len(), "excluded": excluded})).with_items(items))
}

fn storage_descriptor<'a>(input: &'a TaskInput) -> Result<&'a ConnectionDescriptor, TaskError> {
    input
        .item_value::<ConnectionDescriptor>()
        .ok_or_else(|| TaskError("no storage descriptor given".into()))
}

fn retrieve(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let d = storage_descriptor(input)?;
    let mut session = open_session(&env.adapters, d).map_err(|e| TaskError(e.to_string()))?;
    let collections = session.list_collections().map_err(|e| TaskError(e.to_string()))?;
    let capabilities = session.capabilities();
    drop(session);
    let payload = json!({
        "storage_id": d.id,
        "storage_type": d.storage_type,
        "collections": collections,
        "capabilities": capabilities,
    });
    env.append(&input.task.id, Stage::Retrieval, PortionStatus::Succeeded, payload)?;
    let items = collections
        .iter()
        .map(|c| {
            FanOutItem::new(c.clone())
                .with_var("collection", c.clone())
                .with_var("storage_id", d.id.clone())
                .with_value(d.clone())
        })
        .collect();
    Ok(TaskOutput::new(json!({"collections": collections.len()})).with_items(items))
}

fn manual(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let d = storage_descriptor(input)?;
    let payload = json!({
        "storage_id": d.id,
        "storage_type": d.storage_type,
        "unresolved": d.unresolved_fields(),
        "notes": [format!("storage {} needs manual completion of: {}", d.id, d.unresolved_fields().join(", "))],
    });
    env.append(&input.task.id, Stage::Retrieval, PortionStatus::ManualInteraction, payload)?;
    Ok(TaskOutput::new(json!({"unresolved": d.unresolved_fields()})))
}

fn analyze(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let d = storage_descriptor(input)?;
    let collection = input
        .var_str("collection")
        .ok_or_else(|| TaskError("no collection given".into()))?;
    let mut session = open_session(&env.adapters, d).map_err(|e| TaskError(e.to_string()))?;
    let profile = session
        .profile(collection, &env.sampling())
        .map_err(|e| TaskError(e.to_string()))?;
    let result = analyze_profile(
        &d.id,
        &profile,
        &env.config.keywords,
        &env.config.patterns,
        Some(session.as_mut()),
        env.config.settings.reference_cap,
    );
    let payload = json!({
        "storage_id": d.id,
        "storage_type": d.storage_type,
        "entity_count_estimated": profile.count_estimated,
        "sampled": profile.sample.len(),
        "result": result,
    });
    env.append(&input.task.id, Stage::Analysis, PortionStatus::Succeeded, payload)?;
    Ok(TaskOutput::new(json!({"collection": collection, "t": result.t, "personal": result.personal})))
}

fn inventory(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let missing = missing_ids(input);
    let payload = json!({"inputs": input.upstream.len(), "missing": missing});
    env.append(&input.task.id, Stage::Inventory, PortionStatus::Succeeded, payload.clone())?;
    Ok(TaskOutput::new(payload))
}

fn flatten(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let doc = input
        .resource::<SubmittedDocument>(DOCUMENT)
        .ok_or_else(|| TaskError("no document submitted".into()))?;
    let profile = document_profile(DOCUMENT_STORAGE, &doc.identifier, &doc.document);
    let attributes: Vec<&str> = profile.attributes.iter().map(|a| a.name.as_str()).collect();
    let payload = json!({"identifier": doc.identifier, "n": profile.entity_count, "attributes": attributes});
    env.append(&input.task.id, Stage::Api, PortionStatus::Succeeded, payload)?;
    Ok(TaskOutput::new(json!({"n": profile.entity_count})).with_artifact(profile))
}

fn classify_document(env: &Env, input: &TaskInput) -> Result<TaskOutput, TaskError> {
    let (_, profile) = input
        .upstream_artifacts::<CollectionProfile>()
        .next()
        .ok_or_else(|| TaskError("no flattened document".into()))?;
    let result = analyze_profile(
        DOCUMENT_STORAGE,
        profile,
        &env.config.keywords,
        &env.config.patterns,
        None,
        env.config.settings.reference_cap,
    );
    let payload = json!({"storage_id": DOCUMENT_STORAGE, "result": result});
    env.append(&input.task.id, Stage::Api, PortionStatus::Succeeded, payload)?;
    Ok(TaskOutput::new(json!({"t": result.t, "personal": result.personal})))
}
