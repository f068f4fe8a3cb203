//! Random DAG generation and a sequential reference model of task statuses.
//! Shared by the workflow property tests and the acceptance harness.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use teiresias_core::inventory::{AppendOutcome, InventoryStore, PortionStatus, ReportPortion, Stage, Trigger};
use teiresias_core::workflow::{
    DagSpec, ExecutionContext, ExecutionOutcome, Executor, FanOutItem, OperatorRegistry, SubgraphTemplate, TaskError,
    TaskInput, TaskKind, TaskOutput, TaskSpec, TaskStatus,
};

pub struct RandomDag {
    pub dag: DagSpec,
    pub route: String,
    /// Per fan-out task: whether the leaf of item i fails.
    pub fan_outs: BTreeMap<String, Vec<bool>>,
    /// Function and join tasks wired to the failing operator.
    pub failing: BTreeSet<String>,
}

fn quick(spec: TaskSpec) -> TaskSpec {
    spec.with_retry(0, Duration::ZERO)
}

pub fn operators() -> OperatorRegistry {
    OperatorRegistry::new()
        .with("ok", |_: &TaskInput| Ok(TaskOutput::new(json!("ok"))))
        .with("fail", |_: &TaskInput| Err(TaskError("planned failure".into())))
        .with("items", |input: &TaskInput| {
            let mask: Vec<bool> = serde_json::from_value(input.task.payload["fails"].clone()).unwrap_or_default();
            let items = mask
                .iter()
                .enumerate()
                .map(|(i, f)| FanOutItem::new(format!("i{i}")).with_var("fails", *f))
                .collect();
            Ok(TaskOutput::new(json!(mask.len())).with_items(items))
        })
        .with("leaf", |input: &TaskInput| match input.variables.get("fails") {
            Some(Value::Bool(true)) => Err(TaskError("planned leaf failure".into())),
            _ => Ok(TaskOutput::new(json!("leaf"))),
        })
}

/// 2 to 14 tasks; every task has at least one edge; selectors, joins and fan-outs mixed in.
pub fn generate(seed: u64) -> RandomDag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=14);
    let ids: Vec<String> = (0..n).map(|i| format!("t{i:02}")).collect();
    let mut edges = BTreeSet::new();
    for i in 1..n {
        edges.insert((rng.gen_range(0..i), i));
        for j in 0..i {
            if rng.gen_bool(0.15) {
                edges.insert((j, i));
            }
        }
    }
    let downstream = |i: usize| edges.iter().filter(move |(f, _)| *f == i).map(|(_, t)| *t);
    let upstream_count = |i: usize| edges.iter().filter(|(_, t)| *t == i).count();

    let mut kinds = vec![TaskKind::Function; n];
    for (i, kind) in kinds.iter_mut().enumerate() {
        if upstream_count(i) >= 1 && rng.gen_bool(0.25) {
            *kind = TaskKind::Join;
        }
    }
    for i in 0..n {
        if kinds[i] != TaskKind::Function {
            continue;
        }
        let down: Vec<usize> = downstream(i).collect();
        if down.len() >= 2 && rng.gen_bool(0.3) {
            kinds[i] = TaskKind::BranchSelector;
        } else if down.iter().any(|d| kinds[*d] == TaskKind::Join) && rng.gen_bool(0.4) {
            kinds[i] = TaskKind::FanOutTemplate;
        }
    }

    let route = ["a", "b", "c", "zz"][rng.gen_range(0..4)].to_string();
    let mut dag = DagSpec::new(format!("random-{seed}"));
    let mut fan_outs = BTreeMap::new();
    let mut failing = BTreeSet::new();
    for i in 0..n {
        let id = &ids[i];
        let op = if rng.gen_bool(0.2) {
            failing.insert(id.clone());
            "fail"
        } else {
            "ok"
        };
        let spec = match kinds[i] {
            TaskKind::Function => TaskSpec::function(id, op),
            TaskKind::Join => TaskSpec::join(id, op),
            TaskKind::BranchSelector => {
                failing.remove(id);
                let down: Vec<&String> = downstream(i).map(|d| &ids[d]).collect();
                let mut branches = serde_json::Map::new();
                for (k, target) in ["a", "b", "c"].iter().zip(&down) {
                    branches.insert(k.to_string(), json!(target));
                }
                let mut payload = json!({"variable": "route", "branches": branches});
                // Without a default an unmapped route fails the selector.
                if rng.gen_bool(0.5) {
                    payload["default"] = json!(down[down.len() - 1]);
                }
                TaskSpec::branch_selector(id, payload)
            }
            TaskKind::FanOutTemplate => {
                failing.remove(id);
                let join = downstream(i).find(|d| kinds[*d] == TaskKind::Join).expect("join downstream");
                let mask: Vec<bool> = (0..rng.gen_range(0..4)).map(|_| rng.gen_bool(0.3)).collect();
                fan_outs.insert(id.clone(), mask.clone());
                let template = SubgraphTemplate {
                    tasks: vec![quick(TaskSpec::function("leaf", "leaf"))],
                    edges: vec![],
                    join: ids[join].clone(),
                };
                TaskSpec::fan_out(id, "items", template).with_payload(json!({"fails": mask}))
            }
        };
        dag = dag.task(quick(spec));
    }
    for (f, t) in &edges {
        dag = dag.edge(&ids[*f], &ids[*t]);
    }
    RandomDag {
        dag,
        route,
        fan_outs,
        failing,
    }
}

impl RandomDag {
    pub fn execute(&self, parallelism: usize) -> ExecutionOutcome {
        let ctx = ExecutionContext::new(format!("{}-p{parallelism}", self.dag.id))
            .with_parallelism(parallelism)
            .with_var("route", self.route.as_str());
        Executor::new(operators()).execute(&self.dag, &ctx).expect("generated DAG is valid")
    }

    /// Same shape with every planned failure removed.
    pub fn without_failures(&self) -> RandomDag {
        let mut dag = self.dag.clone();
        for id in &self.failing {
            dag.tasks.get_mut(id).unwrap().operator = Some("ok".into());
        }
        let mut fan_outs = self.fan_outs.clone();
        for (id, mask) in &mut fan_outs {
            mask.iter_mut().for_each(|f| *f = false);
            dag.tasks.get_mut(id).unwrap().payload = json!({"fails": mask});
        }
        RandomDag {
            dag,
            route: self.route.clone(),
            fan_outs,
            failing: BTreeSet::new(),
        }
    }

    fn planned_failure(&self, id: &str) -> bool {
        if let Some((fan_out, rest)) = id.split_once('[') {
            let index: usize = rest.split(']').next().unwrap().parse().unwrap();
            return self.fan_outs[fan_out][index];
        }
        self.failing.contains(id)
    }

    /// Statuses computed one task at a time in topological order over the
    /// expanded graph, independent of the executor's scheduling.
    pub fn reference_statuses(&self, expanded: &DagSpec) -> BTreeMap<String, TaskStatus> {
        let order = expanded.topological_order().expect("acyclic");
        let mut status: BTreeMap<String, TaskStatus> = BTreeMap::new();
        let mut deselected: BTreeSet<(String, String)> = BTreeSet::new();
        for id in order {
            let spec = &expanded.tasks[&id];
            let ups = expanded.upstream(&id);
            let blocked = ups
                .iter()
                .any(|u| status[*u] != TaskStatus::Succeeded || deselected.contains(&((*u).clone(), id.clone())));
            let result = if blocked && spec.kind != TaskKind::Join {
                TaskStatus::Skipped
            } else if spec.kind == TaskKind::BranchSelector {
                let branches = &spec.payload["branches"];
                let chosen = branches
                    .get(&self.route)
                    .or_else(|| spec.payload.get("default"))
                    .and_then(Value::as_str);
                match chosen {
                    Some(target) => {
                        for d in expanded.downstream(&id) {
                            if d != target {
                                deselected.insert((id.clone(), d.clone()));
                            }
                        }
                        TaskStatus::Succeeded
                    }
                    None => TaskStatus::Failed,
                }
            } else if self.planned_failure(&id) {
                TaskStatus::Failed
            } else {
                TaskStatus::Succeeded
            };
            status.insert(id, result);
        }
        status
    }
}

/// Every task reachable from `roots` in `dag`, roots included.
pub fn descendants(dag: &DagSpec, roots: impl IntoIterator<Item = String>) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<String> = roots.into_iter().collect();
    while let Some(id) = stack.pop() {
        if seen.insert(id.clone()) {
            stack.extend(dag.downstream(&id).into_iter().cloned());
        }
    }
    seen
}

/// Checks schedule independence, failure isolation and the reference model for one seed.
pub fn check_statuses(seed: u64) -> Result<(), String> {
    let case = generate(seed);
    let sequential = case.execute(1);
    let parallel = case.execute(8);
    if sequential.statuses() != parallel.statuses() {
        return Err(format!("seed {seed}: sequential {:?} != parallel {:?}", sequential.statuses(), parallel.statuses()));
    }
    let expected = case.reference_statuses(&sequential.dag);
    if expected != sequential.statuses() {
        return Err(format!("seed {seed}: reference {expected:?} != executed {:?}", sequential.statuses()));
    }
    // Failure isolation: outside the descendants of failed tasks, statuses
    // match a run of the same DAG without any failures.
    let clean = case.without_failures().execute(4);
    let failed = sequential
        .statuses()
        .into_iter()
        .filter(|(_, s)| *s == TaskStatus::Failed)
        .map(|(id, _)| id);
    let affected = descendants(&sequential.dag, failed);
    for (id, status) in sequential.statuses() {
        if affected.contains(&id) {
            continue;
        }
        if clean.status(&id) != Some(status) {
            return Err(format!("seed {seed}: {id} is {status:?} but {:?} without failures", clean.status(&id)));
        }
    }
    Ok(())
}

fn portion_status(status: TaskStatus) -> PortionStatus {
    match status {
        TaskStatus::Succeeded => PortionStatus::Succeeded,
        TaskStatus::Skipped => PortionStatus::Skipped,
        _ => PortionStatus::Failed,
    }
}

/// Appends one portion per task run twice; the second pass must store nothing.
pub fn check_idempotent_appends(seed: u64, store: &InventoryStore) -> Result<(), String> {
    let case = generate(seed);
    let outcome = case.execute(4);
    let record = store.begin_execution(Trigger::Manual, None).map_err(|e| e.to_string())?;
    let portions: Vec<ReportPortion> = outcome
        .runs
        .values()
        .map(|run| {
            ReportPortion::new(
                &record.execution_id,
                run.task_id.clone(),
                Stage::Inventory,
                portion_status(run.status),
                json!({"attempt": run.attempt}),
            )
        })
        .collect();
    for p in &portions {
        if store.append_portion(p).map_err(|e| e.to_string())? != AppendOutcome::Stored {
            return Err(format!("seed {seed}: first append of {} was not stored", p.task_id));
        }
    }
    let before = store.portions(&record.execution_id).map_err(|e| e.to_string())?;
    // A rerun of the same execution replays identical appends.
    for p in portions.iter().rev() {
        if store.append_portion(p).map_err(|e| e.to_string())? != AppendOutcome::Duplicate {
            return Err(format!("seed {seed}: replayed append of {} was stored again", p.task_id));
        }
    }
    let after = store.portions(&record.execution_id).map_err(|e| e.to_string())?;
    if before != after || after.len() != outcome.runs.len() {
        return Err(format!("seed {seed}: {} portions before replay, {} after", before.len(), after.len()));
    }
    Ok(())
}
