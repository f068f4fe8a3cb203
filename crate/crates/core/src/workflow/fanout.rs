use std::collections::BTreeSet;

use super::{DagSpec, FanOutItem, TaskId, TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FanOutError {
    #[error("task '{0}' is not a fan-out template")]
    NotATemplate(String),
    #[error("fan-out task '{0}' declares no sub-graph template")]
    MissingTemplate(String),
}

/// Deterministic id of a template task instantiated for the item at `index`.
pub fn instance_id(fan_out: &str, index: usize, local: &str) -> TaskId {
    format!("{fan_out}[{index}].{local}")
}

/// Scope prefix of an instantiated task id (`"fo[2]."` for `"fo[2].work"`).
pub(crate) fn scope_of(id: &str) -> &str {
    match id.rfind("].") {
        Some(pos) => &id[..pos + 2],
        None => "",
    }
}

/// Instantiates the template of `template_task` once per item.
///
/// Each copy is wired from the fan-out task to the copy's entry tasks and from
/// the copy's exit tasks to the template's join. Zero items yield an empty
/// fragment; the join still runs because it is a static downstream of the
/// fan-out task.
pub fn expand_fan_out(
    template_task: &TaskSpec,
    items: &[FanOutItem],
) -> Result<DagSpec, FanOutError> {
    if template_task.kind != TaskKind::FanOutTemplate {
        return Err(FanOutError::NotATemplate(template_task.id.clone()));
    }
    let template = template_task
        .template
        .as_ref()
        .ok_or_else(|| FanOutError::MissingTemplate(template_task.id.clone()))?;

    let with_inbound: BTreeSet<&TaskId> = template.edges.iter().map(|(_, to)| to).collect();
    let with_outbound: BTreeSet<&TaskId> = template.edges.iter().map(|(from, _)| from).collect();

    let mut fragment = DagSpec::new(format!("{}/fragment", template_task.id));
    for index in 0..items.len() {
        let rename = |local: &str| instance_id(&template_task.id, index, local);
        for local in &template.tasks {
            let mut task = local.clone();
            task.id = rename(&local.id);
            task.idempotency_key = format!("{}[{index}].{}", template_task.idempotency_key, local.idempotency_key);
            if let Some(nested) = task.template.as_mut() {
                nested.join = rename(&nested.join);
            }
            if !with_inbound.contains(&local.id) {
                fragment
                    .edges
                    .insert((template_task.id.clone(), task.id.clone()));
            }
            if !with_outbound.contains(&local.id) {
                fragment.edges.insert((task.id.clone(), template.join.clone()));
            }
            fragment.tasks.insert(task.id.clone(), task);
        }
        for (from, to) in &template.edges {
            fragment.edges.insert((rename(from), rename(to)));
        }
    }
    Ok(fragment)
}
