use std::collections::BTreeMap;

use serde_json::Value;

use super::{TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BranchError {
    #[error("task '{0}' is not a branch selector")]
    NotASelector(String),
    #[error("selector '{0}' payload must name a `variable` and a `branches` mapping")]
    MalformedPayload(String),
    #[error("selector '{task}': no branch configured for {variable}={value} and no default")]
    NoBranch {
        task: String,
        variable: String,
        value: String,
    },
}

/// Evaluates a selector payload of the form
///
/// ```json
/// {"variable": "route", "branches": {"document": "document-path"}, "default": "fallback"}
/// ```
///
/// against the context variables and returns the chosen downstream task id.
/// Whether that id really is a downstream of the selector is checked by the
/// executor, which fails the selector otherwise.
pub fn select_branch(
    selector: &TaskSpec,
    variables: &BTreeMap<String, Value>,
) -> Result<String, BranchError> {
    if selector.kind != TaskKind::BranchSelector {
        return Err(BranchError::NotASelector(selector.id.clone()));
    }
    let malformed = || BranchError::MalformedPayload(selector.id.clone());
    let variable = selector
        .payload
        .get("variable")
        .and_then(Value::as_str)
        .ok_or_else(malformed)?;
    let branches = selector
        .payload
        .get("branches")
        .and_then(Value::as_object)
        .ok_or_else(malformed)?;

    let value = match variables.get(variable) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Null) | None => None,
        Some(other) => Some(other.to_string()),
    };
    if let Some(target) = value
        .as_deref()
        .and_then(|v| branches.get(v))
        .and_then(Value::as_str)
    {
        return Ok(target.to_string());
    }
    if let Some(default) = selector.payload.get("default").and_then(Value::as_str) {
        return Ok(default.to_string());
    }
    Err(BranchError::NoBranch {
        task: selector.id.clone(),
        variable: variable.to_string(),
        value: value.unwrap_or_else(|| "<unset>".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn vars(route: &str) -> BTreeMap<String, Value> {
        BTreeMap::from([("storage_type".to_string(), json!(route))])
    }

    fn selector(default: Option<&str>) -> TaskSpec {
        let mut payload = json!({
            "variable": "storage_type",
            "branches": {"relational": "relational-path", "document": "document-path"},
        });
        if let Some(d) = default {
            payload["default"] = json!(d);
        }
        TaskSpec::branch_selector("sel", payload)
    }

    #[test]
    fn picks_mapped_branch() {
        assert_eq!(
            select_branch(&selector(None), &vars("document")).unwrap(),
            "document-path"
        );
    }

    #[test]
    fn unknown_value_without_default_fails() {
        let err = select_branch(&selector(None), &vars("graph")).unwrap_err();
        assert_eq!(
            err.to_string(),
            "selector 'sel': no branch configured for storage_type=graph and no default"
        );
    }

    #[test]
    fn unknown_value_uses_default() {
        assert_eq!(
            select_branch(&selector(Some("relational-path")), &vars("graph")).unwrap(),
            "relational-path"
        );
    }

    #[test]
    fn rejects_non_selectors_and_bad_payloads() {
        let f = TaskSpec::function("f", "op");
        assert!(matches!(
            select_branch(&f, &vars("x")),
            Err(BranchError::NotASelector(_))
        ));
        let bad = TaskSpec::branch_selector("b", json!({"branches": {}}));
        assert!(matches!(
            select_branch(&bad, &vars("x")),
            Err(BranchError::MalformedPayload(_))
        ));
    }
}
