//! Flattening of JSON documents into attribute/value pairs.
//!
//! Nested keys are joined with dots. Arrays of scalars stay one attribute with
//! several values; arrays of objects below the root merge their elements'
//! attributes, so `{"a": [{"b": 1}, {"b": 2}]}` yields `a.b = [1, 2]`.
//! Single-key objects whose key starts with `$` (extended JSON such as
//! `{"$oid": ...}` or `{"$date": ...}`) are treated as scalars.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{AttributeMeta, CollectionProfile, Entity, SamplingConfig};

pub fn flatten(document: &Value) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    match document {
        Value::Object(_) => walk("", document, &mut out),
        other => push(&mut out, "", other.clone()),
    }
    out
}

fn walk(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    if let Some(scalar) = extended_scalar(value) {
        push(out, prefix, scalar);
        return;
    }
    match value {
        Value::Object(map) => {
            for (key, child) in map {
                let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
                walk(&path, child, out);
            }
        }
        Value::Array(items) => {
            for item in items {
                match item {
                    Value::Object(_) | Value::Array(_) if extended_scalar(item).is_none() => walk(prefix, item, out),
                    _ => push(out, prefix, extended_scalar(item).unwrap_or_else(|| item.clone())),
                }
            }
            if items.is_empty() && !prefix.is_empty() {
                out.entry(prefix.to_string()).or_insert(Value::Array(Vec::new()));
            }
        }
        scalar => push(out, prefix, scalar.clone()),
    }
}

/// Adds a value; a second value for the same attribute turns it into an array.
fn push(out: &mut BTreeMap<String, Value>, key: &str, value: Value) {
    match out.get_mut(key) {
        None => {
            out.insert(key.to_string(), value);
        }
        Some(Value::Array(existing)) => existing.push(value),
        Some(existing) => {
            let first = existing.take();
            *existing = Value::Array(vec![first, value]);
        }
    }
}

fn extended_scalar(value: &Value) -> Option<Value> {
    let Value::Object(map) = value else { return None };
    if map.len() != 1 {
        return None;
    }
    let (key, inner) = map.iter().next()?;
    if !key.starts_with('$') {
        return None;
    }
    Some(match inner {
        Value::String(_) | Value::Number(_) | Value::Bool(_) => inner.clone(),
        other => Value::String(other.to_string()),
    })
}

/// Profile of a submitted document. A root array is a list of entities; any
/// other root is one entity, except `{}` which has none. Scalar entities are
/// reported under the attribute `value`. References are `$[i]`.
pub fn document_profile(storage_ref: &str, collection: &str, document: &Value) -> CollectionProfile {
    let elements: Vec<&Value> = match document {
        Value::Array(items) => items.iter().collect(),
        Value::Object(map) if map.is_empty() => Vec::new(),
        other => vec![other],
    };
    let mut types: BTreeMap<String, &'static str> = BTreeMap::new();
    let mut sample = Vec::with_capacity(elements.len());
    for (i, element) in elements.iter().enumerate() {
        let mut values = flatten(element);
        if let Some(v) = values.remove("") {
            values.insert("value".to_string(), v);
        }
        for (name, value) in &values {
            let ty = value_type(value);
            let slot = types.entry(name.clone()).or_insert(ty);
            if *slot == "null" {
                *slot = ty;
            }
        }
        sample.push(Entity {
            reference: format!("$[{i}]"),
            values,
        });
    }
    CollectionProfile {
        storage_ref: storage_ref.to_string(),
        collection: collection.to_string(),
        attributes: types.into_iter().map(|(name, ty)| AttributeMeta::new(name, ty)).collect(),
        entity_count: sample.len() as u64,
        count_estimated: false,
        primary_key: None,
        sampling: SamplingConfig {
            limit: sample.len(),
            ..SamplingConfig::default()
        },
        sample,
    }
}

/// Storage-neutral type name for a flattened value.
pub fn value_type(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(items) => match items.iter().find(|v| !v.is_null()) {
            Some(Value::String(_)) => "string",
            Some(Value::Number(_)) => "number",
            Some(Value::Bool(_)) => "boolean",
            _ => "array",
        },
        Value::Object(_) => "object",
    }
}
