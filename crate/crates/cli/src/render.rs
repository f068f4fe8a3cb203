use std::fmt::Write;

use teiresias_core::inventory::{DiscoveryReport, ExecutionRecord, StorageState};

fn state_label(state: StorageState) -> &'static str {
    match state {
        StorageState::Pending => "pending",
        StorageState::Analyzed => "analyzed",
        StorageState::ManualInteraction => "manual",
        StorageState::Excluded => "excluded",
        StorageState::Failed => "failed",
    }
}

/// Serialized name of a unit enum, e.g. `source-change`.
fn label(value: impl serde::Serialize) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn verdict(personal: bool) -> &'static str {
    if personal {
        "personal"
    } else {
        "non-personal"
    }
}

/// Aligns columns; the first row is the header.
fn table(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..rows.first().map_or(0, Vec::len))
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// One line per analyzed collection; storages without collections get one line.
pub fn report_table(report: &DiscoveryReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(out, "execution {} ({}, {})", report.execution_id, label(report.trigger), label(report.state));
    let _ = writeln!(out, "{}", s.headline);
    let mut rows = vec![["storage", "type", "state", "complete", "collection", "n", "T", "verdict"]
        .map(String::from)
        .to_vec()];
    for st in &s.storages {
        let complete = if st.complete { "yes".to_string() } else { format!("no ({})", st.unresolved.join(", ")) };
        if st.collections.is_empty() {
            rows.push(vec![
                st.storage_id.clone(),
                st.storage_type.clone(),
                state_label(st.state).into(),
                complete.clone(),
                "-".into(),
                "-".into(),
                "-".into(),
                "-".into(),
            ]);
        }
        for c in &st.collections {
            rows.push(vec![
                st.storage_id.clone(),
                st.storage_type.clone(),
                state_label(st.state).into(),
                complete.clone(),
                c.collection.clone(),
                c.n.to_string(),
                format!("{:.4}", c.t),
                verdict(c.personal).into(),
            ]);
        }
    }
    for c in &s.documents {
        rows.push(vec![
            "document".into(),
            "api".into(),
            "analyzed".into(),
            "yes".into(),
            c.collection.clone(),
            c.n.to_string(),
            format!("{:.4}", c.t),
            verdict(c.personal).into(),
        ]);
    }
    if rows.len() > 1 {
        out.push_str(&table(&rows));
    }
    for f in &s.failures {
        let _ = writeln!(out, "failure: {} [{}]: {}", f.task_id, f.storage_id.as_deref().unwrap_or("-"), f.error);
    }
    for note in &s.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}

pub fn execution_table(records: &[(ExecutionRecord, String)]) -> String {
    let mut rows = vec![["execution", "trigger", "state", "started", "summary"].map(String::from).to_vec()];
    for (r, headline) in records {
        rows.push(vec![
            r.execution_id.clone(),
            label(r.trigger),
            label(r.state),
            r.started.format("%Y-%m-%d %H:%M:%S").to_string(),
            headline.clone(),
        ]);
    }
    table(&rows)
}
