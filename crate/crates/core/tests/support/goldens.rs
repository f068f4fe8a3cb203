//! Golden descriptor lists for the IaC fixture repositories under `fixtures/iac/<name>/repo`.
//! Set `UPDATE_GOLDENS=1` to rewrite `golden.json` after a reviewed behaviour change.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;
use teiresias_core::codeanalysis::{analyze_tree, ingest_source, IgnoreSet, LookupTable, SourceOrigin};

pub fn fixture_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .expect("fixture root")
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("repo").is_dir())
        .collect();
    dirs.sort();
    dirs
}

/// Descriptors and diagnostics of one fixture, as checked in.
pub fn render(fixture: &Path) -> String {
    let name = fixture.file_name().unwrap().to_string_lossy().to_string();
    let origin = SourceOrigin::LocalDirectory {
        path: fixture.join("repo"),
    };
    let tree = ingest_source(&origin, &IgnoreSet::default()).expect("fixture ingests");
    let analysis = analyze_tree(&name, &tree, &LookupTable::default(), &BTreeMap::new());
    let body = json!({
        "descriptors": analysis.descriptors,
        "diagnostics": analysis.diagnostics,
    });
    serde_json::to_string_pretty(&body).unwrap() + "\n"
}

pub fn check_fixture(fixture: &Path) -> Result<(), String> {
    let actual = render(fixture);
    let golden = fixture.join("golden.json");
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::write(&golden, &actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&golden).map_err(|e| format!("{}: {e}", golden.display()))?;
    if expected != actual {
        return Err(format!("{}: output differs from golden.json\n{actual}", fixture.display()));
    }
    Ok(())
}
