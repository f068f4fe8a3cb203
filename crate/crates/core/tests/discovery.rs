use std::path::Path;

use serde_json::json;
use teiresias_core::codeanalysis::SourceOrigin;
use teiresias_core::dataset::{write_dataset_file, DatasetKind};
use teiresias_core::discovery::{DiscoveryService, EXCLUDED_REASON, NO_STORAGES_NOTE};
use teiresias_core::inventory::{EntryOrigin, ExecutionState, Overrides, PortionStatus, StorageState, Trigger, REACTIVATED_NOTE};
use teiresias_core::secret::Secret;

const COMPOSE: &str = "\
services:
  db:
    image: postgres:15
    environment:
      POSTGRES_USER: admin
      POSTGRES_PASSWORD: ${DB_PW}
  web:
    image: nginx
";

fn service(state: &Path) -> DiscoveryService {
    let config = state.join("config");
    std::fs::create_dir_all(&config).unwrap();
    // Unreachable storages fail fast in tests.
    std::fs::write(config.join("teiresias.yaml"), "retry_limit: 0\nretry_backoff_ms: 0\n").unwrap();
    DiscoveryService::open(&state.join("state"), Some(&config)).unwrap()
}

fn repo(dir: &Path) -> SourceOrigin {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("docker-compose.yml"), COMPOSE).unwrap();
    SourceOrigin::LocalDirectory {
        path: dir.canonicalize().unwrap(),
    }
}

#[test]
fn empty_directory_reports_zero_storages() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = service(tmp.path());
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = svc.scan(&[SourceOrigin::LocalDirectory { path: empty }], Trigger::Manual).unwrap();
    assert_eq!(out.report.state, ExecutionState::Completed);
    assert_eq!(out.report.summary.headline, "0 storages");
    assert!(out.report.summary.notes.iter().any(|n| n == NO_STORAGES_NOTE));
    let exported = std::fs::read_to_string(svc.store().report_path(&out.execution_id)).unwrap();
    assert_eq!(exported, out.report.to_json());
}

#[test]
fn missing_directory_is_a_source_error() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = service(tmp.path());
    let missing = SourceOrigin::LocalDirectory {
        path: tmp.path().join("nope"),
    };
    assert!(svc.scan(&[missing], Trigger::Manual).is_err());
}

#[test]
fn incomplete_storage_needs_manual_interaction_until_completed() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = service(tmp.path());
    let source = repo(&tmp.path().join("repo"));

    let first = svc.scan(std::slice::from_ref(&source), Trigger::Manual).unwrap();
    let storages = &first.report.summary.storages;
    assert_eq!(storages.len(), 1, "{}", first.report.to_json());
    assert_eq!(storages[0].state, StorageState::ManualInteraction);
    assert_eq!(storages[0].unresolved, ["password"]);
    let id = storages[0].storage_id.clone();

    let overrides = Overrides {
        host: Some("127.0.0.1".into()),
        port: Some(1),
        password: Some(Secret::Env("TEIRESIAS_TEST_UNSET_PW".into())),
        ..Overrides::default()
    };
    let entry = svc.complete_storage(&id, overrides).unwrap();
    assert!(entry.effective_descriptor().unwrap().is_complete());

    // Now complete, the storage is retrieved; nothing listens on port 1, so retrieval fails in isolation.
    let second = svc.scan(std::slice::from_ref(&source), Trigger::Manual).unwrap();
    assert_eq!(second.report.state, ExecutionState::Completed);
    let st = &second.report.summary.storages[0];
    assert!(st.complete);
    assert_eq!(st.state, StorageState::Failed);
    assert!(st.manual_interaction);
    assert_eq!(second.report.summary.failures.len(), 1);
    assert!(second.report.portions.iter().any(|p| p.task_id == "inventory"));
}

#[test]
fn exclusion_and_reappearance() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = service(tmp.path());
    let source = repo(&tmp.path().join("repo"));
    let id = svc.scan(std::slice::from_ref(&source), Trigger::Manual).unwrap().report.summary.storages[0]
        .storage_id
        .clone();

    svc.exclude_storage(&id).unwrap();
    svc.exclude_storage(&id).unwrap();
    let excluded = svc.scan(std::slice::from_ref(&source), Trigger::Manual).unwrap();
    let skip = excluded
        .report
        .portions
        .iter()
        .find(|p| p.status == PortionStatus::Skipped)
        .expect("skip portion");
    assert_eq!(skip.payload["reason"], EXCLUDED_REASON);
    assert_eq!(excluded.report.summary.storages[0].state, StorageState::Excluded);

    svc.delete_storage(&id).unwrap();
    let again = svc.scan(std::slice::from_ref(&source), Trigger::Manual).unwrap();
    assert!(again.report.summary.notes.iter().any(|n| n.starts_with(REACTIVATED_NOTE)));
    assert_eq!(again.report.summary.storages[0].state, StorageState::ManualInteraction);
}

#[test]
fn external_tabular_storage_is_classified() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = service(tmp.path());
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    for (i, kind) in DatasetKind::ALL.into_iter().enumerate() {
        write_dataset_file(kind, 300, i as u64, &data.join(format!("{kind}.csv"))).unwrap();
    }
    let overrides = Overrides {
        host: Some(data.display().to_string()),
        ..Overrides::default()
    };
    svc.add_storage(EntryOrigin::External, "datasets", "tabular", overrides).unwrap();
    let out = svc.scan(&[], Trigger::Manual).unwrap();
    let st = &out.report.summary.storages[0];
    assert_eq!(st.state, StorageState::Analyzed);
    let verdicts: Vec<(&str, bool, u8)> = st.collections.iter().map(|c| (c.collection.as_str(), c.personal, c.alpha)).collect();
    assert_eq!(
        verdicts,
        [("fullnames.csv", true, 0), ("handles.csv", true, 0), ("ipv4.csv", true, 1), ("noise.csv", true, 0)]
    );
    let ipv4 = st.collections.iter().find(|c| c.collection == "ipv4.csv").unwrap();
    assert_eq!(ipv4.data_matches, 300);

    // Nothing but metadata reaches the state directory.
    let first_ip = std::fs::read_to_string(data.join("ipv4.csv")).unwrap().lines().nth(1).unwrap().to_string();
    for entry in walkdir::WalkDir::new(svc.state_dir()).into_iter().filter_map(Result::ok) {
        if entry.file_type().is_file() {
            let text = std::fs::read_to_string(entry.path()).unwrap();
            assert!(!text.contains(&first_ip), "{}", entry.path().display());
        }
    }
}

#[test]
fn documents_are_classified_without_echoing_values() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = service(tmp.path());
    let out = svc.analyze_document("signup", json!({"user": {"email": "jane.roe@example.org"}})).unwrap();
    let doc = &out.report.summary.documents[0];
    assert_eq!((doc.n, doc.t, doc.personal), (1, 1.0, true));
    assert_eq!(out.report.identifier.as_deref(), Some("signup"));
    assert!(!out.report.to_json().contains("jane.roe"));

    let empty = svc.analyze_document("empty", json!({})).unwrap();
    let doc = &empty.report.summary.documents[0];
    assert_eq!((doc.n, doc.t, doc.personal), (0, 0.0, false));

    let many = svc
        .analyze_document("list", json!([{"a": "x"}, {"b": "y"}, {"a": "z"}]))
        .unwrap();
    assert_eq!(many.report.summary.documents[0].n, 3);
}
