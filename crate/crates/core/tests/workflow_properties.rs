#[path = "support/random_dag.rs"]
mod random_dag;

use proptest::prelude::*;
use teiresias_core::inventory::InventoryStore;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn statuses_are_schedule_independent_and_failures_isolated(seed in any::<u64>()) {
        random_dag::check_statuses(seed).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn replayed_appends_store_nothing(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let store = InventoryStore::open(dir.path()).unwrap();
        random_dag::check_idempotent_appends(seed, &store).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn generator_covers_every_task_kind() {
    use teiresias_core::workflow::TaskKind;
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..200 {
        let case = random_dag::generate(seed);
        for task in case.dag.tasks.values() {
            seen.insert(format!("{:?}", task.kind));
        }
        for run in case.execute(2).runs.values() {
            seen.insert(format!("{:?}", run.status));
            if run.log.iter().any(|l| l.contains("not selected")) {
                seen.insert("deselected".into());
            }
            if run.task_id.contains('[') {
                seen.insert("instance".into());
            }
        }
    }
    for outcome in ["Failed", "Skipped", "Succeeded", "deselected", "instance"] {
        assert!(seen.contains(outcome), "no {outcome} run generated");
    }
    for kind in [TaskKind::Function, TaskKind::Join, TaskKind::BranchSelector, TaskKind::FanOutTemplate] {
        assert!(seen.contains(&format!("{kind:?}")), "{kind:?} never generated");
    }
}
