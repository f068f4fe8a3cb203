use std::path::{Path, PathBuf};
use std::time::Duration;

use notify_debouncer_mini::notify::{RecommendedWatcher, RecursiveMode};
use notify_debouncer_mini::{new_debouncer, DebounceEventResult, Debouncer};

pub const DEFAULT_DEBOUNCE: Duration = Duration::from_secs(2);

#[derive(Debug, thiserror::Error)]
#[error("cannot watch {path}: {detail}")]
pub struct ListenerError {
    pub path: PathBuf,
    pub detail: String,
}

/// Watches a directory tree and reports changed paths after a quiet period.
/// Changes inside `.git` are ignored. Watching stops when the listener is dropped.
pub struct DirectoryListener {
    _debouncer: Debouncer<RecommendedWatcher>,
}

impl DirectoryListener {
    pub fn watch(
        path: &Path,
        debounce: Duration,
        mut on_change: impl FnMut(Vec<PathBuf>) + Send + 'static,
    ) -> Result<Self, ListenerError> {
        let error = |e: &dyn std::fmt::Display| ListenerError {
            path: path.to_path_buf(),
            detail: e.to_string(),
        };
        let root = path.canonicalize().map_err(|e| error(&e))?;
        let handler_root = root.clone();
        let mut debouncer = new_debouncer(debounce, move |result: DebounceEventResult| {
            let Ok(events) = result else { return };
            let mut paths: Vec<PathBuf> = events
                .into_iter()
                .map(|e| e.path)
                .filter(|p| {
                    let rel = p.strip_prefix(&handler_root).unwrap_or(p);
                    !rel.components().any(|c| c.as_os_str() == ".git")
                })
                .collect();
            paths.sort();
            paths.dedup();
            if !paths.is_empty() {
                on_change(paths);
            }
        })
        .map_err(|e| error(&e))?;
        debouncer
            .watcher()
            .watch(&root, RecursiveMode::Recursive)
            .map_err(|e| error(&e))?;
        Ok(Self { _debouncer: debouncer })
    }
}
