use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceOrigin {
    GitRemote { uri: String, branch: String },
    LocalDirectory { path: PathBuf },
}

impl fmt::Display for SourceOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GitRemote { uri, branch } => write!(f, "{uri}#{branch}"),
            Self::LocalDirectory { path } => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IgnoreSet {
    /// Path components that exclude everything below them.
    pub names: Vec<String>,
    pub max_file_size: u64,
}

impl Default for IgnoreSet {
    fn default() -> Self {
        Self {
            names: vec![".git".into()],
            max_file_size: 10 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    /// Relative, `/`-separated, never escaping the root.
    pub path: String,
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceTree {
    pub origin: SourceOrigin,
    /// Sorted by path.
    pub files: Vec<SourceFile>,
}

impl SourceTree {
    pub fn new(origin: SourceOrigin, mut files: Vec<SourceFile>) -> Self {
        files.sort_by(|a, b| a.path.cmp(&b.path));
        files.dedup_by(|a, b| a.path == b.path);
        Self { origin, files }
    }

    pub fn label(&self) -> String {
        self.origin.to_string()
    }

    pub fn get(&self, path: &str) -> Option<&SourceFile> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.files[i])
    }

    pub fn text(&self, path: &str) -> Option<&str> {
        self.get(path).and_then(|f| std::str::from_utf8(&f.content).ok())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{origin}: branch not found")]
    BranchNotFound { origin: SourceOrigin },
    #[error("{origin}: repository unreachable: {detail}")]
    Unreachable { origin: SourceOrigin, detail: String },
    #[error("{origin}: cannot read directory: {detail}")]
    Unreadable { origin: SourceOrigin, detail: String },
}

/// Reads every file of a local directory or a shallow clone of a git branch.
pub fn ingest_source(origin: &SourceOrigin, ignore: &IgnoreSet) -> Result<SourceTree, IngestError> {
    match origin {
        SourceOrigin::LocalDirectory { path } => read_directory(origin, path, ignore),
        SourceOrigin::GitRemote { uri, branch } => {
            let checkout = tempfile::tempdir().map_err(|e| IngestError::Unreadable {
                origin: origin.clone(),
                detail: e.to_string(),
            })?;
            let target = checkout.path().join("repo");
            let output = Command::new("git")
                .args(["clone", "--quiet", "--depth", "1", "--single-branch", "--branch"])
                .arg(branch)
                .arg("--")
                .arg(uri)
                .arg(&target)
                .env("GIT_TERMINAL_PROMPT", "0")
                .output()
                .map_err(|e| IngestError::Unreachable {
                    origin: origin.clone(),
                    detail: format!("cannot run git: {e}"),
                })?;
            if !output.status.success() {
                let stderr = String::from_utf8_lossy(&output.stderr);
                if stderr.contains("Remote branch") && stderr.contains("not found") {
                    return Err(IngestError::BranchNotFound { origin: origin.clone() });
                }
                return Err(IngestError::Unreachable {
                    origin: origin.clone(),
                    detail: stderr.trim().to_string(),
                });
            }
            read_directory(origin, &target, ignore)
        }
    }
}

fn read_directory(origin: &SourceOrigin, root: &Path, ignore: &IgnoreSet) -> Result<SourceTree, IngestError> {
    let unreadable = |detail: String| IngestError::Unreadable {
        origin: origin.clone(),
        detail,
    };
    if !root.is_dir() {
        return Err(unreadable(format!("{} is not a directory", root.display())));
    }
    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !ignore.names.iter().any(|n| e.file_name() == n.as_str()));
    for entry in walker {
        let entry = entry.map_err(|e| unreadable(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let size = entry.metadata().map_err(|e| unreadable(e.to_string()))?.len();
        if size > ignore.max_file_size {
            continue;
        }
        let Some(path) = relative_path(root, entry.path()) else { continue };
        let content = std::fs::read(entry.path()).map_err(|e| unreadable(format!("{path}: {e}")))?;
        files.push(SourceFile { path, content });
    }
    Ok(SourceTree::new(origin.clone(), files))
}

/// `/`-joined path relative to `root`; `None` if it would leave the root.
pub fn relative_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let mut parts = Vec::new();
    for component in rel.components() {
        match component {
            Component::Normal(p) => parts.push(p.to_string_lossy().into_owned()),
            Component::CurDir => {}
            _ => return None,
        }
    }
    (!parts.is_empty()).then(|| parts.join("/"))
}

/// Resolves `relative` against the directory of `from`, both tree paths.
/// Returns `None` if the result would escape the tree.
pub fn join_tree_path(from: &str, relative: &str) -> Option<String> {
    let mut parts: Vec<&str> = from.split('/').collect();
    parts.pop();
    for piece in relative.split('/') {
        match piece {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            p => parts.push(p),
        }
    }
    (!parts.is_empty()).then(|| parts.join("/"))
}
