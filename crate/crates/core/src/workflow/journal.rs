use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::TaskRun;

/// Line-delimited JSON journal of task runs, one file per execution under
/// `<state-dir>/executions/<execution-id>.jsonl`.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    pub fn path_for(state_dir: &Path, execution_id: &str) -> PathBuf {
        state_dir
            .join("executions")
            .join(format!("{execution_id}.jsonl"))
    }

    pub fn open(state_dir: &Path, execution_id: &str) -> io::Result<Self> {
        let path = Self::path_for(state_dir, execution_id);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, run: &TaskRun) -> io::Result<()> {
        let mut line = serde_json::to_string(run)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }
}

pub fn read_journal(path: &Path) -> io::Result<Vec<TaskRun>> {
    let reader = BufReader::new(File::open(path)?);
    let mut runs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        runs.push(serde_json::from_str(&line)?);
    }
    Ok(runs)
}
