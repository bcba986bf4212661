//! Run-directory layout and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{PipelineError, TrialConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATUS_FILE: &str = "status.json";
pub const WORDLISTS_FILE: &str = "wordlists.jsonl";
pub const ITERATIONS_DIR: &str = "iterations";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const DROPPED_FILE: &str = "dropped.jsonl";
pub const EXEMPLARS_FILE: &str = "exemplars.json";

const TMP_PREFIX: &str = ".tmp-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub seed: u64,
    /// Hash of `config`; checked on resume.
    pub config_hash: String,
    pub config: TrialConfig,
}

impl Manifest {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(config: &TrialConfig, seed: u64) -> Self {
        Manifest {
            format_version: Self::FORMAT_VERSION,
            name: config.name.clone(),
            seed,
            config_hash: config.hash(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub status: RunStatus,
    pub completed_iterations: u32,
    pub total_iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn status(&self) -> PathBuf {
        self.root.join(STATUS_FILE)
    }

    pub fn wordlists(&self) -> PathBuf {
        self.root.join(WORDLISTS_FILE)
    }

    pub fn iterations(&self) -> PathBuf {
        self.root.join(ITERATIONS_DIR)
    }

    pub fn iteration(&self, i: u32) -> PathBuf {
        self.iterations().join(format!("{i:02}"))
    }

    /// Completed iteration numbers present on disk, ascending.
    pub fn completed_iterations(&self) -> Result<Vec<u32>, PipelineError> {
        let dir = self.iterations();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| PipelineError::io(&dir, e))? {
            let entry = entry.map_err(|e| PipelineError::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with(TMP_PREFIX) {
                continue;
            }
            match name.parse::<u32>() {
                Ok(n) if n >= 1 => out.push(n),
                _ => return Err(PipelineError::CorruptState(format!("unexpected entry {name} in {}", dir.display()))),
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Removes half-written iteration directories left by a crash.
    pub fn clear_partial(&self) -> Result<(), PipelineError> {
        let dir = self.iterations();
        if !dir.exists() {
            return Ok(());
        }
        for entry in fs::read_dir(&dir).map_err(|e| PipelineError::io(&dir, e))? {
            let entry = entry.map_err(|e| PipelineError::io(&dir, e))?;
            if entry.file_name().to_string_lossy().starts_with(TMP_PREFIX) {
                fs::remove_dir_all(entry.path()).map_err(|e| PipelineError::io(&entry.path(), e))?;
            }
        }
        Ok(())
    }

    /// Writes the files of one iteration into a scratch directory and
    /// renames it into place, so an iteration is either fully present or
    /// absent.
    pub fn commit_iteration(&self, i: u32, files: &[(&str, Vec<u8>)]) -> Result<(), PipelineError> {
        let parent = self.iterations();
        fs::create_dir_all(&parent).map_err(|e| PipelineError::io(&parent, e))?;
        let tmp = parent.join(format!("{TMP_PREFIX}{i:02}"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
        }
        fs::create_dir(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
        for (name, bytes) in files {
            let p = tmp.join(name);
            write_synced(&p, bytes)?;
        }
        let dest = self.iteration(i);
        fs::rename(&tmp, &dest).map_err(|e| PipelineError::io(&dest, e))
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let mut f = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    f.write_all(bytes).map_err(|e| PipelineError::io(path, e))?;
    f.sync_all().map_err(|e| PipelineError::io(path, e))
}

/// Writes `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let name = path.file_name().expect("file path").to_string_lossy();
    let tmp = path.with_file_name(format!("{TMP_PREFIX}{name}"));
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.push(b'\n');
    }
    buf
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut buf = serde_json::to_vec_pretty(value).expect("record serializes");
    buf.push(b'\n');
    buf
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let raw = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| PipelineError::CorruptState(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let raw = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| PipelineError::CorruptState(format!("{}: {e}", path.display())))
}
