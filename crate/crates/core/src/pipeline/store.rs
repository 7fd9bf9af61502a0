use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage, SCHEMA_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const COMMENTS_FILE: &str = "comments.json";

/// Pretty JSON with a trailing newline: the on-disk form of every artifact.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| PipelineError::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Artifact(format!("{}: {e}", path.display())))
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Partial,
    Complete,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    pub started_unix: Option<f64>,
    pub finished_unix: Option<f64>,
    pub n_done: usize,
    pub n_reused: usize,
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Default for StageRecord {
    fn default() -> Self {
        StageRecord {
            status: StageStatus::Pending,
            started_unix: None,
            finished_unix: None,
            n_done: 0,
            n_reused: 0,
            n_failed: 0,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub comment_id: String,
    pub error: String,
}

/// Run bookkeeping. The only file that holds wall-clock times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    /// Hex SHA-256 of the config file bytes.
    pub config_digest: String,
    pub created_unix: f64,
    pub w: f64,
    pub stages: BTreeMap<Stage, StageRecord>,
    /// Failures from the most recent attempt at each stage.
    pub failures: Vec<Failure>,
    /// Seconds spent executing each test, keyed `comment_id/property/ordinal`.
    #[serde(default)]
    pub test_durations: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(run_id: &str, config_digest: &str, w: f64) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            run_id: run_id.to_string(),
            config_digest: config_digest.to_string(),
            created_unix: now_unix(),
            w,
            stages: Stage::ALL.iter().map(|&s| (s, StageRecord::default())).collect(),
            failures: Vec::new(),
            test_durations: BTreeMap::new(),
        }
    }
}

/// One run directory: `<runs_dir>/<run_id>/<stage>/<comment_id>.json`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub run_id: String,
    pub path: PathBuf,
}

impl RunDir {
    pub fn new(runs_dir: &Path, run_id: &str) -> Self {
        RunDir {
            run_id: run_id.to_string(),
            path: runs_dir.join(run_id),
        }
    }

    /// Find an existing run: `reference` is a run directory path or a run
    /// id under `runs_dir`.
    pub fn locate(reference: &str, runs_dir: &Path) -> Result<Self, PipelineError> {
        let direct = PathBuf::from(reference);
        let path = if direct.join(MANIFEST_FILE).is_file() {
            direct
        } else {
            let under = runs_dir.join(reference);
            if !under.join(MANIFEST_FILE).is_file() {
                return Err(PipelineError::UnknownRun(reference.to_string()));
            }
            under
        };
        let manifest: RunManifest = read_json(&path.join(MANIFEST_FILE))?;
        Ok(RunDir {
            run_id: manifest.run_id,
            path,
        })
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.path.join(stage.as_str())
    }

    pub fn artifact_path(&self, stage: Stage, comment_id: &str) -> PathBuf {
        self.stage_dir(stage).join(format!("{comment_id}.json"))
    }

    pub fn has_artifact(&self, stage: Stage, comment_id: &str) -> bool {
        self.artifact_path(stage, comment_id).is_file()
    }

    pub fn read_artifact<T: DeserializeOwned>(&self, stage: Stage, comment_id: &str) -> Result<T, PipelineError> {
        read_json(&self.artifact_path(stage, comment_id))
    }

    /// Artifacts are written once; an existing one is left alone.
    pub fn write_artifact<T: Serialize>(&self, stage: Stage, comment_id: &str, value: &T) -> Result<(), PipelineError> {
        let path = self.artifact_path(stage, comment_id);
        if path.exists() {
            return Ok(());
        }
        write_json(&path, value)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.path.join(MANIFEST_FILE)
    }

    pub fn read_manifest(&self) -> Result<RunManifest, PipelineError> {
        read_json(&self.manifest_path())
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), PipelineError> {
        write_json(&self.manifest_path(), manifest)
    }

    /// Comment ids with an artifact for `stage`, sorted.
    pub fn artifact_ids(&self, stage: Stage) -> Result<Vec<String>, PipelineError> {
        let dir = self.stage_dir(stage);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let name = entry?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }
}
