use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, SCHEMA_VERSION};
use crate::estimator::DEFAULT_W;
use crate::evalstats::{Category, LabeledScore};
use crate::harness::ProjectConfig;
use crate::llm::{BackendConfig, DEFAULT_PROPERTY_CAP};

fn default_w() -> f64 {
    DEFAULT_W
}
fn default_property_cap() -> usize {
    DEFAULT_PROPERTY_CAP
}
fn default_examples_k() -> usize {
    1
}
fn default_runs_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineKnobs {
    #[serde(default = "default_w")]
    pub w: f64,
    #[serde(default = "default_property_cap")]
    pub property_cap: usize,
    /// Example tests retrieved per comment.
    #[serde(default = "default_examples_k")]
    pub examples_k: usize,
    /// Replace literals in example tests (for machine-generated suites).
    #[serde(default)]
    pub sanitize_examples: bool,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
    /// Comments processed at once in the LLM stages; defaults to the backend limit.
    #[serde(default)]
    pub max_in_flight: Option<usize>,
}

impl Default for PipelineKnobs {
    fn default() -> Self {
        PipelineKnobs {
            w: default_w(),
            property_cap: default_property_cap(),
            examples_k: default_examples_k(),
            sanitize_examples: false,
            runs_dir: default_runs_dir(),
            max_in_flight: None,
        }
    }
}

/// Everything a run needs: backend, subject project and pipeline knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub backend: BackendConfig,
    pub project: ProjectConfig,
    #[serde(default)]
    pub pipeline: PipelineKnobs,
}

impl PipelineConfig {
    /// Parse a config file. Relative paths (project root, fixture dir, runs
    /// dir) are taken relative to the file's directory. Call [`validate`]
    /// after applying any overrides.
    ///
    /// [`validate`]: PipelineConfig::validate
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), PipelineError> {
        let bytes = std::fs::read(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_slice(&bytes).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok((cfg, bytes))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.project.root);
        fix(&mut self.pipeline.runs_dir);
        if let Some(dir) = self.backend.fixture_dir.as_mut() {
            fix(dir);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.backend.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.pipeline.w > 0.0 && self.pipeline.w.is_finite()) {
            return Err(PipelineError::Config(format!("w must be positive, got {}", self.pipeline.w)));
        }
        if self.pipeline.property_cap == 0 {
            return Err(PipelineError::Config("property_cap must be at least 1".into()));
        }
        if !self.project.root.is_dir() {
            return Err(PipelineError::Config(format!(
                "project root {} is not a directory",
                self.project.root.display()
            )));
        }
        if self.project.test_cmd.trim().is_empty() {
            return Err(PipelineError::Config("project.test_cmd is empty".into()));
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.pipeline.max_in_flight.unwrap_or(self.backend.max_in_flight).max(1)
    }
}

/// A human judgement of one comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub category: Category,
    /// Must agree with `category`; derived from it when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accurate: Option<bool>,
    #[serde(default)]
    pub ambiguous: bool,
}

impl Label {
    pub fn is_accurate(&self) -> bool {
        self.category == Category::Accurate
    }
}

/// One method-level comment to verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    /// Relative to the project root.
    pub subject_file: PathBuf,
    pub method_name: String,
    pub arity: usize,
    pub comment_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn check_label(id: &str, label: &Label) -> Result<(), PipelineError> {
    match label.accurate {
        Some(a) if a != label.is_accurate() => Err(PipelineError::Config(format!(
            "{id}: accurate={a} contradicts category {}",
            label.category.as_str()
        ))),
        _ => Ok(()),
    }
}

/// Read a JSON array of comment records. Ids double as file names, so they
/// must be unique and use only `[A-Za-z0-9._-]`.
pub fn load_comments(path: &Path) -> Result<Vec<CommentRecord>, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let records: Vec<CommentRecord> =
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    for r in &records {
        if !valid_id(&r.comment_id) {
            return Err(PipelineError::Config(format!("invalid comment_id {:?}", r.comment_id)));
        }
        if !seen.insert(r.comment_id.as_str()) {
            return Err(PipelineError::Config(format!("duplicate comment_id {}", r.comment_id)));
        }
        if let Some(label) = &r.label {
            check_label(&r.comment_id, label)?;
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub comment_id: String,
    #[serde(flatten)]
    pub label: Label,
}

impl LabelRecord {
    pub fn with_score(&self, score: f64) -> LabeledScore {
        LabeledScore {
            comment_id: self.comment_id.clone(),
            score,
            accurate: self.label.is_accurate(),
            category: self.label.category,
            ambiguous: self.label.ambiguous,
        }
    }
}

/// Labels from a JSON array. Each element is either flat
/// (`{comment_id, category, ambiguous}`) or a comment record with a nested
/// `label`, so a labeled comments file works as a labels file.
pub fn load_labels(path: &Path) -> Result<Vec<LabelRecord>, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let items: Vec<serde_json::Value> =
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for item in items {
        let id = item
            .get("comment_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| PipelineError::Config(format!("{}: record without comment_id", path.display())))?
            .to_string();
        let label_value = match item.get("label") {
            Some(serde_json::Value::Null) => continue,
            Some(nested) => nested.clone(),
            None if item.get("category").is_some() => item.clone(),
            None => continue,
        };
        let label: Label =
            serde_json::from_value(label_value).map_err(|e| PipelineError::Config(format!("{id}: {e}")))?;
        check_label(&id, &label)?;
        out.push(LabelRecord { comment_id: id, label });
    }
    Ok(out)
}

/// Labels embedded in comment records.
pub fn embedded_labels(comments: &[CommentRecord]) -> Vec<LabelRecord> {
    comments
        .iter()
        .filter_map(|c| {
            c.label.clone().map(|label| LabelRecord {
                comment_id: c.comment_id.clone(),
                label,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids() {
        assert!(valid_id("calc-add_1.v2"));
        assert!(!valid_id("../x"));
        assert!(!valid_id("a/b"));
        assert!(!valid_id(""));
        assert!(!valid_id(".hidden"));
    }

    #[test]
    fn labels_in_both_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.json");
        std::fs::write(
            &path,
            r#"[
              {"comment_id": "a", "category": "Accurate"},
              {"comment_id": "b", "category": "CodeMischaracterization", "ambiguous": true},
              {"comment_id": "c", "subject_file": "X.java", "method_name": "f", "arity": 0,
               "comment_text": "t", "label": {"category": "HallucinatingIntent", "accurate": false}},
              {"comment_id": "d", "subject_file": "X.java", "method_name": "f", "arity": 0, "comment_text": "t"}
            ]"#,
        )
        .unwrap();
        let labels = load_labels(&path).unwrap();
        assert_eq!(labels.len(), 3);
        assert!(labels[0].label.is_accurate());
        assert!(labels[1].label.ambiguous);
        assert_eq!(labels[2].label.category, Category::HallucinatingIntent);

        std::fs::write(&path, r#"[{"comment_id": "a", "category": "Accurate", "accurate": false}]"#).unwrap();
        assert!(matches!(load_labels(&path), Err(PipelineError::Config(_))));
    }

    #[test]
    fn comments_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let rec = r#"{"comment_id": "a", "subject_file": "X.java", "method_name": "f", "arity": 0, "comment_text": "t"}"#;
        std::fs::write(&path, format!("[{rec},{rec}]")).unwrap();
        assert!(matches!(load_comments(&path), Err(PipelineError::Config(m)) if m.contains("duplicate")));
    }
}
