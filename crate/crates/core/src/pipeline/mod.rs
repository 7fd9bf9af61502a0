//! Resumable orchestration of the whole pipeline, plus evaluation and reports.
//!
//! Each stage writes one JSON artifact per comment under
//! `<runs_dir>/<run_id>/<stage>/<comment_id>.json`. A stage skips comments
//! whose artifact already exists, so an interrupted run picks up where it
//! stopped and never pays twice for a completion.

mod artifacts;
mod config;
mod evaluate;
mod report;
mod run;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifacts::*;
pub use config::{
    embedded_labels, load_comments, load_labels, CommentRecord, Label, LabelRecord, PipelineConfig, PipelineKnobs,
};
pub use evaluate::{
    evaluate_runs, evaluate_tallies, run_tallies, EvaluateOptions, EvaluatedComment, EvaluationReport, PassRates, RunMetrics, SweepPoint,
    THRESHOLD_CUTOFFS,
};
pub use report::{report, DetailedRow, JsonReport, PropertyVerdicts, ReportFormat, ReportRow, TestVerdict, CSV_HEADER};
pub use run::{fresh_run_id, property_prompt, run_pipeline, test_prompt, Pipeline, RunOptions, RunSummary, TRACE_FILE};
pub use store::{
    read_json, to_json_bytes, write_atomic, write_json, Failure, RunDir, RunManifest, StageRecord, StageStatus,
    COMMENTS_FILE, CONFIG_FILE, MANIFEST_FILE,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown stage {0:?} (expected one of: extract, retrieve, properties, gentests, execute, score, evaluate)")]
    UnknownStage(String),
    #[error("unknown run {0:?}")]
    UnknownRun(String),
    #[error("need at least 2 accurate and 2 inaccurate unambiguous labels with scores, got {accurate} and {inaccurate}")]
    InsufficientLabels { accurate: usize, inaccurate: usize },
    #[error("bad artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Process exit code: 2 for problems with the invocation or config, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::UnknownStage(_) | PipelineError::UnknownRun(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Retrieve,
    Properties,
    Gentests,
    Execute,
    Score,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Extract,
        Stage::Retrieve,
        Stage::Properties,
        Stage::Gentests,
        Stage::Execute,
        Stage::Score,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Retrieve => "retrieve",
            Stage::Properties => "properties",
            Stage::Gentests => "gentests",
            Stage::Execute => "execute",
            Stage::Score => "score",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Stages whose per-comment artifacts this one reads.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Extract => &[],
            Stage::Retrieve => &[Stage::Extract],
            Stage::Properties => &[Stage::Extract],
            Stage::Gentests => &[Stage::Extract, Stage::Retrieve, Stage::Properties],
            Stage::Execute => &[Stage::Gentests],
            Stage::Score => &[Stage::Execute],
            Stage::Evaluate => &[],
        }
    }

    /// Parse a comma-separated list; result is in pipeline order without repeats.
    pub fn parse_list(list: &str) -> Result<Vec<Stage>, PipelineError> {
        let mut stages = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Stage>, _>>()?;
        stages.sort();
        stages.dedup();
        Ok(stages)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::UnknownStage(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists() {
        assert_eq!(
            Stage::parse_list("score, extract,score").unwrap(),
            vec![Stage::Extract, Stage::Score]
        );
        assert!(matches!(Stage::parse_list("extract,bogus"), Err(PipelineError::UnknownStage(s)) if s == "bogus"));
        assert_eq!(PipelineError::UnknownStage("x".into()).exit_code(), 2);
    }
}
