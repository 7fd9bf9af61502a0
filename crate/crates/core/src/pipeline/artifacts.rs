//! Per-comment stage artifacts. None of them hold timestamps or durations,
//! so a rerun with the mock backend reproduces them byte for byte.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::TestCase;
use crate::estimator::CorrectnessScore;
use crate::harness::{TestId, TestStatus, TestTally};
use crate::llm::{GeneratedTestSource, PropertySpec};
use crate::source::MethodSignature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractArtifact {
    pub schema_version: u32,
    pub comment_id: String,
    pub subject_file: PathBuf,
    pub class_name: String,
    pub package: Option<String>,
    pub signature: MethodSignature,
    pub constructors: Vec<MethodSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveArtifact {
    pub schema_version: u32,
    pub comment_id: String,
    pub sanitized: bool,
    pub examples: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertiesArtifact {
    pub schema_version: u32,
    pub comment_id: String,
    pub prompt_digest: String,
    pub response: String,
    /// Empty when the comment states nothing testable.
    pub properties: Vec<PropertySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyTests {
    pub property_index: usize,
    pub property: String,
    pub prompt_digest: String,
    pub response: String,
    pub tests: Vec<GeneratedTestSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GentestsArtifact {
    pub schema_version: u32,
    pub comment_id: String,
    pub properties: Vec<PropertyTests>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedOutcome {
    pub test_id: TestId,
    pub method_name: String,
    /// Relative to the project root; absent when no host could be chosen.
    pub host_file: Option<PathBuf>,
    pub status: TestStatus,
    pub log_excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecuteArtifact {
    pub schema_version: u32,
    pub comment_id: String,
    pub outcomes: Vec<RecordedOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreArtifact {
    pub schema_version: u32,
    pub comment_id: String,
    pub tally: TestTally,
    pub score: CorrectnessScore,
}
