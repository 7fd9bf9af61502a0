//! Prompt rendering, completion backends, and response parsing.

mod backend;
mod parse;
mod prompt;

pub use backend::{complete, BackendConfig, BackendKind, CompletionBackend, Gateway, HttpBackend, MockBackend};
pub use parse::{parse_properties, parse_test_sources, GeneratedTestSource, PropertySpec, DEFAULT_PROPERTY_CAP};
pub use prompt::{render_prompt, PromptBundle, PromptContext, TemplateId};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("missing placeholder value: {0}")]
    MissingPlaceholder(String),
    #[error("completion backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no fixture for prompt digest {0}")]
    FixtureMissing(String),
    #[error("rate limited by the completion backend")]
    RateLimited,
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("response contains no WHEN/THEN properties")]
    NoPropertiesFound,
    #[error("response contains no test methods")]
    NoTestsParsed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
