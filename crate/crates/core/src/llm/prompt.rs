use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::LazyLock;

use super::LlmError;

/// Named values substituted into a template.
pub type PromptContext = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    CommentGen,
    PropertyExtract,
    TestGen,
}

impl TemplateId {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::CommentGen => "comment_gen",
            TemplateId::PropertyExtract => "property_extract",
            TemplateId::TestGen => "test_gen",
        }
    }

    fn texts(self) -> (&'static str, &'static str) {
        match self {
            TemplateId::CommentGen => (
                include_str!("../../templates/comment_gen.system.txt"),
                include_str!("../../templates/comment_gen.user.txt"),
            ),
            TemplateId::PropertyExtract => (
                include_str!("../../templates/property_extract.system.txt"),
                include_str!("../../templates/property_extract.user.txt"),
            ),
            TemplateId::TestGen => (
                include_str!("../../templates/test_gen.system.txt"),
                include_str!("../../templates/test_gen.user.txt"),
            ),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template_id: TemplateId,
    pub system_text: String,
    pub user_text: String,
    /// Hex SHA-256 over the canonicalized texts.
    pub digest: String,
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{([a-z_]+)\}\}").unwrap());

/// Substitute every `{{name}}` in one pass; substituted values are never
/// re-scanned, so a value containing braces is inserted verbatim.
fn substitute(template: &str, context: &PromptContext) -> Result<String, LlmError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(template) {
        let whole = caps.get(0).unwrap();
        let name = &caps[1];
        let value = context
            .get(name)
            .ok_or_else(|| LlmError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// Normalize line endings, drop trailing whitespace on each line and
/// surrounding blank lines.
fn canonicalize(text: &str) -> String {
    let text = text.replace("\r\n", "\n");
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    lines.join("\n").trim_matches('\n').to_string()
}

fn digest_of(template_id: TemplateId, system: &str, user: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(template_id.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(canonicalize(system).as_bytes());
    hasher.update([0u8]);
    hasher.update(canonicalize(user).as_bytes());
    hex::encode(hasher.finalize())
}

pub fn render_prompt(template_id: TemplateId, context: &PromptContext) -> Result<PromptBundle, LlmError> {
    let (system, user) = template_id.texts();
    let system_text = substitute(system, context)?;
    let user_text = substitute(user, context)?;
    let digest = digest_of(template_id, &system_text, &user_text);
    Ok(PromptBundle {
        template_id,
        system_text,
        user_text,
        digest,
    })
}

impl PromptBundle {
    /// Recompute the digest from the stored texts.
    pub fn recompute_digest(&self) -> String {
        digest_of(self.template_id, &self.system_text, &self.user_text)
    }
}
