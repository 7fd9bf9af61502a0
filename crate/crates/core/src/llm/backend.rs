use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
#[cfg(feature = "http")]
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{LlmError, PromptBundle};

pub const DEFAULT_API_KEY_ENV: &str = "DOCPROBE_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}
fn default_temperature() -> f64 {
    0.7
}
fn default_timeout_s() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    500
}
fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    /// Upper bound on concurrent completion calls.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

impl BackendConfig {
    pub fn mock(fixture_dir: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: String::new(),
            api_key_env: default_api_key_env(),
            temperature: default_temperature(),
            timeout_s: default_timeout_s(),
            fixture_dir: Some(fixture_dir.into()),
            max_retries: default_max_retries(),
            retry_base_ms: default_retry_base_ms(),
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn http(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model_name: model_name.into(),
            fixture_dir: None,
            ..Self::mock("")
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(LlmError::InvalidConfig("http backend requires endpoint".into()));
                }
                if self.api_key_env.is_empty() {
                    return Err(LlmError::InvalidConfig("http backend requires api_key_env".into()));
                }
            }
            BackendKind::Mock => {
                if self.fixture_dir.as_deref().is_none_or(|p| p.as_os_str().is_empty()) {
                    return Err(LlmError::InvalidConfig("mock backend requires fixture_dir".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn CompletionBackend>, LlmError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Mock => Box::new(MockBackend::new(self.fixture_dir.clone().unwrap())),
            BackendKind::Http => Box::new(HttpBackend::new(self.clone())),
        })
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError>;
}

/// Serves canned responses from `<fixture_dir>/<digest>.txt`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    fixture_dir: PathBuf,
}

impl MockBackend {
    pub fn new(fixture_dir: impl Into<PathBuf>) -> Self {
        MockBackend {
            fixture_dir: fixture_dir.into(),
        }
    }

    pub fn fixture_path(&self, digest: &str) -> PathBuf {
        self.fixture_dir.join(format!("{digest}.txt"))
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        let path = self.fixture_path(&prompt.digest);
        match std::fs::read(&path) {
            Ok(bytes) => String::from_utf8(bytes)
                .map_err(|e| LlmError::BackendUnavailable(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(LlmError::FixtureMissing(prompt.digest.clone()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Chat-style JSON completion endpoint with bearer auth.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: BackendConfig,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Self {
        HttpBackend { config }
    }

    pub fn request_body(&self, prompt: &PromptBundle) -> serde_json::Value {
        json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        })
    }
}

#[cfg(feature = "http")]
enum Attempt {
    Done(String),
    Retry(LlmError),
    Fatal(LlmError),
}

#[cfg(feature = "http")]
impl HttpBackend {
    fn attempt(&self, agent: &ureq::Agent, key: &str, body: &serde_json::Value) -> Attempt {
        let endpoint = self.config.endpoint.as_deref().unwrap_or_default();
        let result = agent
            .post(endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body);
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::BackendUnavailable(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 {
            return Attempt::Retry(LlmError::RateLimited);
        }
        if status >= 500 {
            return Attempt::Retry(LlmError::BackendUnavailable(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Attempt::Fatal(LlmError::BackendUnavailable(format!("HTTP {status}")));
        }
        let value: serde_json::Value = match resp.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(LlmError::BackendUnavailable(format!("bad response body: {e}"))),
        };
        match value.pointer("/choices/0/message/content").and_then(|v| v.as_str()) {
            Some(text) => Attempt::Done(text.to_string()),
            None => Attempt::Fatal(LlmError::BackendUnavailable("response has no choices[0].message.content".into())),
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        self.config.validate()?;
        let key = std::env::var(&self.config.api_key_env).map_err(|_| {
            LlmError::BackendUnavailable(format!("environment variable {} is not set", self.config.api_key_env))
        })?;
        self.complete_with_key(prompt, &key)
    }
}

impl HttpBackend {
    #[cfg(feature = "http")]
    fn complete_with_key(&self, prompt: &PromptBundle, key: &str) -> Result<String, LlmError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(self.config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let body = self.request_body(prompt);
        let mut last_err = LlmError::BackendUnavailable("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.retry_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.attempt(&agent, key, &body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => last_err = e,
            }
        }
        Err(last_err)
    }

    #[cfg(not(feature = "http"))]
    fn complete_with_key(&self, _prompt: &PromptBundle, _key: &str) -> Result<String, LlmError> {
        Err(LlmError::BackendUnavailable("built without the `http` feature".into()))
    }
}

/// Send one prompt through the backend described by `config`.
pub fn complete(config: &BackendConfig, prompt: &PromptBundle) -> Result<String, LlmError> {
    config.build()?.complete(prompt)
}

/// A backend plus optional JSON-lines tracing of every exchange.
pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    trace: Option<Mutex<File>>,
}

impl Gateway {
    pub fn new(backend: Box<dyn CompletionBackend>) -> Self {
        Gateway { backend, trace: None }
    }

    pub fn from_config(config: &BackendConfig) -> Result<Self, LlmError> {
        Ok(Self::new(config.build()?))
    }

    pub fn with_trace(mut self, path: &Path) -> Result<Self, LlmError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.trace = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        let result = self.backend.complete(prompt);
        if let Some(trace) = &self.trace {
            let record = json!({
                "digest": prompt.digest,
                "template_id": prompt.template_id,
                "system": prompt.system_text,
                "user": prompt.user_text,
                "response": result.as_ref().ok(),
                "error": result.as_ref().err().map(|e| e.to_string()),
            });
            let mut f = trace.lock().unwrap_or_else(|p| p.into_inner());
            writeln!(f, "{record}")?;
        }
        result
    }
}
