use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PromptMessage;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {message}")]
    BackendUnavailable { message: String, transient: bool },
    #[error("no replay fixture for transcript {0}")]
    FixtureMissing(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

impl BackendError {
    pub fn unavailable(message: impl Into<String>, transient: bool) -> Self {
        BackendError::BackendUnavailable { message: message.into(), transient }
    }

    fn is_transient(&self) -> bool {
        matches!(self, BackendError::BackendUnavailable { transient: true, .. })
    }
}

/// A chat-completion endpoint. Implementations must tolerate concurrent sessions.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, messages: &[PromptMessage]) -> Result<String, BackendError>;
}

/// First 16 hex digits of SHA-256 over the compact JSON of `messages`.
pub fn transcript_hash(messages: &[PromptMessage]) -> String {
    let canonical = serde_json::to_string(messages).expect("messages serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(digest)[..16].to_string()
}

pub fn fixture_path(dir: &Path, messages: &[PromptMessage]) -> PathBuf {
    dir.join(format!("{}.txt", transcript_hash(messages)))
}

/// Serves committed responses keyed by [`transcript_hash`].
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> String {
        format!("replay:{}", self.dir.display())
    }

    fn complete(&self, messages: &[PromptMessage]) -> Result<String, BackendError> {
        let path = fixture_path(&self.dir, messages);
        std::fs::read_to_string(&path).map_err(|_| BackendError::FixtureMissing(transcript_hash(messages)))
    }
}

/// Returns canned responses in order, regardless of the prompt.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    queue: Mutex<VecDeque<String>>,
}

#[derive(Deserialize)]
struct ScriptFile {
    response: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
struct ScriptEntry {
    text: String,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, responses: Vec<String>) -> Self {
        ScriptedBackend { name: name.into(), queue: Mutex::new(responses.into()) }
    }

    /// TOML file holding `[[response]]` tables with a `text` key.
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BackendError::unavailable(format!("{}: {e}", path.display()), false))?;
        let file: ScriptFile =
            toml::from_str(&text).map_err(|e| BackendError::unavailable(format!("{}: {e}", path.display()), false))?;
        Ok(Self::new(path.display().to_string(), file.response.into_iter().map(|r| r.text).collect()))
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script queue").len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> String {
        format!("script:{}", self.name)
    }

    fn complete(&self, _messages: &[PromptMessage]) -> Result<String, BackendError> {
        self.queue.lock().expect("script queue").pop_front().ok_or_else(|| BackendError::unavailable("script exhausted", false))
    }
}

/// Forwards to an inner backend and stores each response as a replay fixture.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        RecordingBackend { inner, dir: dir.into() }
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, messages: &[PromptMessage]) -> Result<String, BackendError> {
        let reply = self.inner.complete(messages)?;
        std::fs::create_dir_all(&self.dir)
            .and_then(|_| std::fs::write(fixture_path(&self.dir, messages), &reply))
            .map_err(|e| BackendError::unavailable(format!("recording to {}: {e}", self.dir.display()), false))?;
        Ok(reply)
    }
}

impl ChatBackend for Box<dyn ChatBackend> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, messages: &[PromptMessage]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 60,
            backoff_ms: 500,
        }
    }
}

pub const API_KEY_ENV: &str = "TARGET_LLM_API_KEY";

/// Raw POST of a JSON body, returning the JSON reply.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &serde_json::Value) -> Result<serde_json::Value, BackendError>;
}

#[cfg(feature = "http")]
pub struct UreqTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        UreqTransport { agent }
    }
}

#[cfg(feature = "http")]
impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &serde_json::Value) -> Result<serde_json::Value, BackendError> {
        let resp = self.agent.post(url).header("Authorization", &format!("Bearer {bearer}")).send_json(body).map_err(|e| {
            let transient = match &e {
                ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
                ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed => true,
                _ => false,
            };
            BackendError::unavailable(e.to_string(), transient)
        })?;
        resp.into_body().read_json().map_err(|e| BackendError::MalformedResponse(e.to_string()))
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend<T> {
    config: HttpConfig,
    api_key: String,
    transport: T,
    sleep: fn(Duration),
}

#[cfg(feature = "http")]
impl HttpBackend<UreqTransport> {
    /// Reads the key from `TARGET_LLM_API_KEY`.
    pub fn from_env(config: HttpConfig) -> Result<Self, BackendError> {
        let key =
            std::env::var(API_KEY_ENV).map_err(|_| BackendError::unavailable(format!("{API_KEY_ENV} is not set"), false))?;
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs));
        Ok(HttpBackend::with_transport(config, key, transport))
    }
}

impl<T: Transport> HttpBackend<T> {
    pub fn with_transport(config: HttpConfig, api_key: String, transport: T) -> Self {
        HttpBackend { config, api_key, transport, sleep: std::thread::sleep }
    }

    /// Replaces the delay function, e.g. with a no-op in tests.
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    fn once(&self, messages: &[PromptMessage]) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        let reply = self.transport.post_json(&self.config.endpoint, &self.api_key, &body)?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::MalformedResponse(format!("no choices[0].message.content in {reply}")))
    }
}

impl<T: Transport> ChatBackend for HttpBackend<T> {
    fn id(&self) -> String {
        format!("http:{}:{}", self.config.endpoint, self.config.model)
    }

    fn complete(&self, messages: &[PromptMessage]) -> Result<String, BackendError> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.once(messages) {
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    attempt += 1;
                    (self.sleep)(delay);
                    delay *= 2;
                }
                other => return other,
            }
        }
    }
}
