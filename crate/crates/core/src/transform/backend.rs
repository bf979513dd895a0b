use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::simplify::{offline_simplify, RewriteRules};
use super::TransformError;

/// Why a single backend call failed. Transient failures are retried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendError::Transient(m) => write!(f, "transient: {m}"),
            BackendError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

/// Anything that rewrites a review. `prompt` is the rendered template;
/// offline backends work on `text` directly.
pub trait Transformer: Send + Sync {
    fn id(&self) -> &str;
    fn model(&self) -> &str;
    fn is_remote(&self) -> bool;
    fn transform(&self, prompt: &str, text: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTransformer;

impl Transformer for IdentityTransformer {
    fn id(&self) -> &str {
        "identity"
    }

    fn model(&self) -> &str {
        "none"
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn transform(&self, _prompt: &str, text: &str) -> Result<String, BackendError> {
        Ok(text.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct RuleTransformer {
    rules: RewriteRules,
    model: String,
}

impl RuleTransformer {
    /// The model name is a digest of the rule table, so editing the rules
    /// changes every cache key.
    pub fn new(rules: RewriteRules) -> Self {
        let canonical = serde_json::to_vec(rules.spec()).expect("rule spec serializes");
        let digest = hex::encode(Sha256::digest(&canonical));
        RuleTransformer {
            rules,
            model: format!("rules-{}", &digest[..12]),
        }
    }
}

impl Transformer for RuleTransformer {
    fn id(&self) -> &str {
        "rule"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn transform(&self, _prompt: &str, text: &str) -> Result<String, BackendError> {
        Ok(offline_simplify(text, &self.rules))
    }
}

/// Replays previously obtained transformations keyed by the original text,
/// e.g. a file of published original/simplified pairs.
#[derive(Debug, Clone)]
pub struct LookupTransformer {
    pairs: HashMap<String, String>,
    model: String,
}

impl LookupTransformer {
    pub fn from_pairs<I>(name: &str, pairs: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        LookupTransformer {
            pairs: pairs
                .into_iter()
                .map(|(o, t)| (o.trim().to_string(), t))
                .collect(),
            model: format!("lookup:{name}"),
        }
    }

    pub fn from_csv(
        path: &Path,
        original_column: &str,
        transformed_column: &str,
    ) -> Result<Self, TransformError> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}') == name)
                .ok_or_else(|| {
                    TransformError::Config(format!("{} has no column `{name}`", path.display()))
                })
        };
        let (oi, ti) = (find(original_column)?, find(transformed_column)?);
        let mut pairs = Vec::new();
        for record in reader.records() {
            let record = record?;
            if let (Some(o), Some(t)) = (record.get(oi), record.get(ti)) {
                pairs.push((o.to_string(), t.to_string()));
            }
        }
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::from_pairs(&name, pairs))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl Transformer for LookupTransformer {
    fn id(&self) -> &str {
        "lookup"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn transform(&self, _prompt: &str, text: &str) -> Result<String, BackendError> {
        self.pairs
            .get(text.trim())
            .cloned()
            .ok_or_else(|| BackendError::Fatal("no paired text for this review".into()))
    }
}

/// Connection settings for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub rate_limit_per_min: f64,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_retries: 3,
            backoff_base_ms: 500,
            rate_limit_per_min: 60.0,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), TransformError> {
        let bad = |m: String| Err(TransformError::Config(m));
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if !(self.rate_limit_per_min.is_finite() && self.rate_limit_per_min > 0.0) {
            return bad(format!(
                "rate limit must be > 0, got {}",
                self.rate_limit_per_min
            ));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return bad(format!(
                "endpoint `{}` is not an http(s) URL",
                self.endpoint
            ));
        }
        if self.model.trim().is_empty() {
            return bad("model name is empty".into());
        }
        Ok(())
    }
}

/// JSON-over-HTTP chat-completion client: one user message holding the
/// rendered prompt, answer taken from the first choice.
pub struct ChatCompletionBackend {
    config: BackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl ChatCompletionBackend {
    /// Reads the API key from the configured environment variable, if set.
    pub fn new(config: BackendConfig) -> Result<Self, TransformError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!(
                "{} is not set; requests are sent without credentials",
                config.api_key_env
            );
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(ChatCompletionBackend {
            config,
            api_key,
            agent,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl Transformer for ChatCompletionBackend {
    fn id(&self) -> &str {
        "chat-completion"
    }

    fn model(&self) -> &str {
        &self.config.model
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn transform(&self, prompt: &str, _text: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| BackendError::Transient(format!("request failed: {e}")))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(BackendError::Fatal(format!(
                    "authentication rejected (HTTP {status})"
                )))
            }
            408 | 429 | 500..=599 => return Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => return Err(BackendError::Fatal(format!("HTTP {status}"))),
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transient(format!("malformed response: {e}")))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}
