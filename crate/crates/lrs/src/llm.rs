//! Live chat-completion client, configured from the environment. Without a
//! key the service falls back to the deterministic scripted mock.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use vita_core::tutor::{LlmClient, LlmError, LlmParams, ScriptedMock};

pub const ENV_ENDPOINT: &str = "VITA_LLM_ENDPOINT";
pub const ENV_KEY: &str = "VITA_LLM_KEY";
pub const ENV_MODEL: &str = "VITA_LLM_MODEL";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const MOCK_BANNER: &str = "MOCK MODE: no LLM key configured; tutor replies come from a deterministic scripted stand-in";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveLlmConfig {
    pub endpoint: String,
    pub key: String,
    pub model: String,
}

impl LiveLlmConfig {
    /// `None` when no key is set.
    pub fn from_env() -> Option<Self> {
        let key = std::env::var(ENV_KEY).ok().filter(|k| !k.trim().is_empty())?;
        Some(LiveLlmConfig {
            endpoint: std::env::var(ENV_ENDPOINT).unwrap_or_else(|_| DEFAULT_ENDPOINT.into()),
            key,
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into()),
        })
    }
}

/// OpenAI-style `/chat/completions` client.
///
/// `send` blocks. Inside a tokio runtime it must run on a blocking thread
/// (`spawn_blocking`); outside one it spins up a private runtime per call.
pub struct ChatCompletionsClient {
    cfg: LiveLlmConfig,
    http: reqwest::Client,
}

impl ChatCompletionsClient {
    pub fn new(cfg: LiveLlmConfig) -> Self {
        let http = reqwest::Client::builder().timeout(Duration::from_secs(60)).build().expect("static client config");
        ChatCompletionsClient { cfg, http }
    }

    async fn request(&self, prompt: &str, params: &LlmParams) -> Result<String, LlmError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
        });
        let resp = self
            .http
            .post(&self.cfg.endpoint)
            .bearer_auth(&self.cfg.key)
            .json(&body)
            .send()
            .await
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Status { status: status.as_u16(), body: text });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into()))
    }
}

impl LlmClient for ChatCompletionsClient {
    fn describe(&self) -> String {
        format!("live {} ({})", self.cfg.endpoint, self.cfg.model)
    }

    fn send(&self, prompt: &str, params: &LlmParams) -> Result<String, LlmError> {
        match tokio::runtime::Handle::try_current() {
            Ok(handle) => handle.block_on(self.request(prompt, params)),
            Err(_) => tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(|e| LlmError::Transport(e.to_string()))?
                .block_on(self.request(prompt, params)),
        }
    }
}

/// The live client when configured, else the mock. The flag is true in mock mode.
pub fn client_for(cfg: Option<LiveLlmConfig>) -> (Arc<dyn LlmClient>, bool) {
    match cfg {
        Some(cfg) => (Arc::new(ChatCompletionsClient::new(cfg)), false),
        None => (Arc::new(ScriptedMock::new()), true),
    }
}
