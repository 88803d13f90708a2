use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use super::{
    build_prompt, fallback_feedback, parse_feedback, Evidence, FeedbackReport, PromptBundle,
    Provider, DEFAULT_PROMPT_CAP,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Chat-completion URL. Without one every call uses the fallback.
    pub endpoint: Option<String>,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
    pub prompt_cap: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: None,
            model: "gpt-4o-mini".into(),
            token_env: "EDULOOP_LLM_TOKEN".into(),
            timeout_secs: 30.0,
            temperature: 0.2,
            max_tokens: 700,
            max_in_flight: 2,
            prompt_cap: DEFAULT_PROMPT_CAP,
        }
    }
}

/// Shared client; clones share the in-flight limit.
#[derive(Debug, Clone)]
pub struct FeedbackClient {
    config: ProviderConfig,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
}

const ATTEMPTS: usize = 2;

impl FeedbackClient {
    pub fn new(config: ProviderConfig) -> Self {
        let timeout = Duration::from_secs_f64(config.timeout_secs.max(0.001));
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .unwrap_or_default();
        let permits = Arc::new(Semaphore::new(config.max_in_flight.max(1)));
        FeedbackClient {
            config,
            http,
            permits,
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Always returns a well-formed report. Provider problems are logged
    /// and recorded in `fallback_reason`.
    pub async fn generate_feedback(&self, ev: &Evidence<'_>) -> FeedbackReport {
        let cause = match self.try_llm(ev).await {
            Ok(report) => return report,
            Err(cause) => cause,
        };
        log::warn!("feedback provider unavailable, using fallback: {cause}");
        let mut report = fallback_feedback(ev);
        report.fallback_reason = Some(cause);
        report
    }

    async fn try_llm(&self, ev: &Evidence<'_>) -> Result<FeedbackReport, String> {
        let endpoint = self
            .config
            .endpoint
            .as_deref()
            .ok_or_else(|| "no endpoint configured".to_owned())?;
        let token = std::env::var(&self.config.token_env)
            .ok()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| format!("environment variable {} not set", self.config.token_env))?;
        let bundle = build_prompt(ev, self.config.prompt_cap).map_err(|e| e.to_string())?;

        let mut last = String::new();
        for attempt in 1..=ATTEMPTS {
            match self.request(endpoint, &token, &bundle).await {
                Ok(text) => match parse_feedback(&text) {
                    Ok(sections) => {
                        return Ok(FeedbackReport {
                            provider: Provider::Llm,
                            sections,
                            raw_response: text,
                            fallback_reason: None,
                        })
                    }
                    Err(e) => last = format!("attempt {attempt}: unparseable response: {e}"),
                },
                Err(e) => last = format!("attempt {attempt}: {e}"),
            }
            log::info!("{last}");
        }
        Err(last)
    }

    async fn request(
        &self,
        endpoint: &str,
        token: &str,
        bundle: &PromptBundle,
    ) -> Result<String, String> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|e| format!("rate limiter closed: {e}"))?;
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": bundle.fixed_part},
                {"role": "user", "content": bundle.dynamic_part},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let resp = self
            .http
            .post(endpoint)
            .bearer_auth(token)
            .json(&body)
            .send()
            .await
            .map_err(|e| format!("transport error: {e}"))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP status {status}"));
        }
        let value: Value = resp
            .json()
            .await
            .map_err(|e| format!("response is not JSON: {e}"))?;
        let choice = &value["choices"][0];
        choice["message"]["content"]
            .as_str()
            .or_else(|| choice["text"].as_str())
            .map(str::to_owned)
            .ok_or_else(|| "response has no choice text".to_owned())
    }
}
