//! HTTP/JSON QA generation backend with strict response validation.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::paragraph::Paragraph;
use super::types::{QaSample, QuestionKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    /// Name of the environment variable holding the bearer token; unset means no auth.
    pub token_env: Option<String>,
    pub timeout_ms: u64,
    /// Attempts after the first one.
    pub retries: u32,
    pub backoff_ms: u64,
    /// Upper bound on concurrent requests across videos.
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8080/generate".into(),
            token_env: Some("MMEGO_QA_TOKEN".into()),
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    paragraph: &'a str,
    n_questions: usize,
}

/// Parses and validates a response body: an array of objects with exactly
/// `question`, `answer` (non-empty strings) and `narration_index` in `1..=sentences`.
pub fn parse_response(body: &str, sentences: usize) -> std::result::Result<Vec<QaSample>, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("not JSON: {e}"))?;
    let items = v.as_array().ok_or("response is not an array")?;
    let mut out = Vec::with_capacity(items.len());
    for (i, it) in items.iter().enumerate() {
        let obj = it.as_object().ok_or_else(|| format!("item {i} is not an object"))?;
        if obj.len() != 3 {
            return Err(format!("item {i} must have exactly question, answer, narration_index"));
        }
        let text = |key: &str| -> std::result::Result<String, String> {
            match obj.get(key).and_then(Value::as_str).map(str::trim) {
                Some(s) if !s.is_empty() => Ok(s.to_string()),
                _ => Err(format!("item {i}: {key} must be a non-empty string")),
            }
        };
        let (question, answer) = (text("question")?, text("answer")?);
        let idx = obj
            .get("narration_index")
            .and_then(Value::as_u64)
            .ok_or_else(|| format!("item {i}: narration_index must be a non-negative integer"))?;
        if idx == 0 || idx as usize > sentences {
            return Err(format!("item {i}: narration_index {idx} outside 1..={sentences}"));
        }
        out.push(QaSample {
            question,
            answer,
            source_narration_idx: idx as usize,
            kind: QuestionKind::Open,
            keyframe_time_range_s: None,
            keyframe_indices: Vec::new(),
            keyframe_fallback: false,
        });
    }
    Ok(out)
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, paragraph: &Paragraph, n: usize, token: Option<&str>) -> std::result::Result<Vec<QaSample>, String> {
        let text = paragraph.text();
        let mut req = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(RequestBody { paragraph: &text, n_questions: n }).map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        parse_response(&body, paragraph.len())
    }

    /// Sends the paragraph, retrying transport and schema failures with
    /// exponential backoff until the retry budget is spent.
    pub fn generate(&self, paragraph: &Paragraph, n_questions: usize) -> Result<Vec<QaSample>> {
        let token = match &self.config.token_env {
            Some(var) => std::env::var(var).ok(),
            None => None,
        };
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(paragraph, n_questions, token.as_deref()) {
                Ok(qa) => return Ok(qa),
                Err(e) => {
                    log::warn!("remote QA attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(Error::Backend(format!("retries exhausted after {} attempts: {last}", self.config.retries + 1)))
    }
}
