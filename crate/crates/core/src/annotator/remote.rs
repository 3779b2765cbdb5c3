//! Annotation through an OpenAI-compatible chat-completions endpoint.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{annotate_static, AnnotateError, Annotator, ToolManifest};
use crate::keying::{make_key, CacheKey};
use crate::model::{ParamValue, RequestType, SemanticFeatures, ToolCallRequest};

pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../../assets/annotate_prompt.txt");

const OUTPUT_SCHEMA: &str = r#"{"request_type": "INFORMATIONAL" | "COMMAND", "parameter_category": string | null, "ttl_seconds": number}"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL up to, not including, `/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub prompt_template: Option<PathBuf>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o-mini".to_string(),
            api_key_env: Some("OPENAI_API_KEY".to_string()),
            prompt_template: None,
            timeout_secs: 30,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

/// Fills the `{{tool_name}}`, `{{parameters}}` and `{{schema}}` placeholders.
pub fn build_prompt(template: &str, request: &ToolCallRequest) -> String {
    let params = serde_json::to_string(&request.params).unwrap_or_default();
    template
        .replace("{{tool_name}}", &request.tool_name)
        .replace("{{parameters}}", &params)
        .replace("{{schema}}", OUTPUT_SCHEMA)
}

#[derive(Deserialize)]
struct RawFeatures {
    request_type: Option<String>,
    #[serde(default)]
    parameter_category: Option<ParamValue>,
    ttl_seconds: Option<f64>,
}

/// Parses the model's answer. The JSON object may be wrapped in prose or a
/// code fence; the outermost braces are taken.
pub fn parse_llm_response(text: &str) -> Result<SemanticFeatures, AnnotateError> {
    let malformed = |m: &str| AnnotateError::MalformedLlmResponse(m.to_string());
    let start = text.find('{').ok_or_else(|| malformed("no JSON object"))?;
    let end = text.rfind('}').ok_or_else(|| malformed("no JSON object"))?;
    if end < start {
        return Err(malformed("no JSON object"));
    }
    let raw: RawFeatures =
        serde_json::from_str(&text[start..=end]).map_err(|e| AnnotateError::MalformedLlmResponse(e.to_string()))?;
    let request_type = match raw.request_type.as_deref().map(str::to_ascii_uppercase).as_deref() {
        Some("INFORMATIONAL") => RequestType::Informational,
        Some("COMMAND") => RequestType::Command,
        Some(other) => return Err(AnnotateError::MalformedLlmResponse(format!("unknown request_type `{other}`"))),
        None => return Err(malformed("missing request_type")),
    };
    let ttl = raw.ttl_seconds.ok_or_else(|| malformed("missing ttl_seconds"))?;
    if !(ttl.is_finite() && ttl >= 0.0) {
        return Err(malformed("ttl_seconds must be a non-negative number"));
    }
    if request_type == RequestType::Command {
        return Ok(SemanticFeatures::command());
    }
    let parameter_category = match raw.parameter_category {
        None | Some(ParamValue::Null) => None,
        Some(v) => Some(v.label()),
    };
    Ok(SemanticFeatures::informational(parameter_category, ttl))
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
    content: Option<String>,
}

/// Remote annotator with per-call memoization and an optional static
/// fallback used when the endpoint fails or answers garbage.
pub struct RemoteAnnotator {
    config: RemoteConfig,
    template: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    fallback: Option<ToolManifest>,
    memo: Mutex<HashMap<CacheKey, SemanticFeatures>>,
}

impl RemoteAnnotator {
    pub fn new(config: RemoteConfig, fallback: Option<ToolManifest>) -> Result<Self, AnnotateError> {
        let template = match &config.prompt_template {
            Some(path) => std::fs::read_to_string(path)?,
            None => DEFAULT_PROMPT_TEMPLATE.to_string(),
        };
        let api_key = config.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            config,
            template,
            api_key,
            agent,
            fallback,
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// Number of distinct calls answered by the endpoint so far.
    pub fn memo_len(&self) -> usize {
        self.memo.lock().map(|m| m.len()).unwrap_or(0)
    }

    fn request_once(&self, prompt: &str) -> Result<String, AnnotateError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": "You extract caching features from tool calls and answer in JSON."},
                {"role": "user", "content": prompt},
            ],
        });
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| AnnotateError::EndpointUnavailable(e.to_string()))?;
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| AnnotateError::MalformedLlmResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AnnotateError::MalformedLlmResponse("empty choices".into()))
    }

    fn query(&self, request: &ToolCallRequest) -> Result<SemanticFeatures, AnnotateError> {
        let prompt = build_prompt(&self.template, request);
        let mut attempt = 0;
        loop {
            match self.request_once(&prompt) {
                Ok(text) => return parse_llm_response(&text),
                Err(AnnotateError::EndpointUnavailable(msg)) if attempt >= self.config.retries => {
                    return Err(AnnotateError::EndpointUnavailable(msg))
                }
                Err(AnnotateError::EndpointUnavailable(_)) => {
                    std::thread::sleep(Duration::from_millis(self.config.backoff_ms << attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl Annotator for RemoteAnnotator {
    fn annotate(&self, request: &ToolCallRequest) -> Result<SemanticFeatures, AnnotateError> {
        let key = make_key(&request.tool_name, &request.params).ok();
        if let Some(k) = &key {
            if let Some(hit) = self.memo.lock().ok().and_then(|m| m.get(k).cloned()) {
                return Ok(hit);
            }
        }
        match self.query(request) {
            Ok(features) => {
                if let (Some(k), Ok(mut memo)) = (key, self.memo.lock()) {
                    memo.insert(k, features.clone());
                }
                Ok(features)
            }
            Err(e) => match &self.fallback {
                Some(manifest) => annotate_static(request, manifest),
                None => Err(e),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_schema_answer() {
        let f = parse_llm_response(r#"{"request_type":"INFORMATIONAL","ttl_seconds":3600,"parameter_category":"Paris"}"#)
            .unwrap();
        assert_eq!(f, SemanticFeatures::informational(Some("Paris".into()), 3600.0));
    }

    #[test]
    fn tolerates_code_fence() {
        let f = parse_llm_response("```json\n{\"request_type\":\"informational\",\"ttl_seconds\":300,\"parameter_category\":null}\n```")
            .unwrap();
        assert_eq!(f, SemanticFeatures::informational(None, 300.0));
    }

    #[test]
    fn missing_ttl_is_malformed() {
        let e = parse_llm_response(r#"{"request_type":"INFORMATIONAL","parameter_category":"Paris"}"#).unwrap_err();
        assert!(matches!(e, AnnotateError::MalformedLlmResponse(_)));
    }

    #[test]
    fn command_forces_zero_ttl() {
        let f = parse_llm_response(r#"{"request_type":"COMMAND","ttl_seconds":300}"#).unwrap();
        assert_eq!(f, SemanticFeatures::command());
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(parse_llm_response("I cannot help with that").is_err());
        assert!(parse_llm_response(r#"{"request_type":"MAYBE","ttl_seconds":1}"#).is_err());
    }

    #[test]
    fn prompt_fills_placeholders() {
        let mut params = crate::model::Params::new();
        params.insert("location".into(), "Paris".into());
        let r = ToolCallRequest::new(1, "u", "weather", params);
        let p = build_prompt(DEFAULT_PROMPT_TEMPLATE, &r);
        assert!(p.contains("tool: weather"));
        assert!(p.contains(r#"{"location":"Paris"}"#));
        assert!(p.contains("ttl_seconds\": number"));
        assert!(!p.contains("{{"));
    }
}
