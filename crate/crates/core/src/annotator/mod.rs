//! Semantic annotation of tool calls and the rule-based cacheability gate.

mod remote;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{RequestType, SemanticFeatures, ToolCallRequest};

pub use remote::{build_prompt, parse_llm_response, RemoteAnnotator, RemoteConfig, DEFAULT_PROMPT_TEMPLATE};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("tool `{0}` has no manifest entry")]
    UnknownTool(String),
    #[error("annotation endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("malformed annotation response: {0}")]
    MalformedLlmResponse(String),
    #[error("invalid tool manifest: {0}")]
    InvalidManifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that can produce semantic features for a request.
pub trait Annotator: Send + Sync {
    fn annotate(&self, request: &ToolCallRequest) -> Result<SemanticFeatures, AnnotateError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtlClass {
    Command,
    Realtime,
    Computational,
    Static,
}

impl TtlClass {
    pub fn seconds(self) -> f64 {
        match self {
            TtlClass::Command => 0.0,
            TtlClass::Realtime => 60.0,
            TtlClass::Computational => 300.0,
            TtlClass::Static => 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryRule {
    #[default]
    FirstParam,
    NamedParam(String),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub request_type: RequestType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttl_class: Option<TtlClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttl_seconds: Option<f64>,
    #[serde(default)]
    pub category_rule: CategoryRule,
}

impl ManifestEntry {
    pub fn new(request_type: RequestType, ttl_class: TtlClass, category_rule: CategoryRule) -> Self {
        Self {
            request_type,
            ttl_class: Some(ttl_class),
            ttl_seconds: None,
            category_rule,
        }
    }

    /// Explicit seconds win over the class; commands always get zero.
    pub fn ttl(&self) -> f64 {
        if self.request_type == RequestType::Command {
            return 0.0;
        }
        self.ttl_seconds
            .or(self.ttl_class.map(TtlClass::seconds))
            .unwrap_or(0.0)
    }
}

/// Static per-tool registration: request type, TTL and grouping rule.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolManifest {
    pub tools: BTreeMap<String, ManifestEntry>,
}

impl ToolManifest {
    pub fn insert(&mut self, tool: impl Into<String>, entry: ManifestEntry) {
        self.tools.insert(tool.into(), entry);
    }

    pub fn from_json(text: &str) -> Result<Self, AnnotateError> {
        let m: ToolManifest =
            serde_json::from_str(text).map_err(|e| AnnotateError::InvalidManifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), AnnotateError> {
        for (name, e) in &self.tools {
            if e.request_type == RequestType::Informational && e.ttl_class.is_none() && e.ttl_seconds.is_none() {
                return Err(AnnotateError::InvalidManifest(format!("`{name}` needs ttl_class or ttl_seconds")));
            }
            if e.ttl_seconds.is_some_and(|t| !(t.is_finite() && t >= 0.0)) {
                return Err(AnnotateError::InvalidManifest(format!("`{name}` has a negative ttl")));
            }
        }
        Ok(())
    }
}

/// Features from the manifest. The first-parameter rule only applies to calls
/// with two or more parameters.
pub fn annotate_static(r: &ToolCallRequest, m: &ToolManifest) -> Result<SemanticFeatures, AnnotateError> {
    let entry = m
        .tools
        .get(&r.tool_name)
        .ok_or_else(|| AnnotateError::UnknownTool(r.tool_name.clone()))?;
    if entry.request_type == RequestType::Command {
        return Ok(SemanticFeatures::command());
    }
    let parameter_category = match &entry.category_rule {
        CategoryRule::FirstParam if r.params.len() >= 2 => r.params.values().next().map(|v| v.label()),
        CategoryRule::FirstParam | CategoryRule::None => None,
        CategoryRule::NamedParam(name) => r.params.get(name).map(|v| v.label()),
    };
    Ok(SemanticFeatures::informational(parameter_category, entry.ttl()))
}

impl Annotator for ToolManifest {
    fn annotate(&self, request: &ToolCallRequest) -> Result<SemanticFeatures, AnnotateError> {
        annotate_static(request, self)
    }
}

/// Rule-based gate: commands and results living 60 s or less are never cached.
pub fn is_cacheable(f: &SemanticFeatures) -> bool {
    f.request_type != RequestType::Command && f.ttl_seconds > 60.0
}
