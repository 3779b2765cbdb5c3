//! Shared domain types: requests, semantic and system features, cache
//! entries and the policy configuration.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keying::CacheKey;

/// A parameter value of a tool call. Maps keep their insertion order so the
/// first-parameter heuristic can see the order the caller used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<ParamValue>),
    Map(IndexMap<String, ParamValue>),
}

impl ParamValue {
    /// Renders a scalar the way it appears as a group label.
    pub fn label(&self) -> String {
        match self {
            ParamValue::Null => "null".to_string(),
            ParamValue::Bool(b) => b.to_string(),
            ParamValue::Int(i) => i.to_string(),
            ParamValue::Float(f) => crate::keying::format_number(*f).unwrap_or_else(|| f.to_string()),
            ParamValue::Str(s) => s.clone(),
            other => serde_json::to_string(other).unwrap_or_default(),
        }
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Str(s.to_string())
    }
}

impl From<String> for ParamValue {
    fn from(s: String) -> Self {
        ParamValue::Str(s)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

pub type Params = IndexMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestType {
    Informational,
    Command,
}

/// Request type, parameter category and suggested lifetime of a tool result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticFeatures {
    pub request_type: RequestType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_category: Option<String>,
    pub ttl_seconds: f64,
}

impl SemanticFeatures {
    pub fn informational(parameter_category: Option<String>, ttl_seconds: f64) -> Self {
        Self {
            request_type: RequestType::Informational,
            parameter_category,
            ttl_seconds,
        }
    }

    pub fn command() -> Self {
        Self {
            request_type: RequestType::Command,
            parameter_category: None,
            ttl_seconds: 0.0,
        }
    }
}

/// One tool invocation as seen by the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub seq: u64,
    pub user_id: String,
    pub tool_name: String,
    pub params: Params,
    pub true_latency_ms: f64,
    pub true_cost_units: f64,
    pub true_size_bytes: u64,
    /// Logical time elapsed since the previous request, in seconds.
    pub gap_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub result_payload: Vec<u8>,
    /// Annotation carried by pre-annotated traces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<SemanticFeatures>,
}

impl ToolCallRequest {
    pub fn new(seq: u64, user_id: impl Into<String>, tool_name: impl Into<String>, params: Params) -> Self {
        Self {
            seq,
            user_id: user_id.into(),
            tool_name: tool_name.into(),
            params,
            true_latency_ms: 0.0,
            true_cost_units: 0.0,
            true_size_bytes: 0,
            gap_seconds: 1.0,
            result_payload: Vec::new(),
            annotation: None,
        }
    }

    pub fn with_measurements(mut self, latency_ms: f64, cost: f64, size_bytes: u64) -> Self {
        self.true_latency_ms = latency_ms;
        self.true_cost_units = cost;
        self.true_size_bytes = size_bytes;
        self
    }

    pub fn with_annotation(mut self, features: SemanticFeatures) -> Self {
        self.annotation = Some(features);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed request: invalid `{field}`")]
    MalformedRequest { field: &'static str },
}

/// Checks the per-request invariants. Sequence monotonicity is a trace-level
/// property and is checked by [`validate_sequence`].
pub fn validate_request(r: &ToolCallRequest) -> Result<(), ModelError> {
    let bad = |field| Err(ModelError::MalformedRequest { field });
    if r.tool_name.is_empty() {
        return bad("tool_name");
    }
    if !(r.true_latency_ms.is_finite() && r.true_latency_ms >= 0.0) {
        return bad("true_latency_ms");
    }
    if !(r.true_cost_units.is_finite() && r.true_cost_units >= 0.0) {
        return bad("true_cost_units");
    }
    if !(r.gap_seconds.is_finite() && r.gap_seconds >= 0.0) {
        return bad("gap_seconds");
    }
    if let Some(a) = &r.annotation {
        if !(a.ttl_seconds.is_finite() && a.ttl_seconds >= 0.0) {
            return bad("ttl_seconds");
        }
    }
    Ok(())
}

/// Checks that `seq` is strictly increasing across `requests`.
pub fn validate_sequence<'a>(requests: impl IntoIterator<Item = &'a ToolCallRequest>) -> Result<(), ModelError> {
    let mut prev: Option<u64> = None;
    for r in requests {
        if prev.is_some_and(|p| r.seq <= p) {
            return Err(ModelError::MalformedRequest { field: "seq" });
        }
        prev = Some(r.seq);
    }
    Ok(())
}

/// In-cache statistics for one key.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemFeatures {
    pub associated_users: BTreeSet<String>,
    pub access_count: u64,
    pub result_size_bytes: u64,
    pub system_latency_ms: f64,
    pub resource_cost_units: f64,
}

/// A resident cache entry. Times are logical-clock milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub payload: Vec<u8>,
    pub semantic: SemanticFeatures,
    pub system: SystemFeatures,
    pub value_score: f64,
    pub hit_count: u64,
    pub insert_time: u64,
    pub last_access_time: u64,
    pub expiry_time: u64,
    /// Unique, strictly increasing access stamp; orders entries touched in the
    /// same clock tick.
    pub recency_stamp: u64,
}

impl CacheEntry {
    /// Per-entry hit ratio, counting the insertion miss as the only miss.
    pub fn hit_ratio(&self) -> f64 {
        self.hit_count as f64 / (self.hit_count as f64 + 1.0)
    }
}

/// Converts a TTL in seconds to logical-clock milliseconds.
pub fn ttl_to_millis(ttl_seconds: f64) -> u64 {
    if ttl_seconds.is_finite() {
        (ttl_seconds.max(0.0) * 1000.0).round() as u64
    } else {
        u64::MAX / 2
    }
}

/// Tunable constants of the value model, the grouping bandit and eviction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Initial smoothing lifetime in seconds; replaced by the mean TTL of
    /// resident entries once the cache holds anything.
    pub tau: f64,
    /// Lower bound applied to the running mean TTL.
    pub tau_floor: f64,
    pub t1: u64,
    pub hit_ratio_threshold: f64,
    pub s_min: usize,
    pub regroup_interval: u64,
    pub exploration: f64,
    pub admit_fraction: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub delta5: f64,
    pub epsilon: f64,
    pub capacity: usize,
    /// Deepest grouping level: 1 tool, 2 parameter category, 3 user.
    pub max_group_depth: u8,
    /// Fraction of least-recently-used entries considered for eviction.
    pub recency_candidate_fraction: f64,
    /// Skip the bandit while the cache still has free slots.
    pub admit_when_free: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.8,
            lambda2: 0.2,
            lambda3: 0.2,
            tau: 300.0,
            tau_floor: 60.0,
            t1: 20,
            hit_ratio_threshold: 0.5,
            s_min: 5,
            regroup_interval: 200,
            exploration: std::f64::consts::SQRT_2,
            admit_fraction: 0.5,
            delta1: 1.0,
            delta2: 1.0,
            delta3: 1.0,
            delta4: std::f64::consts::E,
            delta5: 1.0,
            epsilon: 0.01,
            capacity: 100,
            max_group_depth: 3,
            recency_candidate_fraction: 0.1,
            admit_when_free: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid policy config: {0}")]
pub struct ConfigError(pub String);

impl PolicyConfig {
    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_string()));
        let weights = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.exploration,
            self.delta1,
            self.delta2,
            self.delta3,
            self.delta4,
            self.delta5,
        ];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return err("weights and deltas must be finite and non-negative");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.1) {
            return err("epsilon must lie in (0, 0.1]");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return err("tau must be positive");
        }
        if !(0.0..=1.0).contains(&self.hit_ratio_threshold) {
            return err("hit_ratio_threshold must lie in [0, 1]");
        }
        if !(self.admit_fraction > 0.0 && self.admit_fraction <= 1.0) {
            return err("admit_fraction must lie in (0, 1]");
        }
        // ln(C + delta4) must stay >= 1 for every C >= 0.
        if self.delta4 < std::f64::consts::E {
            return err("delta4 must be at least e");
        }
        if self.capacity == 0 {
            return err("capacity must be positive");
        }
        if self.regroup_interval == 0 {
            return err("regroup_interval must be positive");
        }
        if !(1..=3).contains(&self.max_group_depth) {
            return err("max_group_depth must be 1, 2 or 3");
        }
        if !(self.recency_candidate_fraction > 0.0 && self.recency_candidate_fraction <= 1.0) {
            return err("recency_candidate_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}
