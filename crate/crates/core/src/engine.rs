//! The request pipeline: lookup, then either serve the hit or fetch, annotate,
//! gate, score, admit, evict and insert.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{is_cacheable, AnnotateError, Annotator};
use crate::keying::{make_key, CacheKey, KeyError};
use crate::model::{
    ttl_to_millis, validate_request, CacheEntry, ConfigError, ModelError, PolicyConfig, SemanticFeatures,
    SystemFeatures, ToolCallRequest,
};
use crate::policy::{build_policy, AdmissionDecision, CachePolicy, EvictionError, GroupFeatures, PolicyKind};
use crate::store::CacheStore;
use crate::value::{ValueError, ValueModel};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Malformed(#[from] ModelError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Eviction(#[from] EvictionError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("request {seq} carries no annotation and no annotator is configured")]
    MissingAnnotation { seq: u64 },
}

/// What happened to one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub key: CacheKey,
    pub hit: bool,
    pub cacheable: bool,
    pub served_latency_ms: f64,
    pub admitted: bool,
    pub evicted_keys: Vec<CacheKey>,
    pub cost_incurred: f64,
    pub bytes_fetched: u64,
    pub value_score: Option<f64>,
    /// Present when the policy ran an admission round.
    pub decision: Option<AdmissionDecision>,
}

/// Running totals over every processed request.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub requests: u64,
    pub hits: u64,
    pub hit_ratio: f64,
    pub cacheable_misses: u64,
    pub admissions: u64,
    pub total_latency_ms: f64,
    pub total_cost: f64,
    pub total_bytes: u64,
    pub evictions: u64,
    pub expirations: u64,
}

pub struct CacheEngine {
    store: CacheStore,
    policy: Box<dyn CachePolicy>,
    annotator: Option<Arc<dyn Annotator>>,
    values: ValueModel,
    cfg: PolicyConfig,
    stats: StatsSnapshot,
}

impl CacheEngine {
    pub fn new(policy: Box<dyn CachePolicy>, cfg: &PolicyConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        Ok(Self {
            store: CacheStore::new(cfg.capacity),
            policy,
            annotator: None,
            values: ValueModel::new(cfg),
            cfg: cfg.clone(),
            stats: StatsSnapshot::default(),
        })
    }

    pub fn with_kind(kind: PolicyKind, cfg: &PolicyConfig) -> Result<Self, EngineError> {
        Self::new(build_policy(kind, cfg), cfg)
    }

    /// Used for requests that arrive without an annotation.
    pub fn with_annotator(mut self, annotator: Arc<dyn Annotator>) -> Self {
        self.annotator = Some(annotator);
        self
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }

    pub fn policy(&self) -> &dyn CachePolicy {
        self.policy.as_ref()
    }

    pub fn value_model(&self) -> &ValueModel {
        &self.values
    }

    pub fn stats_snapshot(&self) -> StatsSnapshot {
        self.stats
    }

    fn annotate(&self, r: &ToolCallRequest) -> Result<SemanticFeatures, EngineError> {
        if let Some(a) = &r.annotation {
            return Ok(a.clone());
        }
        match &self.annotator {
            Some(a) => Ok(a.annotate(r)?),
            None => Err(EngineError::MissingAnnotation { seq: r.seq }),
        }
    }

    pub fn process(&mut self, r: &ToolCallRequest) -> Result<RequestOutcome, EngineError> {
        validate_request(r)?;
        self.store.advance_clock(ttl_to_millis(r.gap_seconds));
        let expired = self.store.purge_expired(self.store.clock());
        self.stats.expirations += expired.len() as u64;
        self.stats.requests += 1;

        let key = make_key(&r.tool_name, &r.params)?;

        if self.store.lookup(&key).is_some() {
            let entry = self.store.touch(&key, &r.user_id).expect("resident entry");
            let value = entry.value_score;
            let category = entry.semantic.parameter_category.clone();
            let f = GroupFeatures {
                tool: &r.tool_name,
                category: category.as_deref(),
                user: &r.user_id,
            };
            self.policy.record(&f, true, value);
            self.stats.hits += 1;
            self.refresh_ratio();
            return Ok(RequestOutcome {
                key,
                hit: true,
                cacheable: true,
                served_latency_ms: 0.0,
                admitted: false,
                evicted_keys: Vec::new(),
                cost_incurred: 0.0,
                bytes_fetched: 0,
                value_score: Some(value),
                decision: None,
            });
        }

        self.stats.total_latency_ms += r.true_latency_ms;
        self.stats.total_cost += r.true_cost_units;
        self.stats.total_bytes += r.true_size_bytes;
        self.refresh_ratio();
        let mut outcome = RequestOutcome {
            key: key.clone(),
            hit: false,
            cacheable: false,
            served_latency_ms: r.true_latency_ms,
            admitted: false,
            evicted_keys: Vec::new(),
            cost_incurred: r.true_cost_units,
            bytes_fetched: r.true_size_bytes,
            value_score: None,
            decision: None,
        };

        let semantic = self.annotate(r)?;
        if !is_cacheable(&semantic) {
            return Ok(outcome);
        }
        outcome.cacheable = true;
        self.stats.cacheable_misses += 1;

        let value = self.values.observe_and_score(
            &self.cfg,
            r.true_latency_ms,
            r.true_cost_units,
            r.true_size_bytes as f64,
            semantic.ttl_seconds,
        )?;
        outcome.value_score = Some(value);

        let f = GroupFeatures {
            tool: &r.tool_name,
            category: semantic.parameter_category.as_deref(),
            user: &r.user_id,
        };
        let admitted = if self.cfg.admit_when_free && !self.store.is_full() {
            true
        } else {
            let d = self.policy.admit(&f);
            let admitted = d.admitted;
            outcome.decision = Some(d);
            admitted
        };

        if admitted {
            while self.store.is_full() {
                let victim = self.policy.select_victim(&self.store)?;
                self.store.remove(&victim);
                self.stats.evictions += 1;
                outcome.evicted_keys.push(victim);
            }
            let mut system = SystemFeatures {
                result_size_bytes: r.true_size_bytes,
                system_latency_ms: r.true_latency_ms,
                resource_cost_units: r.true_cost_units,
                ..SystemFeatures::default()
            };
            system.associated_users.insert(r.user_id.clone());
            self.store.insert(CacheEntry {
                key,
                payload: r.result_payload.clone(),
                semantic: semantic.clone(),
                system,
                value_score: value,
                hit_count: 0,
                insert_time: 0,
                last_access_time: 0,
                expiry_time: 0,
                recency_stamp: 0,
            });
            self.values
                .update_tau(&self.cfg, self.store.resident_ttl_sum_seconds(), self.store.len());
            self.stats.admissions += 1;
            outcome.admitted = true;
        }

        self.policy.record(&f, false, value);
        Ok(outcome)
    }

    fn refresh_ratio(&mut self) {
        self.stats.hit_ratio = self.stats.hits as f64 / self.stats.requests.max(1) as f64;
    }
}
