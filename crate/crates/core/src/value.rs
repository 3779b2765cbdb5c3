//! Min-max normalization of system features and the per-entry caching value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PolicyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("feature values must be finite and non-negative")]
    NonFiniteFeature,
    #[error("no observations recorded for `{0:?}`")]
    EmptyRange(Feature),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Latency,
    Cost,
    Size,
}

/// Running bounds of one feature over all history.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

impl Bounds {
    fn extend(&mut self, x: f64) {
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.count += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureRange {
    pub latency: Bounds,
    pub cost: Bounds,
    pub size: Bounds,
}

impl FeatureRange {
    pub fn bounds(&self, feature: Feature) -> &Bounds {
        match feature {
            Feature::Latency => &self.latency,
            Feature::Cost => &self.cost,
            Feature::Size => &self.size,
        }
    }

    /// Widens the bounds to cover one observation. Nothing changes on error.
    pub fn observe(&mut self, latency: f64, cost: f64, size: f64) -> Result<(), ValueError> {
        if [latency, cost, size].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ValueError::NonFiniteFeature);
        }
        self.latency.extend(latency);
        self.cost.extend(cost);
        self.size.extend(size);
        Ok(())
    }

    /// `(x - min) / (max - min)` clamped to `[epsilon, 1]`; a degenerate range
    /// maps to 1.
    pub fn normalize(&self, feature: Feature, x: f64, epsilon: f64) -> Result<f64, ValueError> {
        let b = self.bounds(feature);
        if b.count == 0 {
            return Err(ValueError::EmptyRange(feature));
        }
        let span = b.max - b.min;
        if span <= 0.0 {
            return Ok(1.0);
        }
        Ok(((x - b.min) / span).clamp(epsilon, 1.0))
    }
}

/// `λ1·lat + λ2·cost/size − λ3·exp(−ttl/τ)` over normalized features.
pub fn caching_value(cfg: &PolicyConfig, tau: f64, norm_latency: f64, norm_cost: f64, norm_size: f64, ttl_seconds: f64) -> f64 {
    cfg.lambda1 * norm_latency + cfg.lambda2 * (norm_cost / norm_size) - cfg.lambda3 * (-ttl_seconds / tau).exp()
}

/// Feature ranges plus the running smoothing lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub ranges: FeatureRange,
    pub tau: f64,
}

impl ValueModel {
    pub fn new(cfg: &PolicyConfig) -> Self {
        Self {
            ranges: FeatureRange::default(),
            tau: cfg.tau,
        }
    }

    /// Replaces τ with the mean resident TTL (floored), or the configured
    /// default when the cache is empty.
    pub fn update_tau(&mut self, cfg: &PolicyConfig, resident_ttl_sum: f64, resident: usize) {
        self.tau = if resident == 0 {
            cfg.tau
        } else {
            (resident_ttl_sum / resident as f64).max(cfg.tau_floor)
        };
    }

    /// Observes the raw features, then scores them against the widened ranges.
    pub fn observe_and_score(
        &mut self,
        cfg: &PolicyConfig,
        latency: f64,
        cost: f64,
        size: f64,
        ttl_seconds: f64,
    ) -> Result<f64, ValueError> {
        self.ranges.observe(latency, cost, size)?;
        let eps = cfg.epsilon;
        let nl = self.ranges.normalize(Feature::Latency, latency, eps)?;
        let nc = self.ranges.normalize(Feature::Cost, cost, eps)?;
        let ns = self.ranges.normalize(Feature::Size, size, eps)?;
        Ok(caching_value(cfg, self.tau, nl, nc, ns, ttl_seconds))
    }
}
