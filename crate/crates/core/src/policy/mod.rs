//! Admission and eviction policies: value-aware bandit admission with v-LRU
//! eviction, the hit-only bandit with LRU eviction, and plain LRU.

pub mod bandit;
pub mod eviction;
pub mod grouping;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bandit::{
    admit_quota, caca_group_reward, decide_admission, group_reward, reward, select_arm, ucb_score, AdmissionDecision,
    GroupStats, RewardKind,
};
pub use eviction::{candidate_count, eviction_score, lru_select_victim, purge_expired, select_victim, EvictionError};
pub use grouping::{BufferedRequest, GroupFeatures, GroupNode, GroupingState};

use crate::keying::CacheKey;
use crate::model::PolicyConfig;
use crate::store::CacheStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Vaac,
    Caca,
    Lru,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Vaac, PolicyKind::Caca, PolicyKind::Lru];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Vaac => "vaac",
            PolicyKind::Caca => "caca",
            PolicyKind::Lru => "lru",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown policy `{0}` (expected vaac, caca or lru)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vaac" => Ok(PolicyKind::Vaac),
            "caca" => Ok(PolicyKind::Caca),
            "lru" => Ok(PolicyKind::Lru),
            _ => Err(UnknownPolicy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionKind {
    /// Minimum `ln(v + h + δ5)` among the least recently used tail.
    ValueLru,
    Lru,
}

/// What the engine needs from a policy. Implementations are driven by one
/// engine on one thread.
pub trait CachePolicy: Send {
    fn kind(&self) -> PolicyKind;

    /// One admission round for a cacheable miss.
    fn admit(&mut self, f: &GroupFeatures<'_>) -> AdmissionDecision;

    fn select_victim(&self, store: &CacheStore) -> Result<CacheKey, EvictionError>;

    /// Feeds the outcome of a cacheable request back into the policy.
    fn record(&mut self, f: &GroupFeatures<'_>, hit: bool, value: f64);

    fn grouping(&self) -> Option<&GroupingState> {
        None
    }
}

/// Admits everything and evicts the least recently used entry.
#[derive(Debug, Clone, Default)]
pub struct LruPolicy;

/// Always true: LRU leaves space management to eviction.
pub fn lru_admit() -> bool {
    true
}

impl CachePolicy for LruPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Lru
    }

    fn admit(&mut self, _f: &GroupFeatures<'_>) -> AdmissionDecision {
        AdmissionDecision {
            admitted: lru_admit(),
            ..AdmissionDecision::admit_all()
        }
    }

    fn select_victim(&self, store: &CacheStore) -> Result<CacheKey, EvictionError> {
        lru_select_victim(store)
    }

    fn record(&mut self, _f: &GroupFeatures<'_>, _hit: bool, _value: f64) {}
}

/// Grouping bandit admission paired with either eviction rule.
#[derive(Debug, Clone)]
pub struct BanditPolicy {
    kind: PolicyKind,
    cfg: PolicyConfig,
    state: GroupingState,
    reward: RewardKind,
    eviction: EvictionKind,
}

impl BanditPolicy {
    /// Value-aware reward with v-LRU eviction.
    pub fn vaac(cfg: &PolicyConfig) -> Self {
        Self::custom(PolicyKind::Vaac, cfg, RewardKind::ValueAware, EvictionKind::ValueLru)
    }

    /// Hit-only reward with LRU eviction.
    pub fn caca(cfg: &PolicyConfig) -> Self {
        Self::custom(PolicyKind::Caca, cfg, RewardKind::HitOnly, EvictionKind::Lru)
    }

    pub fn custom(kind: PolicyKind, cfg: &PolicyConfig, reward: RewardKind, eviction: EvictionKind) -> Self {
        Self {
            kind,
            cfg: cfg.clone(),
            state: GroupingState::new(cfg),
            reward,
            eviction,
        }
    }

    pub fn with_reward(mut self, reward: RewardKind) -> Self {
        self.reward = reward;
        self
    }

    pub fn with_eviction(mut self, eviction: EvictionKind) -> Self {
        self.eviction = eviction;
        self
    }

    pub fn state(&self) -> &GroupingState {
        &self.state
    }
}

impl CachePolicy for BanditPolicy {
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn admit(&mut self, f: &GroupFeatures<'_>) -> AdmissionDecision {
        let leaf = self.state.locate_group(f);
        decide_admission(&mut self.state, &leaf, self.reward, &self.cfg)
    }

    fn select_victim(&self, store: &CacheStore) -> Result<CacheKey, EvictionError> {
        match self.eviction {
            EvictionKind::ValueLru => select_victim(store, &self.cfg),
            EvictionKind::Lru => lru_select_victim(store),
        }
    }

    fn record(&mut self, f: &GroupFeatures<'_>, hit: bool, value: f64) {
        self.state.record(f, hit, value, &self.cfg);
    }

    fn grouping(&self) -> Option<&GroupingState> {
        Some(&self.state)
    }
}

pub fn build_policy(kind: PolicyKind, cfg: &PolicyConfig) -> Box<dyn CachePolicy> {
    match kind {
        PolicyKind::Vaac => Box::new(BanditPolicy::vaac(cfg)),
        PolicyKind::Caca => Box::new(BanditPolicy::caca(cfg)),
        PolicyKind::Lru => Box::new(LruPolicy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_policy_names() {
        assert_eq!("vaac".parse::<PolicyKind>(), Ok(PolicyKind::Vaac));
        assert_eq!(" CACA ".parse::<PolicyKind>(), Ok(PolicyKind::Caca));
        assert_eq!("lru".parse::<PolicyKind>(), Ok(PolicyKind::Lru));
        assert!("lfu".parse::<PolicyKind>().is_err());
        for k in PolicyKind::ALL {
            assert_eq!(k.to_string().parse::<PolicyKind>(), Ok(k));
        }
    }

    #[test]
    fn lru_admits_every_request() {
        let mut p = LruPolicy;
        let f = GroupFeatures {
            tool: "search",
            category: None,
            user: "u",
        };
        for _ in 0..5 {
            assert!(p.admit(&f).admitted);
        }
        assert!(p.grouping().is_none());
    }

    #[test]
    fn factory_kinds() {
        let cfg = PolicyConfig::default();
        for k in PolicyKind::ALL {
            assert_eq!(build_policy(k, &cfg).kind(), k);
        }
        assert!(build_policy(PolicyKind::Vaac, &cfg).grouping().is_some());
    }

    #[test]
    fn bandit_admits_during_warmup() {
        let cfg = PolicyConfig::default();
        let mut p = BanditPolicy::vaac(&cfg);
        let f = GroupFeatures {
            tool: "wiki-fetch",
            category: Some("Paris"),
            user: "u1",
        };
        for _ in 0..(cfg.regroup_interval - 1) {
            assert!(p.admit(&f).admitted);
            p.record(&f, false, 0.5);
        }
        assert!(p.state().warmup_active);
        p.record(&f, false, 0.5);
        assert!(!p.state().warmup_active);
    }
}
