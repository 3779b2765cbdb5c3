//! Victim selection: plain LRU and the value-weighted variant that scores
//! only the least recently used tail of the cache.

use thiserror::Error;

use crate::keying::CacheKey;
use crate::model::{CacheEntry, PolicyConfig};
use crate::store::CacheStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvictionError {
    #[error("cannot select a victim from an empty cache")]
    EmptyCache,
}

/// Drops expired entries; see [`CacheStore::purge_expired`].
pub fn purge_expired(store: &mut CacheStore, now: u64) -> Vec<CacheKey> {
    store.purge_expired(now)
}

/// `ln(v + h + δ5)` with `h = hits / (hits + 1)`.
pub fn eviction_score(e: &CacheEntry, cfg: &PolicyConfig) -> f64 {
    (e.value_score + e.hit_ratio() + cfg.delta5).ln()
}

/// Size of the recency tail scanned for a victim: `⌈fraction·n⌉`, at least 1.
pub fn candidate_count(resident: usize, fraction: f64) -> usize {
    ((fraction * resident as f64).ceil() as usize).clamp(1, resident.max(1))
}

/// Lowest eviction score among the least recently used tail. Ties go to the
/// oldest insertion, then the smaller key.
pub fn select_victim(store: &CacheStore, cfg: &PolicyConfig) -> Result<CacheKey, EvictionError> {
    let m = candidate_count(store.len(), cfg.recency_candidate_fraction);
    store
        .iter_by_recency()
        .take(m)
        .map(|e| (eviction_score(e, cfg), e))
        .min_by(|(sa, a), (sb, b)| {
            sa.total_cmp(sb)
                .then(a.insert_time.cmp(&b.insert_time))
                .then_with(|| a.key.cmp(&b.key))
        })
        .map(|(_, e)| e.key.clone())
        .ok_or(EvictionError::EmptyCache)
}

/// Least recently used entry.
pub fn lru_select_victim(store: &CacheStore) -> Result<CacheKey, EvictionError> {
    store
        .iter_by_recency()
        .next()
        .map(|e| e.key.clone())
        .ok_or(EvictionError::EmptyCache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SemanticFeatures, SystemFeatures};
    use approx::assert_relative_eq;

    fn entry(name: &str, value: f64, hits: u64) -> CacheEntry {
        CacheEntry {
            key: CacheKey::from_canonical(format!("{name}:{{}}")),
            payload: Vec::new(),
            semantic: SemanticFeatures::informational(None, 3600.0),
            system: SystemFeatures::default(),
            value_score: value,
            hit_count: hits,
            insert_time: 0,
            last_access_time: 0,
            expiry_time: 0,
            recency_stamp: 0,
        }
    }

    #[test]
    fn score_examples() {
        let cfg = PolicyConfig::default();
        assert_eq!(eviction_score(&entry("a", 0.0, 0), &cfg), 0.0);
        assert_relative_eq!(eviction_score(&entry("a", 0.5, 1), &cfg), 2f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(
            eviction_score(&entry("a", -0.1, 0), &cfg),
            -0.105_360_515_657_826_28,
            max_relative = 1e-9
        );
    }

    #[test]
    fn ten_entries_degenerate_to_lru() {
        let cfg = PolicyConfig::default();
        let mut s = CacheStore::new(10);
        // The oldest entry has the best score but is still the only candidate.
        s.insert(entry("old", 50.0, 0));
        for i in 0..9 {
            s.insert(entry(&format!("e{i}"), 0.0, 0));
        }
        assert_eq!(select_victim(&s, &cfg).unwrap().to_string(), "old:{}");
    }

    #[test]
    fn lowest_score_in_tail_wins() {
        let cfg = PolicyConfig::default();
        let mut s = CacheStore::new(20);
        s.insert(entry("y", (0.7f64).exp() - 1.0, 0));
        s.insert(entry("x", (0.2f64).exp() - 1.0, 0));
        for i in 0..18 {
            s.insert(entry(&format!("e{i}"), -0.15, 0));
        }
        // Tail of two: y (score 0.7) and x (score 0.2).
        assert_eq!(candidate_count(20, 0.1), 2);
        assert_eq!(select_victim(&s, &cfg).unwrap().to_string(), "x:{}");
    }

    #[test]
    fn singleton_and_empty() {
        let cfg = PolicyConfig::default();
        let mut s = CacheStore::new(1);
        assert_eq!(select_victim(&s, &cfg), Err(EvictionError::EmptyCache));
        assert_eq!(lru_select_victim(&s), Err(EvictionError::EmptyCache));
        s.insert(entry("only", 1.0, 0));
        assert_eq!(select_victim(&s, &cfg).unwrap().to_string(), "only:{}");
        assert_eq!(lru_select_victim(&s).unwrap().to_string(), "only:{}");
    }

    #[test]
    fn lru_follows_access_order() {
        let mut s = CacheStore::new(3);
        s.insert(entry("a", 0.0, 0));
        s.insert(entry("b", 0.0, 0));
        s.touch(&CacheKey::from_canonical("a:{}".into()), "u");
        assert_eq!(lru_select_victim(&s).unwrap().to_string(), "b:{}");
    }

    #[test]
    fn ties_prefer_oldest_insert() {
        let cfg = PolicyConfig {
            recency_candidate_fraction: 1.0,
            ..PolicyConfig::default()
        };
        let mut s = CacheStore::new(3);
        s.insert(entry("first", 0.3, 0));
        s.advance_clock(10);
        s.insert(entry("second", 0.3, 0));
        assert_eq!(select_victim(&s, &cfg).unwrap().to_string(), "first:{}");
    }
}
