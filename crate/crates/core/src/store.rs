//! Entry storage with recency and expiry indexes on a logical clock.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::keying::CacheKey;
use crate::model::{ttl_to_millis, CacheEntry};

#[derive(Debug, Clone)]
pub struct CacheStore {
    entries: HashMap<CacheKey, CacheEntry>,
    recency: BTreeMap<u64, CacheKey>,
    expiry: BTreeSet<(u64, CacheKey)>,
    capacity: usize,
    clock: u64,
    next_stamp: u64,
    resident_ttl_millis: u64,
}

impl CacheStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: HashMap::new(),
            recency: BTreeMap::new(),
            expiry: BTreeSet::new(),
            capacity,
            clock: 0,
            next_stamp: 0,
            resident_ttl_millis: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Current logical time in milliseconds.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn advance_clock(&mut self, millis: u64) {
        self.clock = self.clock.saturating_add(millis);
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &CacheKey) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    /// Returns the entry only while `clock < expiry_time`.
    pub fn lookup(&self, key: &CacheKey) -> Option<&CacheEntry> {
        self.entries.get(key).filter(|e| self.clock < e.expiry_time)
    }

    /// Sum of the TTLs of resident entries, in seconds.
    pub fn resident_ttl_sum_seconds(&self) -> f64 {
        self.resident_ttl_millis as f64 / 1000.0
    }

    fn stamp(&mut self) -> u64 {
        self.next_stamp += 1;
        self.next_stamp
    }

    /// Records a hit: refreshes recency and bumps the hit bookkeeping.
    pub fn touch(&mut self, key: &CacheKey, user: &str) -> Option<&CacheEntry> {
        let stamp = self.stamp();
        let clock = self.clock;
        let entry = self.entries.get_mut(key)?;
        self.recency.remove(&entry.recency_stamp);
        self.recency.insert(stamp, key.clone());
        entry.recency_stamp = stamp;
        entry.last_access_time = clock;
        entry.hit_count += 1;
        entry.system.access_count += 1;
        if !entry.system.associated_users.contains(user) {
            entry.system.associated_users.insert(user.to_string());
        }
        Some(entry)
    }

    /// Inserts `entry` stamped at the current clock. Expiry is derived from
    /// the entry's TTL. Replaces any entry with the same key.
    pub fn insert(&mut self, mut entry: CacheEntry) {
        self.remove(&entry.key);
        let stamp = self.stamp();
        let ttl = ttl_to_millis(entry.semantic.ttl_seconds);
        entry.insert_time = self.clock;
        entry.last_access_time = self.clock;
        entry.expiry_time = self.clock.saturating_add(ttl);
        entry.recency_stamp = stamp;
        self.recency.insert(stamp, entry.key.clone());
        self.expiry.insert((entry.expiry_time, entry.key.clone()));
        self.resident_ttl_millis += ttl;
        self.entries.insert(entry.key.clone(), entry);
    }

    pub fn remove(&mut self, key: &CacheKey) -> Option<CacheEntry> {
        let entry = self.entries.remove(key)?;
        self.recency.remove(&entry.recency_stamp);
        self.expiry.remove(&(entry.expiry_time, entry.key.clone()));
        self.resident_ttl_millis -= ttl_to_millis(entry.semantic.ttl_seconds);
        Some(entry)
    }

    /// Removes every entry with `expiry_time <= now`, earliest expiry first.
    pub fn purge_expired(&mut self, now: u64) -> Vec<CacheKey> {
        let mut expired = Vec::new();
        while let Some((at, key)) = self.expiry.first().cloned() {
            if at > now {
                break;
            }
            self.remove(&key);
            expired.push(key);
        }
        expired
    }

    /// Entries from least to most recently used.
    pub fn iter_by_recency(&self) -> impl Iterator<Item = &CacheEntry> + '_ {
        self.recency.values().map(move |k| &self.entries[k])
    }

    pub fn keys(&self) -> impl Iterator<Item = &CacheKey> {
        self.entries.keys()
    }
}
