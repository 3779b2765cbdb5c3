//! Hierarchical feature grouping: tool, then parameter category, then user.
//!
//! The tree is rebuilt from a sliding window of recent requests every
//! `regroup_interval` cacheable requests. A node is split by the next feature
//! only when it saw at least `t1` requests with a hit ratio at most
//! `hit_ratio_threshold`. Subgroups smaller than `s_min` fold back into their
//! parent, so an internal node also acts as the group for requests that do not
//! match any of its children.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::PolicyConfig;

/// The three grouping features of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupFeatures<'a> {
    pub tool: &'a str,
    pub category: Option<&'a str>,
    pub user: &'a str,
}

impl GroupFeatures<'_> {
    /// Label at grouping level 1..=3.
    fn label(&self, level: u8) -> Option<&str> {
        match level {
            1 => Some(self.tool),
            2 => self.category,
            3 => Some(self.user),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferedRequest {
    pub tool: String,
    pub category: Option<String>,
    pub user: String,
    pub hit: bool,
    pub value: f64,
}

impl BufferedRequest {
    fn label(&self, level: u8) -> Option<&str> {
        match level {
            1 => Some(&self.tool),
            2 => self.category.as_deref(),
            3 => Some(&self.user),
            _ => None,
        }
    }
}

/// A node of the grouping tree. Statistics cover the requests that terminate
/// at this node; for internal nodes that is the remainder not claimed by a
/// child.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupNode {
    pub path: Vec<String>,
    pub level: u8,
    pub access_count: u64,
    pub hit_count: u64,
    pub admitted_count: u64,
    pub selection_count: u64,
    pub value_sum: f64,
    pub member_count: u64,
    pub children: BTreeMap<String, GroupNode>,
}

impl GroupNode {
    fn child_of(parent: &GroupNode, label: &str) -> GroupNode {
        let mut path = parent.path.clone();
        path.push(label.to_string());
        GroupNode {
            level: parent.level + 1,
            path,
            ..Default::default()
        }
    }

    pub fn hit_ratio(&self) -> f64 {
        self.hit_count as f64 / self.access_count.max(1) as f64
    }

    pub fn avg_value(&self) -> f64 {
        self.value_sum / self.member_count.max(1) as f64
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn absorb<'a>(&mut self, members: impl IntoIterator<Item = &'a BufferedRequest>) {
        for r in members {
            self.observe(r.hit, r.value);
        }
    }

    pub(crate) fn observe(&mut self, hit: bool, value: f64) {
        self.access_count += 1;
        self.hit_count += u64::from(hit);
        self.value_sum += value;
        self.member_count += 1;
    }

    fn reset_bandit(&mut self) {
        self.admitted_count = 0;
        self.selection_count = 0;
        for c in self.children.values_mut() {
            c.reset_bandit();
        }
    }

    /// Pre-order walk over every node below (and including) this one.
    pub fn walk<'a>(&'a self, out: &mut Vec<&'a GroupNode>) {
        out.push(self);
        for c in self.children.values() {
            c.walk(out);
        }
    }

    pub fn find(&self, path: &[String]) -> Option<&GroupNode> {
        path.iter().try_fold(self, |node, label| node.children.get(label))
    }

    pub fn find_mut(&mut self, path: &[String]) -> Option<&mut GroupNode> {
        path.iter().try_fold(self, |node, label| node.children.get_mut(label))
    }
}

/// Grouping tree, the request window it is rebuilt from, and the bandit's
/// round counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingState {
    pub root: GroupNode,
    pub request_buffer: VecDeque<BufferedRequest>,
    pub buffer_cap: usize,
    /// Decision rounds since the last regroup.
    pub round_counter: u64,
    /// Cacheable requests recorded so far.
    pub request_counter: u64,
    pub warmup_active: bool,
    pub regroups: u64,
}

impl GroupingState {
    pub fn new(cfg: &PolicyConfig) -> Self {
        Self {
            root: GroupNode::default(),
            request_buffer: VecDeque::new(),
            buffer_cap: cfg.regroup_interval as usize,
            round_counter: 0,
            request_counter: 0,
            warmup_active: true,
            regroups: 0,
        }
    }

    /// Path of the deepest existing node covering `f`. An unseen tool gets a
    /// fresh level-1 node.
    pub fn locate_group(&mut self, f: &GroupFeatures<'_>) -> Vec<String> {
        if !self.root.children.contains_key(f.tool) {
            let node = GroupNode::child_of(&self.root, f.tool);
            self.root.children.insert(f.tool.to_string(), node);
        }
        let mut node = &self.root.children[f.tool];
        for level in 2..=3u8 {
            match f.label(level).and_then(|l| node.children.get(l)) {
                Some(child) => node = child,
                None => break,
            }
        }
        node.path.clone()
    }

    pub fn node(&self, path: &[String]) -> Option<&GroupNode> {
        self.root.find(path)
    }

    pub fn node_mut(&mut self, path: &[String]) -> Option<&mut GroupNode> {
        self.root.find_mut(path)
    }

    /// Nodes competing in the bandit: every leaf plus each internal node that
    /// currently holds remainder traffic.
    pub fn arms(&self) -> Vec<&GroupNode> {
        let mut all = Vec::new();
        self.root.walk(&mut all);
        all.into_iter()
            .filter(|n| n.level > 0 && (n.is_leaf() || n.access_count > 0 || n.selection_count > 0))
            .collect()
    }

    /// Records one cacheable request's outcome. Returns true when the call
    /// triggered a regroup.
    pub fn record(&mut self, f: &GroupFeatures<'_>, hit: bool, value: f64, cfg: &PolicyConfig) -> bool {
        let path = self.locate_group(f);
        if let Some(node) = self.node_mut(&path) {
            node.observe(hit, value);
        }
        if self.buffer_cap > 0 && self.request_buffer.len() == self.buffer_cap {
            self.request_buffer.pop_front();
        }
        self.request_buffer.push_back(BufferedRequest {
            tool: f.tool.to_string(),
            category: f.category.map(str::to_string),
            user: f.user.to_string(),
            hit,
            value,
        });
        self.request_counter += 1;
        if self.request_counter.is_multiple_of(cfg.regroup_interval) {
            self.regroup(cfg);
            true
        } else {
            false
        }
    }

    /// Rebuilds the tree from the buffered window and restarts the bandit.
    pub fn regroup(&mut self, cfg: &PolicyConfig) {
        let mut root = GroupNode::default();
        let members: Vec<&BufferedRequest> = self.request_buffer.iter().collect();
        grow(&mut root, members, cfg);
        root.reset_bandit();
        self.root = root;
        self.round_counter = 0;
        self.warmup_active = false;
        self.regroups += 1;
    }
}

fn grow(node: &mut GroupNode, members: Vec<&BufferedRequest>, cfg: &PolicyConfig) {
    let next = node.level + 1;
    if next > cfg.max_group_depth || (node.level > 0 && members.len() < cfg.s_min) {
        node.absorb(members);
        return;
    }
    let mut parts: BTreeMap<&str, Vec<&BufferedRequest>> = BTreeMap::new();
    let mut remainder = Vec::new();
    for r in members {
        match r.label(next) {
            Some(label) => parts.entry(label).or_default().push(r),
            None => remainder.push(r),
        }
    }
    for (label, sub) in parts {
        let f = sub.len();
        let hits = sub.iter().filter(|r| r.hit).count();
        let hit_ratio = hits as f64 / f.max(1) as f64;
        let mut child = GroupNode::child_of(node, label);
        if f as u64 >= cfg.t1 && hit_ratio <= cfg.hit_ratio_threshold {
            grow(&mut child, sub, cfg);
        } else if node.level > 0 && f < cfg.s_min {
            remainder.extend(sub);
            continue;
        } else {
            child.absorb(sub);
        }
        node.children.insert(label.to_string(), child);
    }
    node.absorb(remainder);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PolicyConfig {
        PolicyConfig {
            regroup_interval: 1000,
            ..PolicyConfig::default()
        }
    }

    fn feed(state: &mut GroupingState, tool: &str, cat: Option<&str>, user: &str, n: usize, hits: usize) {
        let c = cfg();
        for i in 0..n {
            let f = GroupFeatures { tool, category: cat, user };
            state.record(&f, i < hits, 0.5, &c);
        }
    }

    fn p(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn unseen_tool_gets_level_one_leaf() {
        let mut s = GroupingState::new(&cfg());
        let path = s.locate_group(&GroupFeatures { tool: "maps", category: Some("x"), user: "u" });
        assert_eq!(path, p(&["maps"]));
        assert_eq!(s.node(&path).unwrap().level, 1);
    }

    #[test]
    fn shallow_tree_covers_all_params() {
        let mut s = GroupingState::new(&cfg());
        feed(&mut s, "weather", Some("Paris"), "a", 10, 8);
        s.regroup(&cfg());
        for cat in ["Paris", "Rome", "New York"] {
            let path = s.locate_group(&GroupFeatures { tool: "weather", category: Some(cat), user: "b" });
            assert_eq!(path, p(&["weather"]));
        }
    }

    #[test]
    fn low_hit_busy_node_splits_to_user_level() {
        let mut s = GroupingState::new(&cfg());
        // 25 requests with 7 hits: H = 0.28 <= 0.5 at the tool and category levels.
        feed(&mut s, "weather", Some("New York"), "UserA", 15, 4);
        feed(&mut s, "weather", Some("New York"), "UserB", 10, 3);
        s.regroup(&cfg());
        let path = s.locate_group(&GroupFeatures { tool: "weather", category: Some("New York"), user: "UserA" });
        assert_eq!(path, p(&["weather", "New York", "UserA"]));
        let leaf = s.node(&path).unwrap();
        assert_eq!(leaf.level, 3);
        assert_eq!(leaf.access_count, 15);
        assert_eq!(leaf.hit_count, 4);
    }

    #[test]
    fn high_hit_node_stays_leaf() {
        let mut s = GroupingState::new(&cfg());
        feed(&mut s, "weather", Some("a"), "u", 25, 20);
        s.regroup(&cfg());
        let node = s.node(&p(&["weather"])).unwrap();
        assert!(node.is_leaf());
        assert_eq!(node.access_count, 25);
    }

    #[test]
    fn small_subgroup_folds_into_parent() {
        let mut s = GroupingState::new(&cfg());
        feed(&mut s, "weather", Some("big"), "u", 22, 0);
        feed(&mut s, "weather", Some("tiny"), "u", 3, 0);
        s.regroup(&cfg());
        let tool = s.node(&p(&["weather"])).unwrap();
        assert!(tool.children.contains_key("big"));
        assert!(!tool.children.contains_key("tiny"));
        // The three small-category requests now live at the tool node.
        assert_eq!(tool.access_count, 3);
        let path = s.locate_group(&GroupFeatures { tool: "weather", category: Some("tiny"), user: "u" });
        assert_eq!(path, p(&["weather"]));
    }

    #[test]
    fn depth_cap_stops_at_category() {
        let capped = PolicyConfig {
            max_group_depth: 2,
            ..cfg()
        };
        let mut s = GroupingState::new(&capped);
        for i in 0..30 {
            let user = if i % 2 == 0 { "a" } else { "b" };
            s.record(&GroupFeatures { tool: "t", category: Some("c"), user }, false, 0.1, &capped);
        }
        s.regroup(&capped);
        let path = s.locate_group(&GroupFeatures { tool: "t", category: Some("c"), user: "a" });
        assert_eq!(path, p(&["t", "c"]));
    }

    #[test]
    fn regroup_resets_bandit_and_warmup() {
        let c = PolicyConfig {
            regroup_interval: 10,
            ..PolicyConfig::default()
        };
        let mut s = GroupingState::new(&c);
        let f = GroupFeatures { tool: "t", category: None, user: "u" };
        let path = s.locate_group(&f);
        s.node_mut(&path).unwrap().selection_count = 4;
        s.round_counter = 7;
        let triggered: Vec<bool> = (0..10).map(|_| s.record(&f, true, 1.0, &c)).collect();
        assert_eq!(triggered.iter().filter(|t| **t).count(), 1);
        assert!(triggered[9]);
        assert!(!s.warmup_active);
        assert_eq!(s.round_counter, 0);
        let node = s.node(&path).unwrap();
        assert_eq!(node.selection_count, 0);
        assert_eq!(node.hit_ratio(), 1.0);
        assert_eq!(node.avg_value(), 1.0);
    }

    #[test]
    fn buffer_is_capped() {
        let c = PolicyConfig {
            regroup_interval: 4,
            ..PolicyConfig::default()
        };
        let mut s = GroupingState::new(&c);
        for _ in 0..11 {
            s.record(&GroupFeatures { tool: "t", category: None, user: "u" }, false, 0.0, &c);
        }
        assert_eq!(s.request_buffer.len(), 4);
        assert_eq!(s.regroups, 2);
    }
}
