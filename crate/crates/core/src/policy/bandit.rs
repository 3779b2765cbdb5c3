//! Group rewards and UCB1 admission over the leaves of the grouping tree.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::grouping::{GroupNode, GroupingState};
use crate::model::PolicyConfig;

/// Which reward the bandit maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Hit ratio, level, average caching value and admission count.
    ValueAware,
    /// Hit ratio, level and admission count only.
    HitOnly,
}

/// Group statistics entering the reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub hit_ratio: f64,
    pub level: f64,
    pub avg_value: f64,
    pub admitted: f64,
}

impl From<&GroupNode> for GroupStats {
    fn from(n: &GroupNode) -> Self {
        Self {
            hit_ratio: n.hit_ratio(),
            level: n.level as f64,
            avg_value: n.avg_value(),
            admitted: n.admitted_count as f64,
        }
    }
}

/// `ln(H+δ1)·ln(L+δ2)·ln(V+δ3) / ln(C+δ4)`, with V clamped at zero.
pub fn group_reward(g: &GroupStats, cfg: &PolicyConfig) -> f64 {
    (g.hit_ratio + cfg.delta1).ln() * (g.level + cfg.delta2).ln() * (g.avg_value.max(0.0) + cfg.delta3).ln()
        / (g.admitted + cfg.delta4).ln()
}

/// `ln(H+δ1)·ln(L+δ2) / ln(C+δ4)`; blind to caching value.
pub fn caca_group_reward(g: &GroupStats, cfg: &PolicyConfig) -> f64 {
    (g.hit_ratio + cfg.delta1).ln() * (g.level + cfg.delta2).ln() / (g.admitted + cfg.delta4).ln()
}

pub fn reward(kind: RewardKind, g: &GroupStats, cfg: &PolicyConfig) -> f64 {
    match kind {
        RewardKind::ValueAware => group_reward(g, cfg),
        RewardKind::HitOnly => caca_group_reward(g, cfg),
    }
}

/// UCB1 index. An arm never selected scores +∞.
pub fn ucb_score(reward: f64, selections: u64, round: u64, exploration: f64) -> f64 {
    if selections == 0 {
        return f64::INFINITY;
    }
    let t = round.max(1) as f64;
    reward + exploration * (t.ln() / selections as f64).sqrt()
}

/// Index of the arm with the highest UCB; ties go to the lower index.
pub fn select_arm(rewards: &[f64], selections: &[u64], round: u64, exploration: f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (&f, &n)) in rewards.iter().zip(selections).enumerate() {
        let s = ucb_score(f, n, round, exploration);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionDecision {
    pub admitted: bool,
    pub group_path: Vec<String>,
    pub ucb_score: f64,
    pub rank: usize,
}

impl AdmissionDecision {
    pub fn admit_all() -> Self {
        Self {
            admitted: true,
            group_path: Vec::new(),
            ucb_score: f64::INFINITY,
            rank: 1,
        }
    }
}

/// Number of top-ranked arms admitted per round.
pub fn admit_quota(arms: usize, admit_fraction: f64) -> usize {
    ((admit_fraction * arms as f64).ceil() as usize).max(1)
}

/// Orders arms by UCB descending, then average value descending, then path.
fn rank_order(a: &(f64, f64, &[String]), b: &(f64, f64, &[String])) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.total_cmp(&a.1))
        .then_with(|| a.2.cmp(b.2))
}

/// One decision round for a cacheable miss whose group is `leaf`.
///
/// During warm-up everything is admitted. Afterwards the leaf is admitted when
/// it ranks within the top `⌈ρ·|arms|⌉` by UCB or has never been selected.
/// Admission bumps the leaf's admission and selection counts.
pub fn decide_admission(state: &mut GroupingState, leaf: &[String], kind: RewardKind, cfg: &PolicyConfig) -> AdmissionDecision {
    state.round_counter += 1;
    let t = state.round_counter;

    let (admitted, ucb, rank) = if state.warmup_active {
        (true, f64::INFINITY, 1)
    } else {
        let arms = state.arms();
        let mut scored: Vec<(f64, f64, &[String])> = arms
            .iter()
            .map(|n| {
                let f = reward(kind, &GroupStats::from(*n), cfg);
                (ucb_score(f, n.selection_count, t, cfg.exploration), n.avg_value(), n.path.as_slice())
            })
            .collect();
        if !scored.iter().any(|s| s.2 == leaf) {
            if let Some(n) = state.node(leaf) {
                let f = reward(kind, &GroupStats::from(n), cfg);
                scored.push((ucb_score(f, n.selection_count, t, cfg.exploration), n.avg_value(), leaf));
            }
        }
        let k = admit_quota(scored.len(), cfg.admit_fraction);
        let mine = scored.iter().find(|s| s.2 == leaf).copied();
        match mine {
            Some(me) => {
                let rank = 1 + scored.iter().filter(|s| rank_order(s, &me) == Ordering::Less).count();
                let unexplored = state.node(leaf).is_some_and(|n| n.selection_count == 0);
                (rank <= k || unexplored, me.0, rank)
            }
            None => (true, f64::INFINITY, 1),
        }
    };

    if admitted {
        if let Some(n) = state.node_mut(leaf) {
            n.admitted_count += 1;
            n.selection_count += 1;
        }
    }
    AdmissionDecision {
        admitted,
        group_path: leaf.to_vec(),
        ucb_score: ucb,
        rank,
    }
}
