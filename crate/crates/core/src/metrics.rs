//! Rank-discounted metrics over estimated relevance, and PRR.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::models::Ranking;

/// Non-increasing, non-negative reward per 1-based rank.
#[derive(Clone, Copy)]
pub enum RewardFunction {
    /// `1 / log2(i + 1)`, zero past the cutoff.
    DcgLog2 { cutoff: Option<usize> },
    /// 1 within the top `k`, 0 below.
    RecallAtK { k: usize },
    Custom {
        name: &'static str,
        reward: fn(usize) -> f64,
        cutoff: Option<usize>,
    },
}

impl fmt::Debug for RewardFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardFunction::DcgLog2 { cutoff } => write!(f, "DcgLog2({cutoff:?})"),
            RewardFunction::RecallAtK { k } => write!(f, "RecallAtK({k})"),
            RewardFunction::Custom { name, cutoff, .. } => write!(f, "Custom({name}, {cutoff:?})"),
        }
    }
}

impl RewardFunction {
    pub fn dcg_at(k: usize) -> Self {
        RewardFunction::DcgLog2 { cutoff: Some(k) }
    }

    pub fn reward(&self, rank: usize) -> f64 {
        debug_assert!(rank >= 1);
        if self.cutoff().is_some_and(|c| rank > c) {
            return 0.0;
        }
        match self {
            RewardFunction::DcgLog2 { .. } => 1.0 / ((rank + 1) as f64).log2(),
            RewardFunction::RecallAtK { .. } => 1.0,
            RewardFunction::Custom { reward, .. } => reward(rank),
        }
    }

    /// Last rank with a possibly nonzero reward.
    pub fn cutoff(&self) -> Option<usize> {
        match *self {
            RewardFunction::DcgLog2 { cutoff } | RewardFunction::Custom { cutoff, .. } => cutoff,
            RewardFunction::RecallAtK { k } => Some(k),
        }
    }
}

/// Estimated relevance `P(ω | H)` for one user.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelevanceMap {
    /// Sorted by item, weights in `(0, 1]`.
    weights: Vec<(usize, f64)>,
    excluded: ItemSet,
}

impl RelevanceMap {
    /// Zero weights are dropped from the support.
    pub fn new(weights: impl IntoIterator<Item = (usize, f64)>, excluded: ItemSet) -> Result<Self> {
        let mut weights: Vec<(usize, f64)> =
            weights.into_iter().filter(|&(_, w)| w != 0.0).collect();
        weights.sort_unstable_by_key(|&(i, _)| i);
        if weights.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Contract("duplicate item in relevance map".into()));
        }
        if let Some(&(i, w)) = weights.iter().find(|&&(_, w)| !(0.0..=1.0).contains(&w)) {
            return Err(Error::Contract(format!(
                "relevance {w} of item {i} outside [0, 1]"
            )));
        }
        if let Some(&(i, _)) = weights.iter().find(|&&(i, _)| excluded.contains(i)) {
            return Err(Error::Contract(format!(
                "item {i} is both relevant and excluded"
            )));
        }
        Ok(Self { weights, excluded })
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.weights
    }

    pub fn excluded(&self) -> &ItemSet {
        &self.excluded
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, item: usize) -> f64 {
        match self.weights.binary_search_by_key(&item, |&(i, _)| i) {
            Ok(pos) => self.weights[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn support(&self) -> ItemSet {
        self.weights.iter().map(|&(i, _)| i).collect()
    }
}

/// `Σ relevance(ω)·φ(σ(ω))` over the relevance support; unranked items
/// contribute nothing.
pub fn ranking_metric(ranking: &Ranking, relevance: &RelevanceMap, reward: &RewardFunction) -> f64 {
    relevance
        .weights
        .iter()
        .filter_map(|&(item, w)| ranking.position(item).map(|p| w * reward.reward(p)))
        .sum()
}

/// Best attainable value of [`ranking_metric`]: weights sorted descending
/// onto ranks 1, 2, ...
pub fn ideal_metric(relevance: &RelevanceMap, reward: &RewardFunction) -> f64 {
    let mut ws: Vec<f64> = relevance.weights.iter().map(|&(_, w)| w).collect();
    ws.sort_unstable_by(|a, b| b.total_cmp(a));
    ws.iter()
        .enumerate()
        .map(|(idx, w)| w * reward.reward(idx + 1))
        .sum()
}

/// NDCG@K with the log2 discount. Zero for an empty relevance map.
pub fn ndcg_at_k(ranking: &Ranking, relevance: &RelevanceMap, k: usize) -> f64 {
    let reward = RewardFunction::dcg_at(k);
    let ideal = ideal_metric(relevance, &reward);
    if ideal == 0.0 {
        return 0.0;
    }
    ranking_metric(ranking, relevance, &reward) / ideal
}

/// `|top-K ∩ relevant| / min(K, |relevant|)`; zero when nothing is relevant.
pub fn recall_at_k(ranking: &Ranking, relevant: &ItemSet, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let hits = ranking
        .order()
        .iter()
        .take(k)
        .filter(|&&i| relevant.contains(i))
        .count();
    hits as f64 / k.min(relevant.len()) as f64
}

/// Performance retention ratio. A zero full-history metric gives 1.0.
pub fn prr(metric_minimized: f64, metric_full: f64) -> Result<f64> {
    if metric_minimized < 0.0
        || metric_full < 0.0
        || metric_minimized.is_nan()
        || metric_full.is_nan()
    {
        return Err(Error::Contract(format!(
            "PRR needs non-negative inputs, got {metric_minimized} / {metric_full}"
        )));
    }
    if metric_full == 0.0 {
        return Ok(1.0);
    }
    Ok(metric_minimized / metric_full)
}

/// The constraint metric of a minimization problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricSpec {
    /// Normalized DCG at cutoff `k`.
    Ndcg { k: usize },
    /// Unnormalized DCG at cutoff `k`.
    Dcg { k: usize },
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::Ndcg { k: 100 }
    }
}

impl MetricSpec {
    pub fn reward(&self) -> RewardFunction {
        match *self {
            MetricSpec::Ndcg { k } | MetricSpec::Dcg { k } => RewardFunction::dcg_at(k),
        }
    }

    /// Ranking depth needed to evaluate this metric exactly.
    pub fn depth(&self) -> usize {
        match *self {
            MetricSpec::Ndcg { k } | MetricSpec::Dcg { k } => k,
        }
    }

    pub fn evaluate(&self, ranking: &Ranking, relevance: &RelevanceMap) -> f64 {
        match *self {
            MetricSpec::Ndcg { k } => ndcg_at_k(ranking, relevance, k),
            MetricSpec::Dcg { .. } => ranking_metric(ranking, relevance, &self.reward()),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Ndcg { k } => write!(f, "NDCG@{k}"),
            MetricSpec::Dcg { k } => write!(f, "DCG@{k}"),
        }
    }
}
