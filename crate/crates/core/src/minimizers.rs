//! Per-user performance-constrained history minimization.
//!
//! Every algorithm searches for a small `I ⊆ H` with
//! `metric(I) / metric(H) ≥ η`. Search cost is measured in model
//! inferences (SE); the reference value `metric(H)` is computed when the
//! problem is built and is not charged to any algorithm.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::metrics::{prr, MetricSpec, RelevanceMap};
use crate::models::{rank_top, InferenceCounter, ItemModel, Weights};
use crate::rng;

/// Absolute slack on the PRR constraint.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

/// One user's minimization instance.
#[derive(Clone, Debug)]
pub struct MinimizationProblem<'a> {
    model: &'a ItemModel,
    history: ItemSet,
    relevance: RelevanceMap,
    metric: MetricSpec,
    eta: f64,
    metric_full: f64,
}

impl<'a> MinimizationProblem<'a> {
    pub fn new(
        model: &'a ItemModel,
        history: ItemSet,
        relevance: RelevanceMap,
        metric: MetricSpec,
        eta: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParam(format!("eta {eta} outside [0, 1]")));
        }
        if history.is_empty() {
            return Err(Error::Empty("minimization needs a nonempty history".into()));
        }
        if history.max_item().is_some_and(|m| m >= model.n_items()) {
            return Err(Error::Contract(
                "history item outside the model's item range".into(),
            ));
        }
        let mut problem = Self {
            model,
            history,
            relevance,
            metric,
            eta,
            metric_full: 0.0,
        };
        let mut setup = InferenceCounter::new();
        problem.metric_full = problem.eval_subset(&problem.history.clone(), &mut setup);
        Ok(problem)
    }

    pub fn history(&self) -> &ItemSet {
        &self.history
    }

    pub fn relevance(&self) -> &RelevanceMap {
        &self.relevance
    }

    pub fn model(&self) -> &ItemModel {
        self.model
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn metric_full(&self) -> f64 {
        self.metric_full
    }

    /// Same instance at a different η; reuses the stored reference metric.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParam(format!("eta {eta} outside [0, 1]")));
        }
        Ok(Self {
            eta,
            ..self.clone()
        })
    }

    /// One counted inference on `subset`, ranked with only `subset` masked.
    pub fn eval_subset(&self, subset: &ItemSet, counter: &mut InferenceCounter) -> f64 {
        debug_assert!(subset.is_subset(&self.history));
        let scores = self.model.infer(subset, counter);
        let ranking = rank_top(&scores, subset, self.metric.depth());
        self.metric.evaluate(&ranking, &self.relevance)
    }

    pub fn prr_of(&self, metric: f64) -> f64 {
        prr(metric.max(0.0), self.metric_full).expect("non-negative metrics")
    }

    pub fn is_feasible(&self, metric: f64) -> bool {
        self.prr_of(metric) >= self.eta - FEASIBILITY_TOLERANCE
    }

    fn result(&self, subset: ItemSet, metric_min: f64, se: u64) -> MinimizationResult {
        let prr = self.prr_of(metric_min);
        MinimizationResult {
            history_len: self.history.len(),
            feasible: prr >= self.eta - FEASIBILITY_TOLERANCE,
            subset,
            se,
            metric_full: self.metric_full,
            metric_min,
            prr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizationResult {
    pub subset: ItemSet,
    pub history_len: usize,
    /// Inferences spent by the algorithm.
    pub se: u64,
    pub metric_full: f64,
    pub metric_min: f64,
    pub prr: f64,
    pub feasible: bool,
}

/// Single-pass ordering heuristics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heuristic {
    Random { seed: u64 },
    LeastPopular,
    MostPopular,
    EmbSim,
}

/// Order in which a heuristic appends history items.
pub fn heuristic_order(
    problem: &MinimizationProblem<'_>,
    strategy: Heuristic,
    popularity: &[usize],
) -> Vec<usize> {
    let mut items: Vec<usize> = problem.history.iter().collect();
    match strategy {
        Heuristic::Random { seed } => {
            let mut r = rng::stream(seed, "minimize.rs");
            items.shuffle(&mut r);
        }
        Heuristic::MostPopular => {
            items.sort_by(|&a, &b| popularity[b].cmp(&popularity[a]).then(a.cmp(&b)));
        }
        Heuristic::LeastPopular => {
            items.sort_by(|&a, &b| popularity[a].cmp(&popularity[b]).then(a.cmp(&b)));
        }
        Heuristic::EmbSim => {
            let scores = embedding_similarity(problem.model, &problem.history);
            items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        }
    }
    items
}

/// Dot product of each history item's weight row with the user embedding
/// (the sum of the history's rows). Indexed by item.
fn embedding_similarity(model: &ItemModel, history: &ItemSet) -> Vec<f64> {
    let n = model.n_items();
    let mut scores = vec![0.0; n];
    match model.weights() {
        Weights::Dense { data, .. } => {
            let mut user = vec![0.0; n];
            for h in history.iter() {
                for (u, w) in user.iter_mut().zip(&data[h * n..(h + 1) * n]) {
                    *u += w;
                }
            }
            for h in history.iter() {
                scores[h] = data[h * n..(h + 1) * n]
                    .iter()
                    .zip(&user)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        Weights::Sparse(m) => {
            let mut user = vec![0.0; n];
            for h in history.iter() {
                for (c, v) in m.row(h) {
                    user[c] += v;
                }
            }
            for h in history.iter() {
                scores[h] = m.row(h).map(|(c, v)| v * user[c]).sum();
            }
        }
    }
    scores
}

/// Appends items in heuristic order, probing `∅` first, and returns the
/// first feasible prefix (or the full history).
pub fn minimize_heuristic(
    problem: &MinimizationProblem<'_>,
    strategy: Heuristic,
    popularity: &[usize],
    counter: &mut InferenceCounter,
) -> MinimizationResult {
    let start = counter.count();
    let order = heuristic_order(problem, strategy, popularity);
    let mut prefix = ItemSet::new();
    let mut metric = problem.eval_subset(&prefix, counter);
    for &item in &order {
        if problem.is_feasible(metric) {
            break;
        }
        prefix.insert(item);
        metric = problem.eval_subset(&prefix, counter);
    }
    problem.result(prefix, metric, counter.count() - start)
}

/// Greedy forward selection: add the single item with the best resulting
/// metric until the constraint holds.
pub fn minimize_gfs(
    problem: &MinimizationProblem<'_>,
    counter: &mut InferenceCounter,
) -> MinimizationResult {
    let start = counter.count();
    let mut current = ItemSet::new();
    let mut metric = problem.eval_subset(&current, counter);
    while !problem.is_feasible(metric) && current.len() < problem.history.len() {
        let mut best: Option<(usize, f64)> = None;
        for item in problem.history.iter().filter(|&i| !current.contains(i)) {
            let value = problem.eval_subset(&current.with(item), counter);
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((item, value));
            }
        }
        let (item, value) = best.expect("a remaining candidate");
        current.insert(item);
        metric = value;
    }
    problem.result(current, metric, counter.count() - start)
}

/// Beam forward selection with beam width `beam`. Candidates are
/// deduplicated across beam members; ties prefer the lexicographically
/// smallest set. `beam = 1` coincides with [`minimize_gfs`].
pub fn minimize_gbfs(
    problem: &MinimizationProblem<'_>,
    beam: usize,
    counter: &mut InferenceCounter,
) -> Result<MinimizationResult> {
    if beam == 0 {
        return Err(Error::InvalidParam("beam width must be >= 1".into()));
    }
    let start = counter.count();
    let empty = ItemSet::new();
    let metric = problem.eval_subset(&empty, counter);
    let mut frontier: Vec<(ItemSet, f64)> = vec![(empty, metric)];
    loop {
        let (best_set, best_metric) = &frontier[0];
        if problem.is_feasible(*best_metric) || best_set.len() == problem.history.len() {
            let (set, metric) = frontier.swap_remove(0);
            return Ok(problem.result(set, metric, counter.count() - start));
        }
        let candidates: BTreeSet<ItemSet> = frontier
            .iter()
            .flat_map(|(set, _)| {
                problem
                    .history
                    .iter()
                    .filter(|&i| !set.contains(i))
                    .map(move |i| set.with(i))
            })
            .collect();
        let mut scored: Vec<(ItemSet, f64)> = candidates
            .into_iter()
            .map(|set| {
                let value = problem.eval_subset(&set, counter);
                (set, value)
            })
            .collect();
        // stable sort keeps the lexicographic order among equal metrics
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(beam);
        frontier = scored;
    }
}

/// One accepted removal in a greedy-removal run.
#[derive(Clone, Debug, PartialEq)]
pub struct RemovalStep {
    pub removed: usize,
    pub metric: f64,
}

/// Greedy removal. Starting from `H`, each round tries every single-item
/// removal and commits the feasible one with the highest metric (strict
/// improvement, so the first item in ascending order wins ties). Stops when
/// no removal is feasible; every intermediate subset is feasible.
pub fn minimize_gr(
    problem: &MinimizationProblem<'_>,
    counter: &mut InferenceCounter,
) -> MinimizationResult {
    minimize_gr_traced(problem, counter).0
}

/// [`minimize_gr`] plus the sequence of committed removals.
pub fn minimize_gr_traced(
    problem: &MinimizationProblem<'_>,
    counter: &mut InferenceCounter,
) -> (MinimizationResult, Vec<RemovalStep>) {
    let start = counter.count();
    let mut current = problem.history.clone();
    let mut metric = problem.metric_full;
    let mut trace = Vec::new();
    loop {
        let mut best_item = None;
        let mut max_perf = f64::NEG_INFINITY;
        for item in current.iter() {
            let value = problem.eval_subset(&current.without(item), counter);
            if problem.is_feasible(value) && value > max_perf {
                max_perf = value;
                best_item = Some(item);
            }
        }
        match best_item {
            Some(item) => {
                current.remove(item);
                metric = max_perf;
                trace.push(RemovalStep {
                    removed: item,
                    metric,
                });
            }
            None => break,
        }
    }
    (
        problem.result(current, metric, counter.count() - start),
        trace,
    )
}

/// The fixed registry of minimization algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Minimizer {
    Rs { seed: u64 },
    Lp,
    Mp,
    EmbSim,
    Gfs,
    Gbfs { beam: usize },
    Gr,
}

impl Minimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Minimizer::Rs { .. } => "RS",
            Minimizer::Lp => "LP",
            Minimizer::Mp => "MP",
            Minimizer::EmbSim => "EmbSim",
            Minimizer::Gfs => "GFS",
            Minimizer::Gbfs { .. } => "GBFS",
            Minimizer::Gr => "GR",
        }
    }

    pub fn is_greedy(&self) -> bool {
        matches!(
            self,
            Minimizer::Gfs | Minimizer::Gbfs { .. } | Minimizer::Gr
        )
    }

    /// Runs the algorithm. `user_seed` individualizes the RS stream.
    pub fn run(
        &self,
        problem: &MinimizationProblem<'_>,
        popularity: &[usize],
        user_seed: u64,
        counter: &mut InferenceCounter,
    ) -> Result<MinimizationResult> {
        Ok(match *self {
            Minimizer::Rs { seed } => minimize_heuristic(
                problem,
                Heuristic::Random {
                    seed: rng::derive_seed(seed, &format!("user.{user_seed}")),
                },
                popularity,
                counter,
            ),
            Minimizer::Lp => {
                minimize_heuristic(problem, Heuristic::LeastPopular, popularity, counter)
            }
            Minimizer::Mp => {
                minimize_heuristic(problem, Heuristic::MostPopular, popularity, counter)
            }
            Minimizer::EmbSim => {
                minimize_heuristic(problem, Heuristic::EmbSim, popularity, counter)
            }
            Minimizer::Gfs => minimize_gfs(problem, counter),
            Minimizer::Gbfs { beam } => minimize_gbfs(problem, beam, counter)?,
            Minimizer::Gr => minimize_gr(problem, counter),
        })
    }
}

impl fmt::Display for Minimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Minimizer::Gbfs { beam } => write!(f, "GBFS(L={beam})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Minimizer {
    type Err = Error;

    /// Accepts `RS`, `RS(seed=7)`, `LP`, `MP`, `EmbSim`, `GFS`, `GBFS`,
    /// `GBFS(L=5)`, `GR` (case-insensitive names).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::InvalidParam(format!("bad minimizer spec {s:?}")))?;
                let value = inner.split_once('=').map_or(inner, |(_, v)| v).trim();
                (name.trim(), Some(value))
            }
            None => (s, None),
        };
        let number = |default: u64| -> Result<u64> {
            arg.map_or(Ok(default), |v| {
                v.parse()
                    .map_err(|_| Error::InvalidParam(format!("bad minimizer argument in {s:?}")))
            })
        };
        let m = match name.to_ascii_lowercase().as_str() {
            "rs" => Minimizer::Rs { seed: number(0)? },
            "lp" => Minimizer::Lp,
            "mp" => Minimizer::Mp,
            "embsim" => Minimizer::EmbSim,
            "gfs" => Minimizer::Gfs,
            "gbfs" => Minimizer::Gbfs {
                beam: number(5)? as usize,
            },
            "gr" => Minimizer::Gr,
            _ => return Err(Error::InvalidParam(format!("unknown minimizer {name:?}"))),
        };
        if arg.is_some() && !matches!(m, Minimizer::Rs { .. } | Minimizer::Gbfs { .. }) {
            return Err(Error::InvalidParam(format!(
                "minimizer {name} takes no argument"
            )));
        }
        if m == (Minimizer::Gbfs { beam: 0 }) {
            return Err(Error::InvalidParam("beam width must be >= 1".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{estimate_output, EstimatorParams};
    use crate::models::Hyperparams;

    fn dense_model(n: usize, f: impl Fn(usize, usize) -> f64) -> ItemModel {
        let data = (0..n * n).map(|x| f(x / n, x % n)).collect();
        ItemModel::from_parts(
            Hyperparams::Ease { lambda: 1.0 },
            Weights::Dense { n, data },
        )
        .unwrap()
    }

    /// Deterministic pseudo-random weights in [0, 1).
    fn hashed_model(n: usize, salt: usize) -> ItemModel {
        dense_model(n, |r, c| {
            if r == c {
                0.0
            } else {
                ((r * 7919 + c * 104729 + salt * 13) % 1009) as f64 / 1009.0
            }
        })
    }

    fn problem(model: &ItemModel, history: Vec<usize>, eta: f64) -> MinimizationProblem<'_> {
        let history: ItemSet = history.into();
        let relevance = estimate_output(
            model,
            &history,
            &EstimatorParams::new(10, -1.0).unwrap(),
            &mut InferenceCounter::new(),
        )
        .unwrap();
        MinimizationProblem::new(model, history, relevance, MetricSpec::Ndcg { k: 5 }, eta).unwrap()
    }

    #[test]
    fn problem_validation() {
        let model = hashed_model(10, 0);
        let h: ItemSet = vec![1, 2].into();
        let rel = RelevanceMap::default();
        assert!(MinimizationProblem::new(
            &model,
            h.clone(),
            rel.clone(),
            MetricSpec::default(),
            1.5
        )
        .is_err());
        assert!(MinimizationProblem::new(
            &model,
            ItemSet::new(),
            rel.clone(),
            MetricSpec::default(),
            0.5
        )
        .is_err());
        assert!(
            MinimizationProblem::new(&model, vec![10].into(), rel, MetricSpec::default(), 0.5)
                .is_err()
        );
    }

    #[test]
    fn eval_subset_contract() {
        let model = hashed_model(20, 1);
        let p = problem(&model, vec![0, 3, 4, 8, 12], 0.9);
        let mut c = InferenceCounter::new();
        let full = p.eval_subset(p.history(), &mut c);
        assert_eq!(full, p.metric_full());
        let sub: ItemSet = vec![3, 8].into();
        assert_eq!(
            p.eval_subset(&sub, &mut c).to_bits(),
            p.eval_subset(&sub, &mut c).to_bits()
        );
        assert_eq!(c.count(), 3);
    }

    #[test]
    fn eta_zero_returns_empty_everywhere() {
        let model = hashed_model(20, 2);
        let p = problem(&model, vec![1, 5, 6, 9], 0.0);
        let pop = vec![1; 20];
        for m in [
            Minimizer::Rs { seed: 1 },
            Minimizer::Lp,
            Minimizer::Mp,
            Minimizer::EmbSim,
            Minimizer::Gfs,
            Minimizer::Gbfs { beam: 3 },
            Minimizer::Gr,
        ] {
            let r = m.run(&p, &pop, 0, &mut InferenceCounter::new()).unwrap();
            assert!(r.subset.is_empty(), "{m}");
            assert!(r.feasible);
            if m != Minimizer::Gr {
                assert_eq!(r.se, 1, "{m}");
            }
        }
    }

    #[test]
    fn popularity_orders() {
        let model = hashed_model(6, 3);
        let p = problem(&model, vec![0, 1, 2], 1.0);
        let pop = vec![3, 5, 1, 0, 0, 0];
        assert_eq!(
            heuristic_order(&p, Heuristic::MostPopular, &pop),
            vec![1, 0, 2]
        );
        assert_eq!(
            heuristic_order(&p, Heuristic::LeastPopular, &pop),
            vec![2, 0, 1]
        );
        let a = heuristic_order(&p, Heuristic::Random { seed: 9 }, &pop);
        assert_eq!(a, heuristic_order(&p, Heuristic::Random { seed: 9 }, &pop));
    }

    #[test]
    fn embsim_order_matches_row_dot_products() {
        let model = hashed_model(8, 4);
        let p = problem(&model, vec![1, 2, 6], 1.0);
        let row = |i: usize| {
            (0..8)
                .map(|j| model.weights().get(i, j))
                .collect::<Vec<_>>()
        };
        let user: Vec<f64> = (0..8).map(|j| row(1)[j] + row(2)[j] + row(6)[j]).collect();
        let mut expect: Vec<(usize, f64)> = [1, 2, 6]
            .iter()
            .map(|&i| (i, row(i).iter().zip(&user).map(|(a, b)| a * b).sum()))
            .collect();
        expect.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expect: Vec<usize> = expect.into_iter().map(|e| e.0).collect();
        assert_eq!(heuristic_order(&p, Heuristic::EmbSim, &[0; 8]), expect);
    }

    /// Strongly coupled model where only the full history reproduces the
    /// reference ranking: every item pushes its own private neighbour.
    fn forced_model() -> ItemModel {
        // items 0..4 history, item 4+i is pushed by history item i only
        dense_model(8, |r, c| {
            if r < 4 && c == r + 4 {
                1.0 + r as f64 * 0.1
            } else {
                0.0
            }
        })
    }

    #[test]
    fn eta_one_forced_full_history() {
        let model = forced_model();
        let p = problem(&model, vec![0, 1, 2, 3], 1.0);
        let mut c = InferenceCounter::new();
        let r = minimize_heuristic(&p, Heuristic::MostPopular, &[0; 8], &mut c);
        assert_eq!(r.subset, *p.history());
        assert_eq!(r.se, 5);
        assert_eq!(c.count(), 5);
        let r = minimize_gr(&p, &mut InferenceCounter::new());
        assert_eq!(r.subset, *p.history());
        assert_eq!(r.se, 4, "one sweep of |H| removals");
        assert!(r.feasible);
    }

    #[test]
    fn gfs_single_item_history() {
        let model = forced_model();
        let p = problem(&model, vec![2], 1.0);
        let mut c = InferenceCounter::new();
        let r = minimize_gfs(&p, &mut c);
        assert_eq!(r.subset.as_slice(), &[2]);
        assert_eq!(r.se, 2);
    }

    /// Independent restatement of greedy forward selection used as a trace
    /// oracle: recomputes every candidate metric from scratch.
    fn gfs_trace_oracle(p: &MinimizationProblem<'_>) -> ItemSet {
        let mut c = InferenceCounter::new();
        let mut current: Vec<usize> = Vec::new();
        loop {
            let set: ItemSet = current.clone().into();
            let m = p.eval_subset(&set, &mut c);
            if m / p.metric_full() >= p.eta() - 1e-12 || current.len() == p.history().len() {
                return set;
            }
            let mut cands: Vec<(usize, f64)> = p
                .history()
                .iter()
                .filter(|i| !current.contains(i))
                .map(|i| (i, p.eval_subset(&set.with(i), &mut c)))
                .collect();
            cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            current.push(cands[0].0);
        }
    }

    #[test]
    fn gfs_six_item_trace() {
        for salt in 0..10 {
            let model = hashed_model(24, salt);
            let p = problem(&model, vec![0, 4, 7, 11, 15, 20], 0.95);
            let r = minimize_gfs(&p, &mut InferenceCounter::new());
            assert_eq!(r.subset, gfs_trace_oracle(&p), "salt {salt}");
            assert!(r.feasible);
        }
    }

    /// Beam oracle by explicit enumeration of each level's expansions.
    fn gbfs_oracle(p: &MinimizationProblem<'_>, beam: usize) -> (ItemSet, u64) {
        let mut c = InferenceCounter::new();
        let mut level: Vec<ItemSet> = vec![ItemSet::new()];
        let mut best_metric = p.eval_subset(&level[0], &mut c);
        loop {
            if best_metric / p.metric_full() >= p.eta() - 1e-12
                || level[0].len() == p.history().len()
            {
                return (level[0].clone(), c.count());
            }
            let mut all: Vec<ItemSet> = Vec::new();
            for s in &level {
                for i in p.history().iter() {
                    if !s.contains(i) {
                        let t = s.with(i);
                        if !all.contains(&t) {
                            all.push(t);
                        }
                    }
                }
            }
            all.sort();
            let mut scored: Vec<(ItemSet, f64)> = all
                .into_iter()
                .map(|s| {
                    let m = p.eval_subset(&s, &mut c);
                    (s, m)
                })
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            scored.truncate(beam);
            best_metric = scored[0].1;
            level = scored.into_iter().map(|s| s.0).collect();
        }
    }

    #[test]
    fn gbfs_beam_two_matches_enumeration() {
        for salt in 0..10 {
            let model = hashed_model(24, salt);
            let p = problem(&model, vec![1, 3, 8, 9, 14, 22], 0.97);
            let r = minimize_gbfs(&p, 2, &mut InferenceCounter::new()).unwrap();
            let (set, se) = gbfs_oracle(&p, 2);
            assert_eq!(r.subset, set, "salt {salt}");
            assert_eq!(r.se, se);
        }
    }

    #[test]
    fn gbfs_width_one_is_gfs() {
        for salt in 0..10 {
            let model = hashed_model(30, salt);
            let p = problem(&model, vec![0, 2, 5, 6, 13, 17, 21, 29], 0.99);
            let a = minimize_gfs(&p, &mut InferenceCounter::new());
            let b = minimize_gbfs(&p, 1, &mut InferenceCounter::new()).unwrap();
            assert_eq!(a, b);
        }
        let model = hashed_model(5, 0);
        let p = problem(&model, vec![0, 1], 0.5);
        assert!(minimize_gbfs(&p, 0, &mut InferenceCounter::new()).is_err());
    }

    #[test]
    fn gr_trace_is_feasible_and_locally_minimal() {
        for salt in 0..10 {
            let model = hashed_model(24, salt);
            let p = problem(&model, vec![0, 4, 7, 11, 15, 20, 23], 0.9);
            let (r, trace) = minimize_gr_traced(&p, &mut InferenceCounter::new());
            let mut c = InferenceCounter::new();
            let mut current = p.history().clone();
            for step in &trace {
                current.remove(step.removed);
                let m = p.eval_subset(&current, &mut c);
                assert_eq!(m, step.metric);
                assert!(p.is_feasible(m));
            }
            assert_eq!(current, r.subset);
            for i in r.subset.iter() {
                assert!(!p.is_feasible(p.eval_subset(&r.subset.without(i), &mut c)));
            }
        }
    }

    #[test]
    fn minimizer_names_parse() {
        assert_eq!(
            "GBFS(L=5)".parse::<Minimizer>().unwrap(),
            Minimizer::Gbfs { beam: 5 }
        );
        assert_eq!(
            "gbfs".parse::<Minimizer>().unwrap(),
            Minimizer::Gbfs { beam: 5 }
        );
        assert_eq!(
            "RS(seed=3)".parse::<Minimizer>().unwrap(),
            Minimizer::Rs { seed: 3 }
        );
        assert_eq!("EmbSim".parse::<Minimizer>().unwrap(), Minimizer::EmbSim);
        assert!("GR(3)".parse::<Minimizer>().is_err());
        assert!("XYZ".parse::<Minimizer>().is_err());
        assert!("GBFS(L=0)".parse::<Minimizer>().is_err());
        assert_eq!(Minimizer::Gbfs { beam: 5 }.to_string(), "GBFS(L=5)");
    }
}
