//! Ground-truth relevance estimation: hold-out indicators and the
//! rank-transform output estimator, with grid tuning of the latter.

use log::warn;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::UserSplit;
use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::metrics::{ndcg_at_k, RelevanceMap};
use crate::models::{rank_top, InferenceCounter, ItemModel, Ranking};
use crate::rng;

/// Cut-off `K` and decay exponent `γ` of the rank transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    k: usize,
    gamma: f64,
}

impl EstimatorParams {
    pub fn new(k: usize, gamma: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParam(format!(
                "estimator cut-off K must be >= 2, got {k}"
            )));
        }
        if gamma == 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidParam(format!(
                "estimator gamma must be finite and nonzero, got {gamma}"
            )));
        }
        Ok(Self { k, gamma })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// K ∈ {50, 100, 200, 500, 1000} × γ ∈ {−2, −1, −0.5, 0.5, 1, 2}.
    pub fn default_grid() -> Vec<EstimatorParams> {
        let mut grid = Vec::new();
        for k in [50, 100, 200, 500, 1000] {
            for gamma in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
                grid.push(EstimatorParams { k, gamma });
            }
        }
        grid
    }
}

/// `δ(i ≤ K)·((i+1)^γ − (K+1)^γ) / (2^γ − (K+1)^γ)` for 1-based rank `i`.
///
/// Exactly 1 at `i = 1` and exactly 0 for `i ≥ K`.
pub fn f_gamma_k(rank: usize, params: &EstimatorParams) -> f64 {
    debug_assert!(rank >= 1);
    if rank >= params.k {
        return 0.0;
    }
    if rank == 1 {
        return 1.0;
    }
    let g = params.gamma;
    let tail = ((params.k + 1) as f64).powf(g);
    (((rank + 1) as f64).powf(g) - tail) / (2f64.powf(g) - tail)
}

/// Indicator relevance over the hold-out items; the fold-in part of the
/// history is excluded.
pub fn estimate_holdout(hold_out: &ItemSet, full_history: &ItemSet) -> Result<RelevanceMap> {
    RelevanceMap::new(
        hold_out.iter().map(|i| (i, 1.0)),
        full_history.difference(hold_out),
    )
}

/// Transforms a ranking produced from `history` into relevance weights.
pub fn relevance_from_ranking(
    ranking: &Ranking,
    history: &ItemSet,
    params: &EstimatorParams,
) -> Result<RelevanceMap> {
    RelevanceMap::new(
        ranking
            .order()
            .iter()
            .enumerate()
            .take(params.k - 1)
            .map(|(pos, &item)| (item, f_gamma_k(pos + 1, params))),
        history.clone(),
    )
}

/// Output estimation: one counted inference on the full history, ranked
/// with the history masked, then mapped through [`f_gamma_k`].
pub fn estimate_output(
    model: &ItemModel,
    history: &ItemSet,
    params: &EstimatorParams,
    counter: &mut InferenceCounter,
) -> Result<RelevanceMap> {
    if history.is_empty() {
        return Err(Error::Empty(
            "output estimation needs a nonempty history".into(),
        ));
    }
    let scores = model.infer(history, counter);
    let ranking = rank_top(&scores, history, params.k - 1);
    relevance_from_ranking(&ranking, history, params)
}

/// Random fold-in probes used to score estimator candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub n_probes: usize,
    pub seed: u64,
    /// Cut-off of the NDCG compared between estimators.
    #[serde(default = "default_probe_cutoff")]
    pub cutoff: usize,
}

fn default_probe_cutoff() -> usize {
    100
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            n_probes: 20,
            seed: 0,
            cutoff: 100,
        }
    }
}

/// Result of [`tune_estimator`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: EstimatorParams,
    /// Mean Spearman correlation per grid entry, in grid order.
    pub scores: Vec<(EstimatorParams, f64)>,
    pub users_used: usize,
    pub users_skipped: usize,
}

/// Grid search for the estimator: per user, draws random fold-in probes and
/// scores each candidate by the Spearman correlation between its NDCG and
/// the hold-out NDCG across probes. The highest mean correlation wins; ties
/// go to the smaller `K`, then to `|γ|` closer to zero, then to smaller `γ`.
///
/// A user whose correlation is undefined (a constant series) for any
/// candidate is skipped with a warning.
pub fn tune_estimator(
    users: &[UserSplit],
    model: &ItemModel,
    grid: &[EstimatorParams],
    probes: &ProbeSpec,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(Error::Empty("estimator grid is empty".into()));
    }
    let usable: Vec<&UserSplit> = users
        .iter()
        .filter(|u| !u.fold_in.is_empty() && !u.hold_out.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::Empty(
            "no estimation user with nonempty fold-in and hold-out".into(),
        ));
    }
    let max_k = grid.iter().map(|p| p.k).max().unwrap_or(2);

    let per_user: Vec<Option<Vec<f64>>> = usable
        .par_iter()
        .map(|user| -> Result<Option<Vec<f64>>> {
            let mut counter = InferenceCounter::new();
            let fold_in = &user.fold_in;
            let scores = model.infer(fold_in, &mut counter);
            let full_ranking = rank_top(&scores, fold_in, max_k - 1);
            let holdout = estimate_holdout(&user.hold_out, &user.full_history())?;
            let estimates = grid
                .iter()
                .map(|p| relevance_from_ranking(&full_ranking, fold_in, p))
                .collect::<Result<Vec<_>>>()?;

            let mut r = rng::stream(probes.seed, &format!("tune.probes.{}", user.user));
            let items = fold_in.as_slice();
            let mut holdout_series = Vec::with_capacity(probes.n_probes);
            let mut estimate_series = vec![Vec::with_capacity(probes.n_probes); grid.len()];
            for _ in 0..probes.n_probes {
                let size = r.random_range(1..=items.len());
                let probe: ItemSet = index::sample(&mut r, items.len(), size)
                    .into_iter()
                    .map(|pos| items[pos])
                    .collect();
                let ranking = rank_top(&model.infer(&probe, &mut counter), &probe, probes.cutoff);
                holdout_series.push(ndcg_at_k(&ranking, &holdout, probes.cutoff));
                for (series, estimate) in estimate_series.iter_mut().zip(&estimates) {
                    series.push(ndcg_at_k(&ranking, estimate, probes.cutoff));
                }
            }
            let correlations: Option<Vec<f64>> = estimate_series
                .iter()
                .map(|series| spearman(series, &holdout_series))
                .collect();
            if correlations.is_none() {
                warn!(
                    "estimator tuning: skipping user {} (constant metric series)",
                    user.user
                );
            }
            Ok(correlations)
        })
        .collect::<Result<_>>()?;

    let used: Vec<&Vec<f64>> = per_user.iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::Empty(
            "no estimation user produced a defined rank correlation".into(),
        ));
    }
    let scores: Vec<(EstimatorParams, f64)> = grid
        .iter()
        .enumerate()
        .map(|(g, p)| {
            (
                *p,
                used.iter().map(|c| c[g]).sum::<f64>() / used.len() as f64,
            )
        })
        .collect();
    let best = scores
        .iter()
        .min_by(|(pa, sa), (pb, sb)| {
            sb.total_cmp(sa)
                .then(pa.k.cmp(&pb.k))
                .then(pa.gamma.abs().total_cmp(&pb.gamma.abs()))
                .then(pa.gamma.total_cmp(&pb.gamma))
        })
        .map(|(p, _)| *p)
        .expect("nonempty grid");
    Ok(TuneOutcome {
        best,
        scores,
        users_used: used.len(),
        users_skipped: per_user.len() - used.len(),
    })
}

/// Average ranks (1-based), ties share the mean rank.
fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let mean = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `None` when either series is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return None;
    }
    let (ra, rb) = (fractional_ranks(a), fractional_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
