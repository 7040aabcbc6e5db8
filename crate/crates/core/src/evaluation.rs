//! Aggregation of per-user results: minimization ratio, sample efficiency,
//! history-size strata, and the hold-out test comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::UserSplit;
use crate::error::{Error, Result};
use crate::groundtruth::estimate_holdout;
use crate::itemset::ItemSet;
use crate::metrics::{ndcg_at_k, recall_at_k};
use crate::minimizers::MinimizationResult;
use crate::models::{rank_top, InferenceCounter, ItemModel};

/// `Σ|I(u)| / Σ|H(u)|` over the given results.
pub fn minimization_ratio(results: &[MinimizationResult]) -> Result<f64> {
    ratio_of_sums(results.iter().map(|r| (r.subset.len(), r.history_len)))
}

fn ratio_of_sums(pairs: impl Iterator<Item = (usize, usize)>) -> Result<f64> {
    let (mut kept, mut total, mut n) = (0usize, 0usize, 0usize);
    for (i, h) in pairs {
        kept += i;
        total += h;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty(
            "minimization ratio of an empty result list".into(),
        ));
    }
    if total == 0 {
        return Err(Error::Contract("all histories are empty".into()));
    }
    Ok(kept as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StratumSpec {
    pub n_bins: usize,
    pub percentile_cap: f64,
}

impl Default for StratumSpec {
    fn default() -> Self {
        Self {
            n_bins: 5,
            percentile_cap: 95.0,
        }
    }
}

/// One history-size bin. The first bin is `(0, upper)`, later bins are
/// `[lower, upper)`, and the last one also admits `upper` itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Stratum {
    pub lower: f64,
    pub upper: f64,
    /// Indices into the input slice.
    pub members: Vec<usize>,
}

impl Stratum {
    pub fn label(&self, first: bool) -> String {
        let open = if first { '(' } else { '[' };
        format!("{open}{}, {})", fmt_edge(self.lower), fmt_edge(self.upper))
    }
}

fn fmt_edge(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.1}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stratification {
    /// Nearest-rank percentile of the history sizes.
    pub cap: usize,
    pub strata: Vec<Stratum>,
    /// Users above the cap.
    pub excluded: Vec<usize>,
    pub single_bin_fallback: bool,
}

impl Stratification {
    pub fn edges(&self) -> Vec<f64> {
        let mut edges: Vec<f64> = self.strata.iter().map(|s| s.lower).collect();
        edges.extend(self.strata.last().map(|s| s.upper));
        edges
    }
}

/// Nearest-rank percentile (`p` in (0, 100]).
pub fn nearest_rank_percentile(values: &[usize], p: f64) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Equal-width bins over `(0, cap]` where `cap` is the configured
/// percentile of `history_sizes`.
pub fn stratify(history_sizes: &[usize], spec: &StratumSpec) -> Result<Stratification> {
    if history_sizes.is_empty() {
        return Err(Error::Empty(
            "stratification needs at least one user".into(),
        ));
    }
    if spec.n_bins == 0 || !(spec.percentile_cap > 0.0 && spec.percentile_cap <= 100.0) {
        return Err(Error::InvalidParam(format!(
            "invalid stratum spec {spec:?}"
        )));
    }
    let cap = nearest_rank_percentile(history_sizes, spec.percentile_cap);
    let min = history_sizes.iter().copied().min().unwrap_or(0);
    let single = cap == min;
    if single {
        warn!("stratification: percentile cap {cap} equals the smallest history; using one bin");
    }
    let n_bins = if single { 1 } else { spec.n_bins };
    let edge = |j: usize| cap as f64 * j as f64 / n_bins as f64;
    let mut strata: Vec<Stratum> = (0..n_bins)
        .map(|j| Stratum {
            lower: edge(j),
            upper: edge(j + 1),
            members: Vec::new(),
        })
        .collect();
    let mut excluded = Vec::new();
    for (idx, &size) in history_sizes.iter().enumerate() {
        if size > cap {
            excluded.push(idx);
            continue;
        }
        let bin = (0..n_bins)
            .find(|&j| (size as f64) < edge(j + 1))
            .unwrap_or(n_bins - 1);
        strata[bin].members.push(idx);
    }
    Ok(Stratification {
        cap,
        strata,
        excluded,
        single_bin_fallback: single,
    })
}

/// Mean SE per group. `grouping` returns `None` to leave a result out.
pub fn sample_efficiency_summary<K: Ord>(
    results: &[MinimizationResult],
    grouping: impl Fn(usize, &MinimizationResult) -> Option<K>,
) -> BTreeMap<K, SeSummary> {
    let mut groups: BTreeMap<K, (u64, usize)> = BTreeMap::new();
    for (idx, r) in results.iter().enumerate() {
        if let Some(key) = grouping(idx, r) {
            let entry = groups.entry(key).or_default();
            entry.0 += r.se;
            entry.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|(k, (total, n))| {
            (
                k,
                SeSummary {
                    mean: total as f64 / n as f64,
                    users: n,
                },
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeSummary {
    pub mean: f64,
    pub users: usize,
}

impl SeSummary {
    pub fn display(&self) -> String {
        format!("{:.0}", self.mean.round())
    }
}

/// Hold-out metrics compared between full and minimized inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestMetric {
    Ndcg(usize),
    Recall(usize),
}

impl TestMetric {
    pub fn label(&self) -> String {
        match self {
            TestMetric::Ndcg(k) => format!("NDCG@{k}"),
            TestMetric::Recall(k) => format!("Recall@{k}"),
        }
    }

    pub fn table_defaults() -> Vec<TestMetric> {
        vec![
            TestMetric::Ndcg(100),
            TestMetric::Recall(20),
            TestMetric::Recall(50),
        ]
    }

    fn depth(&self) -> usize {
        match *self {
            TestMetric::Ndcg(k) | TestMetric::Recall(k) => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestMetricRow {
    pub metric: TestMetric,
    pub users: usize,
    pub mean_full: f64,
    pub mean_min: f64,
    /// Ratio of means (headline).
    pub prr: f64,
    pub mean_user_prr: f64,
}

/// Scores each user's hold-out twice, with the full fold-in and with the
/// minimized subset as input (each masking only its own input), and
/// reports per-metric means. `minimized[i]` belongs to `users[i]`.
pub fn evaluate_test(
    model: &ItemModel,
    users: &[UserSplit],
    minimized: &[ItemSet],
    metrics: &[TestMetric],
) -> Result<Vec<TestMetricRow>> {
    if users.len() != minimized.len() {
        return Err(Error::Contract(format!(
            "{} users but {} minimized subsets",
            users.len(),
            minimized.len()
        )));
    }
    let depth = metrics.iter().map(TestMetric::depth).max().unwrap_or(0);
    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); metrics.len()];
    let mut counter = InferenceCounter::new();
    for (user, subset) in users.iter().zip(minimized) {
        if !subset.is_subset(&user.fold_in) {
            return Err(Error::Contract(format!(
                "minimized subset of user {} is not inside its fold-in",
                user.user
            )));
        }
        if user.hold_out.is_empty() {
            warn!(
                "test evaluation: user {} has an empty hold-out, skipped",
                user.user
            );
            continue;
        }
        let relevance = estimate_holdout(&user.hold_out, &user.full_history())?;
        let full = rank_top(
            &model.infer(&user.fold_in, &mut counter),
            &user.fold_in,
            depth,
        );
        let min = rank_top(&model.infer(subset, &mut counter), subset, depth);
        for (metric, acc) in metrics.iter().zip(sums.iter_mut()) {
            let score = |ranking| match *metric {
                TestMetric::Ndcg(k) => ndcg_at_k(ranking, &relevance, k),
                TestMetric::Recall(k) => recall_at_k(ranking, &user.hold_out, k),
            };
            let (f, m) = (score(&full), score(&min));
            acc.0 += f;
            acc.1 += m;
            acc.2 += if f == 0.0 { 1.0 } else { m / f };
            acc.3 += 1;
        }
    }
    Ok(metrics
        .iter()
        .zip(sums)
        .map(|(&metric, (f, m, r, n))| {
            let denom = n.max(1) as f64;
            let (mean_full, mean_min) = (f / denom, m / denom);
            TestMetricRow {
                metric,
                users: n,
                mean_full,
                mean_min,
                prr: if mean_full == 0.0 {
                    1.0
                } else {
                    mean_min / mean_full
                },
                mean_user_prr: r / denom,
            }
        })
        .collect())
}

/// Identifies one (model, minimizer, η) configuration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub model: String,
    pub minimizer: String,
    /// η as written in the results file.
    pub eta: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: RunKey,
    pub users: usize,
    pub mr: f64,
    pub mean_se: f64,
    pub mean_prr: f64,
    pub feasible_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub key: RunKey,
    pub bin: String,
    pub lower: f64,
    pub upper: f64,
    pub users: usize,
    pub mr: Option<f64>,
    pub mean_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub key: RunKey,
    pub row: TestMetricRow,
}

/// Aggregate, stratified and test-set tables plus the run manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub aggregate: Vec<AggregateRow>,
    pub strata: Vec<StratumRow>,
    pub test: Vec<TestRow>,
    pub manifest: BTreeMap<String, String>,
}

impl RunReport {
    /// Builds the aggregate and stratified sections from grouped results,
    /// keeping the group order.
    pub fn from_results(
        groups: &[(RunKey, Vec<MinimizationResult>)],
        spec: &StratumSpec,
    ) -> Result<Self> {
        let mut report = RunReport::default();
        for (key, results) in groups {
            if results.is_empty() {
                continue;
            }
            let n = results.len() as f64;
            report.aggregate.push(AggregateRow {
                key: key.clone(),
                users: results.len(),
                mr: minimization_ratio(results)?,
                mean_se: results.iter().map(|r| r.se as f64).sum::<f64>() / n,
                mean_prr: results.iter().map(|r| r.prr).sum::<f64>() / n,
                feasible_share: results.iter().filter(|r| r.feasible).count() as f64 / n,
            });
            let sizes: Vec<usize> = results.iter().map(|r| r.history_len).collect();
            let strat = stratify(&sizes, spec)?;
            for (j, stratum) in strat.strata.iter().enumerate() {
                let members: Vec<MinimizationResult> = stratum
                    .members
                    .iter()
                    .map(|&i| results[i].clone())
                    .collect();
                let se = sample_efficiency_summary(&members, |_, _| Some(()));
                report.strata.push(StratumRow {
                    key: key.clone(),
                    bin: stratum.label(j == 0),
                    lower: stratum.lower,
                    upper: stratum.upper,
                    users: members.len(),
                    mr: minimization_ratio(&members).ok(),
                    mean_se: se.get(&()).map(|s| s.mean),
                });
            }
        }
        Ok(report)
    }

    pub fn aggregate_for(&self, model: &str, minimizer: &str, eta: &str) -> Option<&AggregateRow> {
        self.aggregate
            .iter()
            .find(|r| r.key.model == model && r.key.minimizer == minimizer && r.key.eta == eta)
    }

    /// Aligned text tables.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut t = TextTable::new(&[
            "Model",
            "Minimizer",
            "eta",
            "Users",
            "MR (%)",
            "SE (#)",
            "PRR (%)",
            "Feasible (%)",
        ]);
        for r in &self.aggregate {
            t.row(vec![
                r.key.model.clone(),
                r.key.minimizer.clone(),
                r.key.eta.clone(),
                r.users.to_string(),
                format!("{:.1}", 100.0 * r.mr),
                format!("{:.0}", r.mean_se.round()),
                format!("{:.1}", 100.0 * r.mean_prr),
                format!("{:.1}", 100.0 * r.feasible_share),
            ]);
        }
        let _ = writeln!(
            out,
            "Minimization ratio and sample efficiency\n\n{}",
            t.render()
        );

        let mut t = TextTable::new(&[
            "Model",
            "Minimizer",
            "eta",
            "History",
            "Users",
            "MR (%)",
            "SE (#)",
        ]);
        for r in &self.strata {
            t.row(vec![
                r.key.model.clone(),
                r.key.minimizer.clone(),
                r.key.eta.clone(),
                r.bin.clone(),
                r.users.to_string(),
                r.mr.map_or("-".into(), |v| format!("{:.1}", 100.0 * v)),
                r.mean_se
                    .map_or("-".into(), |v| format!("{:.0}", v.round())),
            ]);
        }
        let _ = writeln!(out, "Stratified by user history size\n\n{}", t.render());

        if !self.test.is_empty() {
            let mut t = TextTable::new(&[
                "Model",
                "Minimizer",
                "eta",
                "Metric",
                "Full",
                "Min",
                "PRR (%)",
            ]);
            for r in &self.test {
                t.row(vec![
                    r.key.model.clone(),
                    r.key.minimizer.clone(),
                    r.key.eta.clone(),
                    r.row.metric.label(),
                    format!("{:.3}", r.row.mean_full),
                    format!("{:.3}", r.row.mean_min),
                    format!("{:.1}", 100.0 * r.row.prr),
                ]);
            }
            let _ = writeln!(out, "Test-set comparison (hold-out)\n\n{}", t.render());
        }
        if !self.manifest.is_empty() {
            let _ = writeln!(out, "Manifest\n");
            for (k, v) in &self.manifest {
                let _ = writeln!(out, "  {k} = {v}");
            }
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out =
            String::from("model,minimizer,eta,users,mr,mean_se,mean_prr,feasible_share\n");
        for r in &self.aggregate {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.key.model,
                r.key.minimizer,
                r.key.eta,
                r.users,
                r.mr,
                r.mean_se,
                r.mean_prr,
                r.feasible_share
            );
        }
        out
    }

    pub fn strata_csv(&self) -> String {
        let mut out = String::from("model,minimizer,eta,lower,upper,users,mr,mean_se\n");
        for r in &self.strata {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.key.model,
                r.key.minimizer,
                r.key.eta,
                r.lower,
                r.upper,
                r.users,
                opt(r.mr),
                opt(r.mean_se)
            );
        }
        out
    }

    pub fn test_csv(&self) -> String {
        let mut out =
            String::from("model,minimizer,eta,metric,users,mean_full,mean_min,prr,mean_user_prr\n");
        for r in &self.test {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.key.model,
                r.key.minimizer,
                r.key.eta,
                r.row.metric.label(),
                r.row.users,
                r.row.mean_full,
                r.row.mean_min,
                r.row.prr,
                r.row.mean_user_prr
            );
        }
        out
    }
}

/// One user's point of the history-size versus MR scatter.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterPoint<'a> {
    pub key: &'a RunKey,
    pub user: &'a str,
    pub history_len: usize,
    pub subset_len: usize,
}

/// `mr_vs_history.csv` contents: one row per user and configuration.
pub fn mr_vs_history_csv<'a>(points: impl IntoIterator<Item = ScatterPoint<'a>>) -> String {
    let mut out = String::from("model,minimizer,eta,user,history_len,subset_len,mr\n");
    for p in points {
        let mr = if p.history_len == 0 {
            0.0
        } else {
            p.subset_len as f64 / p.history_len as f64
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.key.model, p.key.minimizer, p.key.eta, p.user, p.history_len, p.subset_len, mr
        );
    }
    out
}

struct TextTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TextTable {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain(std::iter::once(self.header[c].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (c, cell) in cells.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[c]);
                }
            }
            s.trim_end().to_owned() + "\n"
        };
        let mut out = line(&self.header);
        out.push_str(
            &"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)),
        );
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}
