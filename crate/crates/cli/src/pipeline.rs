//! Pipeline stages. Each reads its inputs from the output directory and
//! writes its artifacts there.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use minrec::evaluation::TestRow;
use minrec::{
    binarize, estimate_holdout, estimate_output, evaluate_test, filter_activity, fit_ease,
    fit_itemknn, load_interactions, load_splits, mr_vs_history_csv, ndcg_at_k, rank_top,
    save_splits, split_strong_generalization, tune_estimator, EstimatorParams, Hyperparams,
    InferenceCounter, ItemModel, MinimizationProblem, MinimizationResult, Minimizer, ProbeSpec,
    RunKey, RunReport, ScatterPoint, Similarity, Splits, TestMetric, UserSplit,
};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{eta_label, hex, ModelKind, RunConfig};
use crate::manifest::Manifest;
use crate::results::{read_rows, write_rows, ResultRow, RowKey, RowWriter, RESULTS_FILE};

pub const SPLITS_DIR: &str = "splits";
pub const MODEL_FILE: &str = "model.bin";
pub const TUNE_FILE: &str = "tune.csv";
pub const TEST_EVAL_FILE: &str = "test_eval.json";
pub const REPORT_DIR: &str = "report";
pub const CONFIG_COPY: &str = "config.toml";

/// Cut-off of the validation NDCG used to pick model hyperparameters.
const FIT_CUTOFF: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Fit,
    TuneGt,
    Minimize,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Prepare,
        Stage::Fit,
        Stage::TuneGt,
        Stage::Minimize,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Fit => "fit",
            Stage::TuneGt => "tune-gt",
            Stage::Minimize => "minimize",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

/// A failed stage and its cause.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {:#}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {}

pub fn run_stage(stage: Stage, cfg: &RunConfig) -> std::result::Result<(), StageError> {
    info!("stage {}", stage.name());
    let outcome = cfg.validate().and_then(|_| match stage {
        Stage::Prepare => prepare(cfg),
        Stage::Fit => fit(cfg),
        Stage::TuneGt => tune_gt(cfg),
        Stage::Minimize => minimize(cfg),
        Stage::Evaluate => evaluate(cfg),
        Stage::Report => report(cfg),
    });
    outcome.map_err(|source| StageError { stage, source })
}

pub fn run_all(cfg: &RunConfig) -> std::result::Result<(), StageError> {
    Stage::ALL.iter().try_for_each(|&s| run_stage(s, cfg))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    let data = cfg.dataset_path();
    let digest = sha256_file(&data)?;
    let raw = load_interactions(&data, &cfg.dataset.columns)?;
    let binary = binarize(&raw, cfg.preprocess.positive_threshold);
    let table = filter_activity(
        &binary,
        cfg.preprocess.min_user_interactions,
        cfg.preprocess.min_item_interactions,
    );
    let splits = split_strong_generalization(&table, &cfg.split_spec())?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    save_splits(&out.join(SPLITS_DIR), &splits)?;
    crate::write_atomic(&out.join(CONFIG_COPY), cfg.canonical().as_bytes())?;

    let mut m = Manifest::fresh(&out);
    m.set("seed", cfg.seed);
    m.set("config.sha256", cfg.hash());
    m.set("dataset.sha256", digest);
    m.set("dataset.raw_interactions", raw.nnz());
    m.set("prepare.users", table.n_users());
    m.set("prepare.items", table.n_items());
    m.set("prepare.interactions", table.nnz());
    m.set("split.train_users", splits.train.n_users());
    m.set("split.val_rec_users", splits.val_rec.len());
    m.set("split.val_est_users", splits.val_est.len());
    m.set("split.test_users", splits.test.len());
    m.save()?;
    info!(
        "prepared {} users x {} items ({} interactions)",
        table.n_users(),
        table.n_items(),
        table.nnz()
    );
    Ok(())
}

fn open_splits(out: &Path) -> Result<Splits> {
    let dir = out.join(SPLITS_DIR);
    if !dir.is_dir() {
        bail!("no splits in {} (run prepare first)", dir.display());
    }
    Ok(load_splits(&dir)?)
}

fn open_model(out: &Path) -> Result<ItemModel> {
    let path = out.join(MODEL_FILE);
    if !path.is_file() {
        bail!("no model at {} (run fit first)", path.display());
    }
    Ok(ItemModel::load(&path)?)
}

/// Mean hold-out NDCG of `model` over `users` with the fold-in as input.
pub fn validation_ndcg(model: &ItemModel, users: &[UserSplit], cutoff: usize) -> Result<f64> {
    if users.is_empty() {
        bail!("no validation users");
    }
    let scores: Vec<f64> = users
        .par_iter()
        .map(|u| {
            let relevance = estimate_holdout(&u.hold_out, &u.full_history())?;
            let mut counter = InferenceCounter::new();
            let ranking = rank_top(&model.infer(&u.fold_in, &mut counter), &u.fold_in, cutoff);
            Ok(ndcg_at_k(&ranking, &relevance, cutoff))
        })
        .collect::<minrec::Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn hyperparam_grid(cfg: &RunConfig) -> Vec<Hyperparams> {
    match cfg.model.kind {
        ModelKind::Ease => cfg
            .model
            .lambdas
            .iter()
            .map(|&lambda| Hyperparams::Ease { lambda })
            .collect(),
        ModelKind::ItemKnn => cfg
            .model
            .neighbors
            .iter()
            .map(|&k| Hyperparams::ItemKnn {
                k,
                similarity: Similarity::Cosine,
            })
            .collect(),
    }
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    let splits = open_splits(&out)?;
    let grid = hyperparam_grid(cfg);
    if grid.is_empty() {
        bail!("empty hyperparameter grid");
    }
    let mut best: Option<(ItemModel, f64)> = None;
    let mut scores = Vec::new();
    for hp in &grid {
        let model = match *hp {
            Hyperparams::Ease { lambda } => fit_ease(&splits.train, lambda)?,
            Hyperparams::ItemKnn { k, similarity } => fit_itemknn(&splits.train, k, similarity)?,
        };
        let score = validation_ndcg(&model, &splits.val_rec, FIT_CUTOFF)?;
        info!("fit {hp:?}: validation NDCG@{FIT_CUTOFF} = {score:.5}");
        scores.push(json!({ "params": hp, "ndcg": score }));
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((model, score));
        }
    }
    let (model, score) = best.expect("grid is nonempty");
    model.save(&out.join(MODEL_FILE))?;

    let mut m = Manifest::open(&out)?;
    m.clear_prefix("model.");
    m.set("model.kind", model.hyperparams().kind_name());
    match *model.hyperparams() {
        Hyperparams::Ease { lambda } => m.set("model.lambda", lambda),
        Hyperparams::ItemKnn { k, .. } => m.set("model.k", k),
    }
    m.set(&format!("model.val_ndcg@{FIT_CUTOFF}"), score);
    m.set("model.grid", scores);
    m.set("model.sha256", sha256_file(&out.join(MODEL_FILE))?);
    m.save()
}

pub fn tune_gt(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    let splits = open_splits(&out)?;
    let model = open_model(&out)?;
    let probes = ProbeSpec {
        n_probes: cfg.estimator.n_probes,
        seed: cfg.seed,
        cutoff: cfg.minimize.metric.depth(),
    };
    let outcome = tune_estimator(&splits.val_est, &model, &cfg.estimator.grid()?, &probes)?;
    let mut csv = String::from("K,gamma,spearman\n");
    for (p, s) in &outcome.scores {
        csv.push_str(&format!("{},{},{}\n", p.k(), p.gamma(), s));
    }
    crate::write_atomic(&out.join(TUNE_FILE), csv.as_bytes())?;
    let best_score = outcome
        .scores
        .iter()
        .find(|(p, _)| *p == outcome.best)
        .map(|(_, s)| *s);

    let mut m = Manifest::open(&out)?;
    m.clear_prefix("estimator.");
    m.set("estimator.K", outcome.best.k());
    m.set("estimator.gamma", outcome.best.gamma());
    m.set("estimator.spearman", best_score);
    m.set("estimator.users_used", outcome.users_used);
    m.set("estimator.users_skipped", outcome.users_skipped);
    m.save()?;
    info!(
        "estimator K={} gamma={} ({} users, {} skipped)",
        outcome.best.k(),
        outcome.best.gamma(),
        outcome.users_used,
        outcome.users_skipped
    );
    Ok(())
}

fn tuned_estimator(m: &Manifest) -> Result<EstimatorParams> {
    let k = m.get("estimator.K").and_then(|v| v.as_u64());
    let gamma = m.get("estimator.gamma").and_then(|v| v.as_f64());
    match (k, gamma) {
        (Some(k), Some(g)) => Ok(EstimatorParams::new(k as usize, g)?),
        _ => bail!("no tuned estimator in the manifest (run tune-gt first)"),
    }
}

/// Test users in index order: the order rows are written in.
fn ordered_test_users(splits: &Splits) -> Vec<&UserSplit> {
    let mut users: Vec<&UserSplit> = splits.test.iter().collect();
    users.sort_by_key(|u| u.user);
    users
}

struct Plan {
    minimizers: Vec<(Minimizer, String)>,
    etas: Vec<(f64, String)>,
}

impl Plan {
    fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            minimizers: cfg.minimizers()?,
            etas: cfg
                .minimize
                .etas
                .iter()
                .map(|&e| (e, eta_label(e)))
                .collect(),
        })
    }

    fn keys_for(&self, user: &str) -> impl Iterator<Item = RowKey> + '_ {
        let user = user.to_owned();
        self.minimizers.iter().flat_map(move |(_, m)| {
            let user = user.clone();
            self.etas
                .iter()
                .map(move |(_, e)| (user.clone(), m.clone(), e.clone()))
        })
    }

    /// Canonical order of every expected key.
    fn order(&self, splits: &Splits) -> HashMap<RowKey, usize> {
        ordered_test_users(splits)
            .into_iter()
            .flat_map(|u| self.keys_for(splits.users.id(u.user)).collect::<Vec<_>>())
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect()
    }
}

/// Keeps rows with an expected key (first occurrence) in canonical order.
fn canonical_rows(rows: Vec<ResultRow>, order: &HashMap<RowKey, usize>) -> Vec<ResultRow> {
    let mut seen = HashSet::new();
    let mut kept: Vec<(usize, ResultRow)> = rows
        .into_iter()
        .filter_map(|r| {
            let key = r.key();
            let idx = *order.get(&key)?;
            seen.insert(key).then_some((idx, r))
        })
        .collect();
    kept.sort_by_key(|(i, _)| *i);
    kept.into_iter().map(|(_, r)| r).collect()
}

struct UserContext<'a> {
    model: &'a ItemModel,
    splits: &'a Splits,
    estimator: EstimatorParams,
    popularity: &'a [usize],
    cfg: &'a RunConfig,
    plan: &'a Plan,
}

/// Solves every pending (minimizer, η) pair of one user. Failures are
/// logged and the affected keys left out.
fn solve_user(
    ctx: &UserContext<'_>,
    user: &UserSplit,
    done: &HashSet<RowKey>,
) -> (Vec<ResultRow>, usize) {
    let user_id = ctx.splits.users.id(user.user);
    let pending: Vec<(&Minimizer, &str, f64, &str)> = ctx
        .plan
        .minimizers
        .iter()
        .flat_map(|(m, ml)| {
            ctx.plan
                .etas
                .iter()
                .map(move |(e, el)| (m, ml.as_str(), *e, el.as_str()))
        })
        .filter(|(_, ml, _, el)| {
            !done.contains(&(user_id.to_owned(), (*ml).to_owned(), (*el).to_owned()))
        })
        .collect();
    if pending.is_empty() {
        return (Vec::new(), 0);
    }
    let mut setup = InferenceCounter::new();
    let relevance = match estimate_output(ctx.model, &user.fold_in, &ctx.estimator, &mut setup) {
        Ok(r) => r,
        Err(e) => {
            warn!("user {user_id}: relevance estimation failed: {e}");
            return (Vec::new(), pending.len());
        }
    };
    let mut rows = Vec::with_capacity(pending.len());
    let mut failures = 0;
    for (m, ml, eta, el) in pending {
        let solved = MinimizationProblem::new(
            ctx.model,
            user.fold_in.clone(),
            relevance.clone(),
            ctx.cfg.minimize.metric,
            eta,
        )
        .and_then(|problem| {
            let mut counter = InferenceCounter::new();
            m.run(&problem, ctx.popularity, user.user as u64, &mut counter)
        });
        match solved {
            Ok(r) => rows.push(ResultRow::from_result(
                user_id,
                ml,
                el,
                &r,
                ctx.splits.items(),
            )),
            Err(e) => {
                warn!("user {user_id}, {ml}, eta {el}: {e}");
                failures += 1;
            }
        }
    }
    (rows, failures)
}

pub fn minimize(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    let splits = open_splits(&out)?;
    let model = open_model(&out)?;
    let mut manifest = Manifest::open(&out)?;
    let estimator = tuned_estimator(&manifest)?;
    let plan = Plan::new(cfg)?;
    let order = plan.order(&splits);
    let popularity = splits.train.item_counts();
    let path = out.join(RESULTS_FILE);

    let existing = if path.exists() {
        read_rows(&path)?
    } else {
        Vec::new()
    };
    let existing = canonical_rows(existing, &order);
    if !existing.is_empty() {
        info!("resuming with {} completed rows", existing.len());
    }
    write_rows(&path, &existing)?;
    let done: HashSet<RowKey> = existing.iter().map(ResultRow::key).collect();

    let ctx = UserContext {
        model: &model,
        splits: &splits,
        estimator,
        popularity: &popularity,
        cfg,
        plan: &plan,
    };
    let users = ordered_test_users(&splits);
    let chunk = (rayon::current_num_threads() * 2).max(1);
    let mut writer = RowWriter::append(&path)?;
    let mut processed = 0;
    for block in users.chunks(chunk) {
        let solved: Vec<(Vec<ResultRow>, usize)> = block
            .par_iter()
            .map(|u| solve_user(&ctx, u, &done))
            .collect();
        for (rows, _) in &solved {
            if !rows.is_empty() {
                writer.write_block(rows)?;
            }
        }
        processed += block.len();
        info!("minimize: {processed}/{} users", users.len());
    }
    drop(writer);

    let rows = canonical_rows(read_rows(&path)?, &order);
    write_rows(&path, &rows)?;
    let failures = order.len() - rows.len();
    if failures > 0 {
        warn!("minimize: {failures} (user, minimizer, eta) keys failed");
    }
    manifest.clear_prefix("minimize.");
    manifest.set("minimize.users", users.len());
    manifest.set("minimize.rows", rows.len());
    manifest.set("minimize.failures", failures);
    manifest.save()
}

fn model_name(m: &Manifest) -> Result<String> {
    m.get("model.kind")
        .and_then(|v| v.as_str())
        .map(str::to_owned)
        .ok_or_else(|| anyhow!("no model in the manifest (run fit first)"))
}

fn open_results(out: &Path) -> Result<Vec<ResultRow>> {
    let path = out.join(RESULTS_FILE);
    if !path.is_file() {
        bail!("no results at {} (run minimize first)", path.display());
    }
    read_rows(&path)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    let splits = open_splits(&out)?;
    let model = open_model(&out)?;
    let manifest = Manifest::open(&out)?;
    let model_name = model_name(&manifest)?;
    let rows = open_results(&out)?;
    let by_key: HashMap<RowKey, &ResultRow> = rows.iter().map(|r| (r.key(), r)).collect();
    let plan = Plan::new(cfg)?;
    let users = ordered_test_users(&splits);
    let mut table = Vec::new();
    for (_, ml) in &plan.minimizers {
        for (_, el) in &plan.etas {
            let mut selected = Vec::new();
            let mut subsets = Vec::new();
            for u in &users {
                let key = (splits.users.id(u.user).to_owned(), ml.clone(), el.clone());
                if let Some(row) = by_key.get(&key) {
                    selected.push((*u).clone());
                    subsets.push(row.subset_items(splits.items())?);
                }
            }
            if selected.is_empty() {
                warn!("evaluate: no results for {ml} at eta {el}");
                continue;
            }
            let key = RunKey {
                model: model_name.clone(),
                minimizer: ml.clone(),
                eta: el.clone(),
            };
            for row in evaluate_test(&model, &selected, &subsets, &TestMetric::table_defaults())? {
                table.push(TestRow {
                    key: key.clone(),
                    row,
                });
            }
        }
    }
    let mut text = serde_json::to_string_pretty(&table)?;
    text.push('\n');
    crate::write_atomic(&out.join(TEST_EVAL_FILE), text.as_bytes())
}

/// Builds the report from the artifacts in the output directory.
pub fn build_report(cfg: &RunConfig) -> Result<(RunReport, String)> {
    let out = cfg.out_dir();
    let splits = open_splits(&out)?;
    let rows = open_results(&out)?;
    let manifest = Manifest::open(&out)?;
    let model_name = model_name(&manifest)?;
    let plan = Plan::new(cfg)?;
    let mut groups: Vec<(RunKey, Vec<MinimizationResult>)> = Vec::new();
    let mut scatter_rows: Vec<(usize, &ResultRow)> = Vec::new();
    for (_, ml) in &plan.minimizers {
        for (_, el) in &plan.etas {
            let key = RunKey {
                model: model_name.clone(),
                minimizer: ml.clone(),
                eta: el.clone(),
            };
            let mut results = Vec::new();
            for r in rows.iter().filter(|r| &r.minimizer == ml && &r.eta == el) {
                results.push(r.to_result(splits.items())?);
                scatter_rows.push((groups.len(), r));
            }
            groups.push((key, results));
        }
    }
    if groups.iter().all(|(_, r)| r.is_empty()) {
        bail!("results file holds no rows for the configured minimizers");
    }
    let mut report = RunReport::from_results(&groups, &cfg.strata)?;
    let test_path = out.join(TEST_EVAL_FILE);
    if test_path.is_file() {
        let text = fs::read_to_string(&test_path)?;
        report.test = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", test_path.display()))?;
    }
    report.manifest = manifest.flat();
    report.manifest.remove("model.grid");
    let scatter = mr_vs_history_csv(scatter_rows.iter().map(|(g, r)| ScatterPoint {
        key: &groups[*g].0,
        user: &r.user,
        history_len: r.history_len,
        subset_len: r.subset_len,
    }));
    Ok((report, scatter))
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let (report, scatter) = build_report(cfg)?;
    let dir = cfg.out_dir().join(REPORT_DIR);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let files: [(&str, String); 5] = [
        ("report.txt", report.render_text()),
        ("aggregate.csv", report.aggregate_csv()),
        ("strata.csv", report.strata_csv()),
        ("test.csv", report.test_csv()),
        ("mr_vs_history.csv", scatter),
    ];
    for (name, body) in files {
        crate::write_atomic(&dir.join(name), body.as_bytes())?;
    }
    Ok(())
}
