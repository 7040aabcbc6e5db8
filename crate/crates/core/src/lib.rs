//! Inference-data minimization for item-based implicit-feedback recommenders.
//!
//! Given a trained model and a user's interaction history, the minimizers
//! search for the smallest input subset whose recommendations keep a target
//! share of the full-history ranking quality.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod groundtruth;
pub mod itemset;
pub mod metrics;
pub mod minimizers;
pub mod models;
pub mod rng;
pub mod synthetic;

pub use data::{
    binarize, filter_activity, load_interactions, load_splits, save_splits,
    split_strong_generalization, ColumnSchema, IdMap, InteractionTable, SplitSpec, Splits,
    UserSplit,
};
pub use error::{Error, Result};
pub use evaluation::{
    evaluate_test, minimization_ratio, mr_vs_history_csv, sample_efficiency_summary, stratify,
    RunKey, RunReport, ScatterPoint, StratumSpec, TestMetric, TestMetricRow, TestRow,
};
pub use groundtruth::{
    estimate_holdout, estimate_output, tune_estimator, EstimatorParams, ProbeSpec, TuneOutcome,
};
pub use itemset::ItemSet;
pub use metrics::{ndcg_at_k, prr, recall_at_k, MetricSpec, RelevanceMap, RewardFunction};
pub use minimizers::{MinimizationProblem, MinimizationResult, Minimizer, FEASIBILITY_TOLERANCE};
pub use models::{
    fit_ease, fit_itemknn, rank, rank_top, Hyperparams, InferenceCounter, ItemModel, Ranking,
    Similarity,
};
