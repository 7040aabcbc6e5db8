//! Shared fixtures for the criterion benchmarks.

use minrec::groundtruth::estimate_output;
use minrec::synthetic::{generate_ratings, SyntheticSpec};
use minrec::{
    binarize, fit_ease, fit_itemknn, EstimatorParams, InferenceCounter, InteractionTable,
    ItemModel, ItemSet, MetricSpec, MinimizationProblem, RelevanceMap, Similarity,
};

pub struct BenchFixture {
    pub train: InteractionTable,
    pub ease: ItemModel,
    pub knn: ItemModel,
}

impl BenchFixture {
    pub fn new(n_users: usize, n_items: usize) -> Self {
        let spec = SyntheticSpec {
            n_users,
            n_items,
            n_topics: 10,
            min_history: 10,
            mean_extra_history: 30.0,
            ..SyntheticSpec::default()
        };
        let train = binarize(&generate_ratings(&spec).expect("valid spec"), 1.0);
        let ease = fit_ease(&train, 100.0).expect("EASE fit");
        let knn = fit_itemknn(&train, 50, Similarity::Cosine).expect("ItemKNN fit");
        Self { train, ease, knn }
    }

    /// History of the first user with at least `min_len` items, cut to `max_len`.
    pub fn history(&self, min_len: usize, max_len: usize) -> ItemSet {
        self.train
            .histories()
            .into_iter()
            .find(|h| h.len() >= min_len)
            .map(|h| h.iter().take(max_len).collect())
            .expect("a long enough history")
    }

    pub fn relevance(&self, model: &ItemModel, history: &ItemSet) -> RelevanceMap {
        let params = EstimatorParams::new(100, 0.5).expect("valid params");
        estimate_output(model, history, &params, &mut InferenceCounter::new()).expect("relevance")
    }

    pub fn problem<'a>(
        &self,
        model: &'a ItemModel,
        history: &ItemSet,
        eta: f64,
    ) -> MinimizationProblem<'a> {
        let relevance = self.relevance(model, history);
        MinimizationProblem::new(
            model,
            history.clone(),
            relevance,
            MetricSpec::default(),
            eta,
        )
        .expect("problem")
    }
}
