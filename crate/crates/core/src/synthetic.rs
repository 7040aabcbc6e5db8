//! Latent-topic rating generator for fixtures and benchmarks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{IdMap, InteractionTable};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_topics: usize,
    /// Minimum number of ratings per user.
    pub min_history: usize,
    /// Mean of the extra (exponential) part of a user's history length.
    pub mean_extra_history: f64,
    /// Share of interactions drawn from the global popularity distribution.
    pub noise: f64,
    /// Zipf exponent of item popularity inside each topic.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 300,
            n_topics: 8,
            min_history: 6,
            mean_extra_history: 25.0,
            noise: 0.15,
            zipf: 0.9,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Roughly the size and sparsity of a small public movie-rating log.
    pub fn movielens_like(seed: u64) -> Self {
        Self {
            n_users: 610,
            n_items: 2000,
            n_topics: 20,
            min_history: 20,
            mean_extra_history: 80.0,
            noise: 0.2,
            zipf: 1.0,
            seed,
        }
    }
}

/// Draws a rating table (values 1..=5, half-star steps) with ids `u<n>` and
/// `i<n>`. On-topic items tend to get high ratings, off-topic ones low.
pub fn generate_ratings(spec: &SyntheticSpec) -> Result<InteractionTable> {
    if spec.n_users == 0 || spec.n_items == 0 || spec.n_topics == 0 || spec.n_topics > spec.n_items
    {
        return Err(Error::InvalidParam(format!(
            "invalid synthetic spec {spec:?}"
        )));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(Error::InvalidParam(format!(
            "noise {} outside [0, 1]",
            spec.noise
        )));
    }
    let mut rng = stream(spec.seed, "synthetic.ratings");
    let topic_of = |item: usize| item % spec.n_topics;
    let by_topic: Vec<Vec<usize>> = (0..spec.n_topics)
        .map(|t| (0..spec.n_items).filter(|&i| topic_of(i) == t).collect())
        .collect();
    let zipf_cdf = |n: usize| {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=n)
            .map(|r| {
                acc += (r as f64).powf(-spec.zipf);
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        cdf
    };
    let topic_cdfs: Vec<Vec<f64>> = by_topic.iter().map(|items| zipf_cdf(items.len())).collect();
    let global_cdf = zipf_cdf(spec.n_items);
    let draw = |cdf: &[f64], rng: &mut crate::rng::StreamRng| {
        let u: f64 = rng.random();
        cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
    };

    let users = IdMap::from_ids((0..spec.n_users).map(|u| format!("u{u}")).collect())?;
    let items = IdMap::from_ids((0..spec.n_items).map(|i| format!("i{i}")).collect())?;
    let max_len = spec.n_items / 2;
    let mut rows = Vec::with_capacity(spec.n_users);
    for _ in 0..spec.n_users {
        let topic = rng.random_range(0..spec.n_topics);
        let second = rng.random_range(0..spec.n_topics);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let extra = (-u.ln() * spec.mean_extra_history).floor() as usize;
        let target = (spec.min_history + extra).clamp(1, max_len.max(1));
        let mut seen = vec![false; spec.n_items];
        let mut row = Vec::with_capacity(target);
        let mut attempts = 0;
        while row.len() < target && attempts < target * 50 {
            attempts += 1;
            let off_topic = rng.random_bool(spec.noise);
            let item = if off_topic {
                draw(&global_cdf, &mut rng)
            } else {
                let t = if rng.random_bool(0.75) { topic } else { second };
                by_topic[t][draw(&topic_cdfs[t], &mut rng)]
            };
            if seen[item] {
                continue;
            }
            seen[item] = true;
            let on = topic_of(item) == topic || topic_of(item) == second;
            let half_stars: u32 = if on {
                rng.random_range(7..=10)
            } else {
                rng.random_range(2..=8)
            };
            row.push((item, half_stars as f64 / 2.0));
        }
        rows.push(row);
    }
    InteractionTable::new(users, items, rows)
}

/// Writes `user,item,rating` CSV with a header line.
pub fn write_ratings_csv(table: &InteractionTable, path: &Path) -> Result<()> {
    let mut out = String::from("user,item,rating\n");
    for u in 0..table.n_users() {
        for &(item, value) in table.row(u) {
            let _ = writeln!(
                out,
                "{},{},{}",
                table.users().id(u),
                table.items().id(item),
                value
            );
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{binarize, load_interactions, ColumnSchema};

    #[test]
    fn deterministic_and_bounded() {
        let spec = SyntheticSpec::default();
        let a = generate_ratings(&spec).unwrap();
        let b = generate_ratings(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_users(), spec.n_users);
        for u in 0..a.n_users() {
            let row = a.row(u);
            assert!(!row.is_empty() && row.len() <= spec.n_items / 2);
            assert!(row.iter().all(|&(_, v)| (1.0..=5.0).contains(&v)));
        }
        let c = generate_ratings(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip() {
        let table = generate_ratings(&SyntheticSpec {
            n_users: 20,
            n_items: 40,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_ratings_csv(&table, &path).unwrap();
        let schema = ColumnSchema {
            value: "rating".into(),
            ..Default::default()
        };
        let loaded = load_interactions(&path, &schema).unwrap();
        assert_eq!(loaded.nnz(), table.nnz());
        assert_eq!(binarize(&loaded, 4.0).nnz(), binarize(&table, 4.0).nnz());
    }
}
