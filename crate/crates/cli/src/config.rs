//! Run configuration loaded from a TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use minrec::{ColumnSchema, EstimatorParams, MetricSpec, Minimizer, SplitSpec, StratumSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory. Not part of the config hash.
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub minimize: MinimizeConfig,
    #[serde(default)]
    pub strata: StratumSpec,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ColumnSchema,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub positive_threshold: f64,
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            positive_threshold: 1.0,
            min_user_interactions: 0,
            min_item_interactions: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub n_val_rec_users: usize,
    pub n_val_est_users: usize,
    pub n_test_users: usize,
    #[serde(default = "default_fold_in_ratio")]
    pub fold_in_ratio: f64,
}

fn default_fold_in_ratio() -> f64 {
    0.8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ease,
    ItemKnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// EASE regularization grid.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// ItemKNN neighbourhood-size grid.
    #[serde(default = "default_neighbors")]
    pub neighbors: Vec<usize>,
}

fn default_lambdas() -> Vec<f64> {
    vec![10.0, 100.0, 500.0, 1000.0]
}

fn default_neighbors() -> Vec<usize> {
    vec![20, 50, 100, 200]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub k: Vec<usize>,
    pub gamma: Vec<f64>,
    pub n_probes: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k: vec![50, 100, 200, 500, 1000],
            gamma: vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0],
            n_probes: 20,
        }
    }
}

impl EstimatorConfig {
    pub fn grid(&self) -> Result<Vec<EstimatorParams>> {
        let mut grid = Vec::with_capacity(self.k.len() * self.gamma.len());
        for &k in &self.k {
            for &g in &self.gamma {
                grid.push(EstimatorParams::new(k, g)?);
            }
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    /// Registry names such as `GR`, `GBFS(L=5)` or `RS(seed=3)`.
    pub minimizers: Vec<String>,
    pub etas: Vec<f64>,
    #[serde(default)]
    pub metric: MetricSpec,
}

impl RunConfig {
    /// Parses a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.resolve(&self.dataset.path)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            n_val_rec_users: self.split.n_val_rec_users,
            n_val_est_users: self.split.n_val_est_users,
            n_test_users: self.split.n_test_users,
            fold_in_ratio: self.split.fold_in_ratio,
            seed: self.seed,
        }
    }

    /// Parsed minimizers with their result labels. A bare `RS` draws from
    /// the master seed; an explicit seed shows up in the label.
    pub fn minimizers(&self) -> Result<Vec<(Minimizer, String)>> {
        self.minimize
            .minimizers
            .iter()
            .map(|name| {
                let m: Minimizer = name.parse()?;
                Ok(match m {
                    Minimizer::Rs { .. } if !name.contains('(') => {
                        (Minimizer::Rs { seed: self.seed }, m.to_string())
                    }
                    Minimizer::Rs { seed } => (m, format!("RS(seed={seed})")),
                    other => (other, other.to_string()),
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let data = self.dataset_path();
        if !data.is_file() {
            bail!("dataset {} does not exist", data.display());
        }
        if self.minimize.minimizers.is_empty() {
            bail!("minimizer list is empty");
        }
        let parsed = self.minimizers()?;
        let mut labels: Vec<&String> = parsed.iter().map(|(_, l)| l).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != parsed.len() {
            bail!("minimizer list contains duplicates");
        }
        if self.minimize.etas.is_empty() {
            bail!("eta list is empty");
        }
        if let Some(eta) = self
            .minimize
            .etas
            .iter()
            .find(|e| !(0.0..=1.0).contains(*e))
        {
            bail!("eta {eta} outside [0, 1]");
        }
        match self.model.kind {
            ModelKind::Ease if self.model.lambdas.is_empty() => bail!("empty lambda grid"),
            ModelKind::ItemKnn if self.model.neighbors.is_empty() => bail!("empty neighbors grid"),
            _ => {}
        }
        self.estimator.grid()?;
        if self.estimator.n_probes == 0 {
            bail!("n_probes must be positive");
        }
        if self.strata.n_bins == 0
            || !(self.strata.percentile_cap > 0.0 && self.strata.percentile_cap <= 100.0)
        {
            bail!("invalid strata settings");
        }
        Ok(())
    }

    /// Canonical TOML of everything that determines results.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        toml::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Formats η the way it appears in result keys (`0.98`, `1.0`).
pub fn eta_label(eta: f64) -> String {
    if eta.fract() == 0.0 {
        format!("{eta:.1}")
    } else {
        format!("{eta}")
    }
}
