//! Config-driven pipeline around the `minrec` library: prepare, fit,
//! tune-gt, minimize, evaluate and report.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod results;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub use config::RunConfig;
pub use pipeline::{run_all, run_stage, Stage, StageError};

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "MINREC_WORKERS";

/// Loads a config and applies command-line overrides.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        // relative to the working directory, like any other CLI path
        cfg.out =
            std::path::absolute(&out).with_context(|| format!("resolving {}", out.display()))?;
    }
    Ok(cfg)
}

/// Worker count from the environment, or rayon's default when unset.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV}={v:?} is not a count"))?;
            Ok((n > 0).then_some(n))
        }
        Err(_) => Ok(None),
    }
}

/// Runs `f` inside a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?.install(f))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}
