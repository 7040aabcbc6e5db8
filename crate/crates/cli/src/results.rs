//! Per-user result rows (`results.csv`).

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use minrec::{IdMap, ItemSet, MinimizationResult};
use serde::{Deserialize, Serialize};

pub const RESULTS_FILE: &str = "results.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub user: String,
    pub minimizer: String,
    pub eta: String,
    pub history_len: usize,
    pub subset_len: usize,
    pub se: u64,
    pub metric_full: f64,
    pub metric_min: f64,
    pub prr: f64,
    pub feasible: bool,
    /// External item ids, space separated, in item-index order.
    pub subset: String,
}

pub type RowKey = (String, String, String);

impl ResultRow {
    pub fn from_result(
        user: &str,
        minimizer: &str,
        eta: &str,
        r: &MinimizationResult,
        items: &IdMap,
    ) -> Self {
        Self {
            user: user.to_owned(),
            minimizer: minimizer.to_owned(),
            eta: eta.to_owned(),
            history_len: r.history_len,
            subset_len: r.subset.len(),
            se: r.se,
            metric_full: r.metric_full,
            metric_min: r.metric_min,
            prr: r.prr,
            feasible: r.feasible,
            subset: r
                .subset
                .iter()
                .map(|i| items.id(i))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    pub fn key(&self) -> RowKey {
        (self.user.clone(), self.minimizer.clone(), self.eta.clone())
    }

    pub fn subset_items(&self, items: &IdMap) -> Result<ItemSet> {
        let set: ItemSet = self
            .subset
            .split_whitespace()
            .map(|id| {
                items.index_of(id).with_context(|| {
                    format!("unknown item {id:?} in results for user {}", self.user)
                })
            })
            .collect::<Result<_>>()?;
        if set.len() != self.subset_len {
            bail!("subset length mismatch for user {}", self.user);
        }
        Ok(set)
    }

    pub fn to_result(&self, items: &IdMap) -> Result<MinimizationResult> {
        Ok(MinimizationResult {
            subset: self.subset_items(items)?,
            history_len: self.history_len,
            se: self.se,
            metric_full: self.metric_full,
            metric_min: self.metric_min,
            prr: self.prr,
            feasible: self.feasible,
        })
    }
}

/// Reads every complete row. A trailing partial line (an interrupted
/// write) and anything after the first malformed record are ignored.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let end = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let mut reader = csv::Reader::from_reader(&bytes[..end]);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        match record {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!(
                    "{}: ignoring rows from a malformed record on: {e}",
                    path.display()
                );
                break;
            }
        }
    }
    Ok(rows)
}

/// Appends rows to an open results file.
pub struct RowWriter {
    file: fs::File,
}

impl RowWriter {
    /// Opens `path` for appending, writing the header if the file is new.
    pub fn append(path: &Path) -> Result<Self> {
        let exists = path.exists() && fs::metadata(path)?.len() > 0;
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        if !exists {
            file.write_all(&encode(&[], true)?)?;
        }
        Ok(Self { file })
    }

    /// Writes a block of rows with a single write and syncs it.
    pub fn write_block(&mut self, rows: &[ResultRow]) -> Result<()> {
        self.file.write_all(&encode(rows, false)?)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Rewrites `path` with exactly `rows` (temp file + rename).
pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    crate::write_atomic(path, &encode(rows, true)?)
}

fn encode(rows: &[ResultRow], header: bool) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(Vec::new());
    if header && rows.is_empty() {
        w.write_record([
            "user",
            "minimizer",
            "eta",
            "history_len",
            "subset_len",
            "se",
            "metric_full",
            "metric_min",
            "prr",
            "feasible",
            "subset",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}
