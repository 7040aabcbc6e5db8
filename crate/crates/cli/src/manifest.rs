//! `manifest.json`: flat, sorted key/value record of a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    path: PathBuf,
    entries: BTreeMap<String, Value>,
}

impl Manifest {
    /// Empty manifest bound to `out_dir`.
    pub fn fresh(out_dir: &Path) -> Self {
        Self {
            path: out_dir.join(MANIFEST_FILE),
            entries: BTreeMap::new(),
        }
    }

    /// Reads the manifest in `out_dir`, or starts an empty one.
    pub fn open(out_dir: &Path) -> Result<Self> {
        let mut m = Self::fresh(out_dir);
        if m.path.exists() {
            let text = fs::read_to_string(&m.path)
                .with_context(|| format!("reading {}", m.path.display()))?;
            m.entries = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", m.path.display()))?;
        }
        Ok(m)
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.entries.insert(key.to_owned(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    /// Drops every key starting with `prefix`.
    pub fn clear_prefix(&mut self, prefix: &str) {
        self.entries.retain(|k, _| !k.starts_with(prefix));
    }

    pub fn entries(&self) -> &BTreeMap<String, Value> {
        &self.entries
    }

    /// Values rendered as plain strings (no JSON quoting for strings).
    pub fn flat(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect()
    }

    pub fn save(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.entries)?;
        text.push('\n');
        crate::write_atomic(&self.path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::fresh(dir.path());
        m.set("z", 1);
        m.set("a", "x");
        m.set("estimator.gamma", -0.5);
        m.save().unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(text.find("\"a\"").unwrap() < text.find("\"z\"").unwrap());
        let back = Manifest::open(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.flat()["a"], "x");
        assert_eq!(back.flat()["estimator.gamma"], "-0.5");
        let mut cleared = back.clone();
        cleared.clear_prefix("estimator.");
        assert!(cleared.get("estimator.gamma").is_none());
    }
}
