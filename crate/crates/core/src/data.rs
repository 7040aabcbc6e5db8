//! Interaction ingestion, preprocessing and strong-generalization splits.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::rng;

/// Dense index assignment for external string identifiers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut map = IdMap::new();
        for id in ids {
            if map.index.contains_key(&id) {
                return Err(Error::Schema(format!("duplicate identifier {id:?}")));
            }
            map.get_or_insert(&id);
        }
        Ok(map)
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), idx);
        idx
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn retain(&self, keep: &[bool]) -> (IdMap, Vec<Option<usize>>) {
        let mut map = IdMap::new();
        let remap = self
            .ids
            .iter()
            .zip(keep)
            .map(|(id, &k)| k.then(|| map.get_or_insert(id)))
            .collect();
        (map, remap)
    }
}

/// Sparse user × item interaction data.
///
/// Right after loading, rows hold raw values in file order (duplicates
/// included). After [`binarize`] every stored value is exactly 1, rows are
/// sorted by item and free of duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionTable {
    users: IdMap,
    items: IdMap,
    rows: Vec<Vec<(usize, f64)>>,
}

impl InteractionTable {
    pub fn new(users: IdMap, items: IdMap, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != users.len() {
            return Err(Error::Contract(format!(
                "{} rows for {} users",
                rows.len(),
                users.len()
            )));
        }
        if rows.iter().flatten().any(|&(item, _)| item >= items.len()) {
            return Err(Error::Contract("item index out of range".into()));
        }
        Ok(Self { users, items, rows })
    }

    /// Builds a binary table from per-user item sets.
    pub fn from_sets(users: IdMap, items: IdMap, sets: &[ItemSet]) -> Result<Self> {
        let rows = sets
            .iter()
            .map(|s| s.iter().map(|i| (i, 1.0)).collect())
            .collect();
        Self::new(users, items, rows)
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, user: usize) -> &[(usize, f64)] {
        &self.rows[user]
    }

    /// The user's history as an item set (values ignored).
    pub fn history(&self, user: usize) -> ItemSet {
        self.rows[user].iter().map(|&(i, _)| i).collect()
    }

    pub fn histories(&self) -> Vec<ItemSet> {
        (0..self.n_users()).map(|u| self.history(u)).collect()
    }

    pub fn is_binary(&self) -> bool {
        self.rows.iter().all(|row| {
            row.iter().all(|&(_, v)| v == 1.0) && row.windows(2).all(|w| w[0].0 < w[1].0)
        })
    }

    /// Number of stored entries per item column.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for &(item, _) in self.rows.iter().flatten() {
            counts[item] += 1;
        }
        counts
    }

    /// Drops empty rows and columns and renumbers both id maps, keeping
    /// relative order.
    fn compact(&self) -> InteractionTable {
        let keep_users: Vec<bool> = self.rows.iter().map(|r| !r.is_empty()).collect();
        let keep_items: Vec<bool> = self.item_counts().iter().map(|&c| c > 0).collect();
        let (users, _) = self.users.retain(&keep_users);
        let (items, item_remap) = self.items.retain(&keep_items);
        let rows = self
            .rows
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| {
                r.iter()
                    .map(|&(i, v)| (item_remap[i].expect("nonempty column"), v))
                    .collect()
            })
            .collect();
        InteractionTable { users, items, rows }
    }
}

/// Column names for [`load_interactions`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub user: String,
    pub item: String,
    pub value: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            user: "user".into(),
            item: "item".into(),
            value: "value".into(),
        }
    }
}

/// Reads a delimited interaction log. The delimiter (tab or comma) is
/// detected from the header line; ids are assigned by first appearance.
pub fn load_interactions(path: &Path, schema: &ColumnSchema) -> Result<InteractionTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(path, e))?;
    if header.trim().is_empty() {
        return Err(Error::Schema(format!(
            "{} has no header line",
            path.display()
        )));
    }
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = csv
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in {}", path.display())))
    };
    let (user_col, item_col, value_col) = (
        column(&schema.user)?,
        column(&schema.item)?,
        column(&schema.value)?,
    );

    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize| {
            record
                .get(col)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing field {col}"),
                })
        };
        let user = field(user_col)?;
        let item = field(item_col)?;
        let value: f64 = field(value_col)?.parse().map_err(|_| Error::Parse {
            line,
            message: format!(
                "unparseable value {:?}",
                record.get(value_col).unwrap_or("")
            ),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite value {value}"),
            });
        }
        let u = users.get_or_insert(user);
        let i = items.get_or_insert(item);
        if u == rows.len() {
            rows.push(Vec::new());
        }
        rows[u].push((i, value));
    }
    InteractionTable::new(users, items, rows)
}

/// Keeps entries with `value >= positive_threshold` as 1, deduplicates
/// pairs and drops rows/columns left empty.
pub fn binarize(table: &InteractionTable, positive_threshold: f64) -> InteractionTable {
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mut kept: Vec<usize> = row
                .iter()
                .filter(|&&(_, v)| v >= positive_threshold)
                .map(|&(i, _)| i)
                .collect();
            kept.sort_unstable();
            kept.dedup();
            kept.into_iter().map(|i| (i, 1.0)).collect()
        })
        .collect();
    InteractionTable {
        users: table.users.clone(),
        items: table.items.clone(),
        rows,
    }
    .compact()
}

/// Alternates the item filter and the user filter until neither removes
/// anything, then recompacts the id maps. `(0, 0)` is the identity.
pub fn filter_activity(
    table: &InteractionTable,
    min_user_interactions: usize,
    min_item_interactions: usize,
) -> InteractionTable {
    if min_user_interactions == 0 && min_item_interactions == 0 {
        return table.clone();
    }
    let mut rows = table.rows.clone();
    let mut alive_users = vec![true; rows.len()];
    loop {
        let mut counts = vec![0usize; table.n_items()];
        for (row, _) in rows.iter().zip(&alive_users).filter(|(_, &a)| a) {
            for &(i, _) in row {
                counts[i] += 1;
            }
        }
        let mut changed = false;
        for (row, _) in rows.iter_mut().zip(&alive_users).filter(|(_, &a)| a) {
            let before = row.len();
            row.retain(|&(i, _)| counts[i] >= min_item_interactions);
            changed |= row.len() != before;
        }
        for (row, alive) in rows.iter_mut().zip(alive_users.iter_mut()) {
            if *alive && row.len() < min_user_interactions {
                *alive = false;
                row.clear();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    InteractionTable {
        users: table.users.clone(),
        items: table.items.clone(),
        rows,
    }
    .compact()
}

/// Sizes of the held-out segments of a strong-generalization split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_val_rec_users: usize,
    pub n_val_est_users: usize,
    pub n_test_users: usize,
    #[serde(default = "default_fold_in_ratio")]
    pub fold_in_ratio: f64,
    pub seed: u64,
}

fn default_fold_in_ratio() -> f64 {
    0.8
}

impl SplitSpec {
    pub fn held_out_users(&self) -> usize {
        self.n_val_rec_users + self.n_val_est_users + self.n_test_users
    }
}

/// One evaluation user's history partition. `user` indexes the id map of
/// the table the split was drawn from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user: usize,
    pub fold_in: ItemSet,
    pub hold_out: ItemSet,
}

impl UserSplit {
    pub fn full_history(&self) -> ItemSet {
        self.fold_in.union(&self.hold_out)
    }
}

/// Train table plus the three evaluation segments.
///
/// `train` shares the item id map of the source table (items seen only by
/// held-out users keep their index and simply have an empty column).
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub users: IdMap,
    pub train: InteractionTable,
    pub val_rec: Vec<UserSplit>,
    pub val_est: Vec<UserSplit>,
    pub test: Vec<UserSplit>,
}

impl Splits {
    pub fn items(&self) -> &IdMap {
        self.train.items()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }
}

/// Fold-in size used for a history of `len` items.
pub fn fold_in_size(len: usize, ratio: f64) -> usize {
    ((ratio * len as f64).floor() as usize).max(1)
}

/// Strong-generalization split: evaluation users are drawn without
/// replacement from users with at least two interactions; every other user
/// goes to train.
pub fn split_strong_generalization(table: &InteractionTable, spec: &SplitSpec) -> Result<Splits> {
    if !(spec.fold_in_ratio > 0.0 && spec.fold_in_ratio < 1.0) {
        return Err(Error::InvalidParam(format!(
            "fold_in_ratio {} outside (0, 1)",
            spec.fold_in_ratio
        )));
    }
    let held = spec.held_out_users();
    if held > 0 && held >= table.n_users() {
        return Err(Error::Split(format!(
            "{held} held-out users requested but the table has only {} users",
            table.n_users()
        )));
    }
    let mut eligible: Vec<usize> = (0..table.n_users())
        .filter(|&u| table.row(u).len() >= 2)
        .collect();
    if eligible.len() < held {
        return Err(Error::Split(format!(
            "{held} held-out users requested but only {} users have at least 2 interactions",
            eligible.len()
        )));
    }
    let mut user_rng = rng::stream(spec.seed, "split.users");
    eligible.shuffle(&mut user_rng);

    let mut segment = vec![Segment::Train; table.n_users()];
    let bounds = [
        (Segment::ValRec, spec.n_val_rec_users),
        (Segment::ValEst, spec.n_val_est_users),
        (Segment::Test, spec.n_test_users),
    ];
    let mut drawn = eligible.into_iter();
    for (seg, count) in bounds {
        for u in drawn.by_ref().take(count) {
            segment[u] = seg;
        }
    }

    let mut train_users = IdMap::new();
    let mut train_rows = Vec::new();
    let (mut val_rec, mut val_est, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, &seg) in segment.iter().enumerate() {
        let history = table.history(u);
        match seg {
            Segment::Train => {
                train_users.get_or_insert(table.users().id(u));
                train_rows.push(history.iter().map(|i| (i, 1.0)).collect());
            }
            seg => {
                let split = split_user(u, &history, spec);
                match seg {
                    Segment::ValRec => val_rec.push(split),
                    Segment::ValEst => val_est.push(split),
                    _ => test.push(split),
                }
            }
        }
    }
    Ok(Splits {
        users: table.users().clone(),
        train: InteractionTable::new(train_users, table.items().clone(), train_rows)?,
        val_rec,
        val_est,
        test,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Segment {
    Train,
    ValRec,
    ValEst,
    Test,
}

fn split_user(user: usize, history: &ItemSet, spec: &SplitSpec) -> UserSplit {
    let mut items: Vec<usize> = history.iter().collect();
    let mut fold_rng = rng::stream(spec.seed, &format!("split.folds.{user}"));
    items.shuffle(&mut fold_rng);
    let cut = fold_in_size(items.len(), spec.fold_in_ratio);
    UserSplit {
        user,
        fold_in: items[..cut].iter().copied().collect(),
        hold_out: items[cut..].iter().copied().collect(),
    }
}

const USERS_FILE: &str = "users.txt";
const ITEMS_FILE: &str = "items.txt";
const TRAIN_FILE: &str = "train.tsv";
const SEGMENT_FILES: [&str; 3] = ["val_rec.tsv", "val_est.tsv", "test.tsv"];

/// Writes the splits as a directory of plain-text files.
///
/// Segment files hold one user per line:
/// `user_id<TAB>fold_in_items<TAB>hold_out_items`, item ids comma-separated.
pub fn save_splits(dir: &Path, splits: &Splits) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_lines(&dir.join(USERS_FILE), splits.users.ids().iter().cloned())?;
    write_lines(&dir.join(ITEMS_FILE), splits.items().ids().iter().cloned())?;
    let items = splits.items();
    let train = &splits.train;
    write_lines(
        &dir.join(TRAIN_FILE),
        (0..train.n_users()).flat_map(|u| {
            let user = train.users().id(u).to_owned();
            train
                .row(u)
                .iter()
                .map(move |&(i, _)| format!("{user}\t{}", items.id(i)))
                .collect::<Vec<_>>()
        }),
    )?;
    let join = |set: &ItemSet| {
        set.iter()
            .map(|i| items.id(i))
            .collect::<Vec<_>>()
            .join(",")
    };
    for (name, segment) in
        SEGMENT_FILES
            .iter()
            .zip([&splits.val_rec, &splits.val_est, &splits.test])
    {
        write_lines(
            &dir.join(name),
            segment.iter().map(|s| {
                format!(
                    "{}\t{}\t{}",
                    splits.users.id(s.user),
                    join(&s.fold_in),
                    join(&s.hold_out)
                )
            }),
        )?;
    }
    Ok(())
}

/// Reads a directory written by [`save_splits`].
pub fn load_splits(dir: &Path) -> Result<Splits> {
    let users = IdMap::from_ids(read_lines(&dir.join(USERS_FILE))?)?;
    let items = IdMap::from_ids(read_lines(&dir.join(ITEMS_FILE))?)?;
    let lookup = |map: &IdMap, id: &str, line: usize| {
        map.index_of(id).ok_or_else(|| Error::Parse {
            line: line as u64 + 1,
            message: format!("unknown identifier {id:?}"),
        })
    };

    let mut train_users = IdMap::new();
    let mut train_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for (n, line) in read_lines(&dir.join(TRAIN_FILE))?.iter().enumerate() {
        let (user, item) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: n as u64 + 1,
            message: "expected user<TAB>item".into(),
        })?;
        let u = train_users.get_or_insert(user);
        if u == train_rows.len() {
            train_rows.push(Vec::new());
        }
        train_rows[u].push((lookup(&items, item, n)?, 1.0));
    }
    for row in &mut train_rows {
        row.sort_unstable_by_key(|&(i, _)| i);
    }

    let mut segments = Vec::new();
    for name in SEGMENT_FILES {
        let mut segment = Vec::new();
        for (n, line) in read_lines(&dir.join(name))?.iter().enumerate() {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: n as u64 + 1,
                    message: format!("{name}: expected 3 tab-separated fields"),
                });
            }
            let parse_set = |field: &str| -> Result<ItemSet> {
                field
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|id| lookup(&items, id, n))
                    .collect()
            };
            segment.push(UserSplit {
                user: lookup(&users, parts[0], n)?,
                fold_in: parse_set(parts[1])?,
                hold_out: parse_set(parts[2])?,
            });
        }
        segments.push(segment);
    }
    let test = segments.pop().unwrap_or_default();
    let val_est = segments.pop().unwrap_or_default();
    let val_rec = segments.pop().unwrap_or_default();
    Ok(Splits {
        users,
        train: InteractionTable::new(train_users, items, train_rows)?,
        val_rec,
        val_est,
        test,
    })
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}
