//! Item-item recommendation models and counted inference.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::InteractionTable;
use crate::error::{Error, Result};
use crate::itemset::ItemSet;

/// Largest item count accepted by the dense EASE fit (n² weights).
pub const MAX_DENSE_ITEMS: usize = 12_000;

const MAGIC: &[u8; 8] = b"MINREC01";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Ease { lambda: f64 },
    ItemKnn { k: usize, similarity: Similarity },
}

impl Hyperparams {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Hyperparams::Ease { .. } => "EASE",
            Hyperparams::ItemKnn { .. } => "ItemKNN",
        }
    }
}

/// Compressed sparse row matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *data.last_mut().expect("previous entry") += v;
                continue;
            }
            indices.push(c);
            data.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.data[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.data[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                dense[r * self.n_cols + c] = v;
            }
        }
        dense
    }
}

/// Item-item weight matrix `B` (n × n).
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    /// Row-major.
    Dense {
        n: usize,
        data: Vec<f64>,
    },
    Sparse(CsrMatrix),
}

impl Weights {
    pub fn n_items(&self) -> usize {
        match self {
            Weights::Dense { n, .. } => *n,
            Weights::Sparse(m) => m.shape().0,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        match self {
            Weights::Dense { n, data } => data[row * n + col],
            Weights::Sparse(m) => m.get(row, col),
        }
    }

    fn add_row_into(&self, row: usize, out: &mut [f64]) {
        match self {
            Weights::Dense { n, data } => {
                for (o, w) in out.iter_mut().zip(&data[row * n..(row + 1) * n]) {
                    *o += w;
                }
            }
            Weights::Sparse(m) => {
                for (c, v) in m.row(row) {
                    out[c] += v;
                }
            }
        }
    }
}

/// A fitted item-item model. Immutable after fitting; share freely.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemModel {
    hyperparams: Hyperparams,
    weights: Weights,
}

/// Per-task inference tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InferenceCounter {
    count: u64,
}

impl InferenceCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    fn tick(&mut self) {
        self.count += 1;
    }

    /// Folds another task's tally into this one.
    pub fn absorb(&mut self, other: InferenceCounter) {
        self.count += other.count;
    }
}

impl std::iter::Sum for InferenceCounter {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut total = InferenceCounter::new();
        for c in iter {
            total.absorb(c);
        }
        total
    }
}

impl ItemModel {
    pub fn from_parts(hyperparams: Hyperparams, weights: Weights) -> Result<Self> {
        let n = weights.n_items();
        let shape_ok = match &weights {
            Weights::Dense { n, data } => data.len() == n * n,
            Weights::Sparse(m) => m.shape() == (n, n),
        };
        if !shape_ok {
            return Err(Error::Format("weight matrix is not square".into()));
        }
        Ok(Self {
            hyperparams,
            weights,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn n_items(&self) -> usize {
        self.weights.n_items()
    }

    /// Scores all items for the input set: `x_I · B`. Rows are summed in
    /// ascending item order, so equal inputs give bitwise-equal scores.
    pub fn infer(&self, input: &ItemSet, counter: &mut InferenceCounter) -> Vec<f64> {
        counter.tick();
        let mut scores = vec![0.0; self.n_items()];
        for item in input.iter() {
            self.weights.add_row_into(item, &mut scores);
        }
        scores
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    /// Binary layout, all integers u64 and floats f64, little-endian:
    /// magic `MINREC01`, kind tag (u8: 0 EASE, 1 ItemKNN), hyperparameters
    /// (EASE: λ; ItemKNN: k then similarity tag u8), rows, cols, then either
    /// the row-major dense payload or `nnz, indptr, indices, data`.
    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        match self.hyperparams {
            Hyperparams::Ease { lambda } => {
                out.write_all(&[0])?;
                out.write_all(&lambda.to_le_bytes())?;
            }
            Hyperparams::ItemKnn { k, similarity } => {
                out.write_all(&[1])?;
                out.write_all(&(k as u64).to_le_bytes())?;
                out.write_all(&[match similarity {
                    Similarity::Cosine => 0,
                }])?;
            }
        }
        let put_u64 = |out: &mut W, v: usize| out.write_all(&(v as u64).to_le_bytes());
        match &self.weights {
            Weights::Dense { n, data } => {
                out.write_all(&[0])?;
                put_u64(out, *n)?;
                put_u64(out, *n)?;
                for v in data {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            Weights::Sparse(m) => {
                out.write_all(&[1])?;
                put_u64(out, m.n_rows)?;
                put_u64(out, m.n_cols)?;
                put_u64(out, m.nnz())?;
                for &p in &m.indptr {
                    put_u64(out, p)?;
                }
                for &i in &m.indices {
                    put_u64(out, i)?;
                }
                for v in &m.data {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut reader = Reader(input);
        let mut magic = [0u8; 8];
        reader.bytes(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let hyperparams = match reader.u8()? {
            0 => Hyperparams::Ease {
                lambda: reader.f64()?,
            },
            1 => {
                let k = reader.usize()?;
                let similarity = match reader.u8()? {
                    0 => Similarity::Cosine,
                    t => return Err(Error::Format(format!("unknown similarity tag {t}"))),
                };
                Hyperparams::ItemKnn { k, similarity }
            }
            t => return Err(Error::Format(format!("unknown model kind tag {t}"))),
        };
        let layout = reader.u8()?;
        let (n_rows, n_cols) = (reader.usize()?, reader.usize()?);
        if n_rows != n_cols {
            return Err(Error::Format(format!("non-square shape {n_rows}x{n_cols}")));
        }
        let weights = match layout {
            0 => {
                let len = n_rows
                    .checked_mul(n_cols)
                    .ok_or_else(|| Error::Format("shape overflow".into()))?;
                let data = (0..len).map(|_| reader.f64()).collect::<Result<_>>()?;
                Weights::Dense { n: n_rows, data }
            }
            1 => {
                let nnz = reader.usize()?;
                let indptr: Vec<usize> = (0..=n_rows)
                    .map(|_| reader.usize())
                    .collect::<Result<_>>()?;
                let indices: Vec<usize> =
                    (0..nnz).map(|_| reader.usize()).collect::<Result<_>>()?;
                let data = (0..nnz).map(|_| reader.f64()).collect::<Result<_>>()?;
                if indptr.last() != Some(&nnz) || indices.iter().any(|&c| c >= n_cols) {
                    return Err(Error::Format("inconsistent CSR payload".into()));
                }
                Weights::Sparse(CsrMatrix {
                    n_rows,
                    n_cols,
                    indptr,
                    indices,
                    data,
                })
            }
            t => return Err(Error::Format(format!("unknown payload layout {t}"))),
        };
        ItemModel::from_parts(hyperparams, weights)
    }
}

struct Reader<'a, R: Read>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.0
            .read_exact(buf)
            .map_err(|e| Error::Format(format!("truncated model: {e}")))
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.bytes(&mut b)?;
        Ok(b[0])
    }

    fn usize(&mut self) -> Result<usize> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Format("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// Item co-occurrence counts `XᵀX` as a dense row-major matrix.
fn gram(train: &InteractionTable) -> Vec<f64> {
    let n = train.n_items();
    let mut g = vec![0.0; n * n];
    for u in 0..train.n_users() {
        let row = train.row(u);
        for &(a, _) in row {
            for &(b, _) in row {
                g[a * n + b] += 1.0;
            }
        }
    }
    g
}

/// EASE: `P = (XᵀX + λI)⁻¹`, `B = I − P·diag(1/diag(P))`, diagonal zeroed.
pub fn fit_ease(train: &InteractionTable, lambda: f64) -> Result<ItemModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "EASE lambda must be > 0, got {lambda}"
        )));
    }
    if train.nnz() == 0 {
        return Err(Error::Empty("EASE needs a nonempty train table".into()));
    }
    let n = train.n_items();
    if n > MAX_DENSE_ITEMS {
        return Err(Error::InvalidParam(format!(
            "EASE is dense; {n} items exceeds the ceiling of {MAX_DENSE_ITEMS}"
        )));
    }
    let mut g = DMatrix::from_row_slice(n, n, &gram(train));
    for i in 0..n {
        g[(i, i)] += lambda;
    }
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Numeric("Cholesky factorization of the Gram matrix failed".into()))?;
    let p = chol.inverse();
    let mut data = vec![0.0; n * n];
    for col in 0..n {
        let pivot = p[(col, col)];
        for row in 0..n {
            if row != col {
                data[row * n + col] = -p[(row, col)] / pivot;
            }
        }
    }
    ItemModel::from_parts(Hyperparams::Ease { lambda }, Weights::Dense { n, data })
}

/// Cosine item-item similarity keeping, for each target item (column),
/// its `k` most similar other items. Ties go to the lower item index;
/// zero similarities are never stored.
pub fn fit_itemknn(
    train: &InteractionTable,
    k: usize,
    similarity: Similarity,
) -> Result<ItemModel> {
    if k == 0 {
        return Err(Error::InvalidParam("ItemKNN needs k >= 1".into()));
    }
    let n = train.n_items();
    let mut item_users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..train.n_users() {
        for &(i, _) in train.row(u) {
            item_users[i].push(u);
        }
    }
    let norms: Vec<f64> = item_users
        .iter()
        .map(|us| (us.len() as f64).sqrt())
        .collect();

    let columns: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0u32; n],
            |co, target| {
                if item_users[target].is_empty() {
                    return Vec::new();
                }
                let mut touched = Vec::new();
                for &u in &item_users[target] {
                    for &(i, _) in train.row(u) {
                        if co[i] == 0 {
                            touched.push(i);
                        }
                        co[i] += 1;
                    }
                }
                let mut sims: Vec<(usize, f64)> = touched
                    .iter()
                    .filter(|&&i| i != target)
                    .map(|&i| {
                        let s = match similarity {
                            Similarity::Cosine => co[i] as f64 / (norms[i] * norms[target]),
                        };
                        (i, s)
                    })
                    .filter(|&(_, s)| s > 0.0)
                    .collect();
                for &i in &touched {
                    co[i] = 0;
                }
                top_k_by_score(&mut sims, k);
                sims
            },
        )
        .collect();

    let triplets = columns
        .into_iter()
        .enumerate()
        .flat_map(|(target, col)| col.into_iter().map(move |(i, s)| (i, target, s)))
        .collect();
    ItemModel::from_parts(
        Hyperparams::ItemKnn { k, similarity },
        Weights::Sparse(CsrMatrix::from_triplets(n, n, triplets)),
    )
}

/// Keeps the `k` best `(index, score)` pairs, highest score first, ties by
/// ascending index.
fn top_k_by_score(entries: &mut Vec<(usize, f64)>, k: usize) {
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if entries.len() > k {
        entries.select_nth_unstable_by(k - 1, cmp);
        entries.truncate(k);
    }
    entries.sort_unstable_by(cmp);
}

/// A (possibly truncated) ranking of items, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    order: Vec<usize>,
    /// 1-based rank per item; 0 for items not in `order`.
    positions: Vec<u32>,
}

impl Ranking {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based rank of `item`, or `None` if it was masked or cut off.
    pub fn position(&self, item: usize) -> Option<usize> {
        match self.positions.get(item) {
            Some(&p) if p > 0 => Some(p as usize),
            _ => None,
        }
    }

    /// Builds from an explicit best-first order over `n_items` items.
    pub fn from_order(order: Vec<usize>, n_items: usize) -> Result<Self> {
        let mut positions = vec![0u32; n_items];
        for (rank, &item) in order.iter().enumerate() {
            match positions.get_mut(item) {
                Some(p) if *p == 0 => *p = rank as u32 + 1,
                _ => return Err(Error::Contract(format!("invalid or repeated item {item}"))),
            }
        }
        Ok(Self { order, positions })
    }
}

fn rank_cmp(scores: &[f64]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Full ranking: masked items removed, the rest by descending score with
/// ties on ascending item index.
pub fn rank(scores: &[f64], masked: &ItemSet) -> Ranking {
    rank_top(scores, masked, scores.len())
}

/// The first `depth` entries of [`rank`], computed by partial selection.
pub fn rank_top(scores: &[f64], masked: &ItemSet, depth: usize) -> Ranking {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).filter(|&i| !masked.contains(i)).collect();
    let cmp = rank_cmp(scores);
    if depth < order.len() {
        if depth == 0 {
            order.clear();
        } else {
            order.select_nth_unstable_by(depth - 1, &cmp);
            order.truncate(depth);
        }
    }
    order.sort_unstable_by(&cmp);
    let mut positions = vec![0u32; n];
    for (r, &item) in order.iter().enumerate() {
        positions[item] = r as u32 + 1;
    }
    Ranking { order, positions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IdMap;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn table(rows: &[Vec<usize>], n_items: usize) -> InteractionTable {
        let users = IdMap::from_ids((0..rows.len()).map(|u| u.to_string()).collect()).unwrap();
        let items = IdMap::from_ids((0..n_items).map(|i| i.to_string()).collect()).unwrap();
        let sets: Vec<ItemSet> = rows.iter().map(|r| r.clone().into()).collect();
        InteractionTable::from_sets(users, items, &sets).unwrap()
    }

    fn random_table(
        r: &mut impl Rng,
        n_users: usize,
        n_items: usize,
        density: f64,
    ) -> InteractionTable {
        let rows: Vec<Vec<usize>> = (0..n_users)
            .map(|_| (0..n_items).filter(|_| r.random_bool(density)).collect())
            .collect();
        table(&rows, n_items)
    }

    /// Gauss-Jordan inverse with partial pivoting, independent of nalgebra.
    fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut inv: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            inv.swap(col, piv);
            let d = a[col][col];
            for j in 0..n {
                a[col][j] /= d;
                inv[col][j] /= d;
            }
            for row in 0..n {
                if row != col {
                    let f = a[row][col];
                    for j in 0..n {
                        a[row][j] -= f * a[col][j];
                        inv[row][j] -= f * inv[col][j];
                    }
                }
            }
        }
        inv
    }

    fn ease_oracle(rows: &[Vec<usize>], n: usize, lambda: f64) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; n]; n];
        for row in rows {
            for &a in row {
                for &b in row {
                    g[a][b] += 1.0;
                }
            }
        }
        for (i, gi) in g.iter_mut().enumerate() {
            gi[i] += lambda;
        }
        let p = invert(g);
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { -p[i][j] / p[j][j] })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn ease_toy_matches_direct_inverse() {
        let rows = vec![vec![0, 1], vec![1, 2]];
        let model = fit_ease(&table(&rows, 3), 1.0).unwrap();
        let oracle = ease_oracle(&rows, 3, 1.0);
        for (i, row) in oracle.iter().enumerate() {
            for (j, &expected) in row.iter().enumerate() {
                assert!((model.weights().get(i, j) - expected).abs() < 1e-9);
            }
        }
        // G = [[2,1,0],[1,3,1],[0,1,2]], P = G⁻¹ = [[5,-2,1],[-2,4,-2],[1,-2,5]]/8;
        // B[0][1] = -P01/P11 = 2/4.
        assert!((model.weights().get(0, 1) - 0.5).abs() < 1e-12);
        assert!((model.weights().get(0, 2) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn ease_diagonal_is_exactly_zero_and_huge_lambda_vanishes() {
        let mut r = rng::stream(5, "test.ease");
        let t = random_table(&mut r, 30, 12, 0.3);
        let m = fit_ease(&t, 10.0).unwrap();
        for i in 0..12 {
            assert_eq!(m.weights().get(i, i), 0.0);
        }
        let m = fit_ease(&t, 1e9).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!(m.weights().get(i, j).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn ease_rejects_bad_lambda() {
        let t = table(&[vec![0, 1]], 2);
        assert!(matches!(fit_ease(&t, 0.0), Err(Error::InvalidParam(_))));
        assert!(matches!(fit_ease(&t, -1.0), Err(Error::InvalidParam(_))));
    }

    fn itemknn_oracle(rows: &[Vec<usize>], n: usize, k: usize) -> Vec<Vec<f64>> {
        let col = |i: usize| -> Vec<f64> {
            rows.iter()
                .map(|r| if r.contains(&i) { 1.0 } else { 0.0 })
                .collect()
        };
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        };
        let cols: Vec<Vec<f64>> = (0..n).map(col).collect();
        let mut b = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut cands: Vec<(usize, f64)> = (0..n)
                .filter(|&i| i != j)
                .map(|i| (i, cos(&cols[i], &cols[j])))
                .filter(|&(_, s)| s > 0.0)
                .collect();
            cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            for &(i, s) in cands.iter().take(k) {
                b[i][j] = s;
            }
        }
        b
    }

    #[test]
    fn itemknn_identical_and_orthogonal_columns() {
        let rows = vec![vec![0, 1], vec![0, 1], vec![2]];
        let m = fit_itemknn(&table(&rows, 3), 2, Similarity::Cosine).unwrap();
        assert!((m.weights().get(0, 1) - 1.0).abs() < 1e-12);
        assert!((m.weights().get(1, 0) - 1.0).abs() < 1e-12);
        assert_eq!(m.weights().get(0, 2), 0.0);
        assert_eq!(m.weights().get(2, 0), 0.0);
    }

    #[test]
    fn itemknn_four_item_fixture_matches_brute_force() {
        let rows = vec![
            vec![0, 1, 2],
            vec![0, 1],
            vec![1, 3],
            vec![2, 3],
            vec![0, 2, 3],
        ];
        let m = fit_itemknn(&table(&rows, 4), 2, Similarity::Cosine).unwrap();
        let oracle = itemknn_oracle(&rows, 4, 2);
        for (i, row) in oracle.iter().enumerate() {
            for (j, &expected) in row.iter().enumerate() {
                assert!(
                    (m.weights().get(i, j) - expected).abs() < 1e-12,
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn itemknn_zero_norm_item_has_no_similarities() {
        let rows = vec![vec![0, 1], vec![1]];
        let m = fit_itemknn(&table(&rows, 3), 5, Similarity::Cosine).unwrap();
        for j in 0..3 {
            assert_eq!(m.weights().get(2, j), 0.0);
            assert_eq!(m.weights().get(j, 2), 0.0);
        }
        assert!(m
            .infer(&vec![2].into(), &mut InferenceCounter::new())
            .iter()
            .all(|s| s.is_finite()));
    }

    #[test]
    fn infer_basics() {
        let rows = vec![vec![0, 1], vec![1, 2], vec![0, 2, 3]];
        let m = fit_ease(&table(&rows, 4), 2.0).unwrap();
        let mut c = InferenceCounter::new();
        assert_eq!(m.infer(&ItemSet::new(), &mut c), vec![0.0; 4]);
        assert_eq!(c.count(), 1);
        let single = m.infer(&vec![2].into(), &mut c);
        for j in 0..4 {
            assert_eq!(single[j], m.weights().get(2, j));
        }
        let a = m.infer(&vec![0, 3].into(), &mut c);
        let b = m.infer(&vec![1].into(), &mut c);
        let ab = m.infer(&vec![0, 1, 3].into(), &mut c);
        for j in 0..4 {
            assert!((ab[j] - (a[j] + b[j])).abs() < 1e-12);
        }
        assert_eq!(ab, m.infer(&vec![0, 1, 3].into(), &mut c));
        assert_eq!(c.count(), 6);
    }

    #[test]
    fn rank_examples() {
        let r = rank(&[0.5, 0.9, 0.1], &ItemSet::new());
        assert_eq!(r.order(), &[1, 0, 2]);
        let r = rank(&[0.3; 4], &ItemSet::new());
        assert_eq!(r.order(), &[0, 1, 2, 3]);
        let r = rank(&[0.5, 0.9, 0.1], &vec![1].into());
        assert_eq!(r.order(), &[0, 2]);
        assert_eq!(
            (r.position(0), r.position(2), r.position(1)),
            (Some(1), Some(2), None)
        );
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let rows = vec![vec![0, 1], vec![1, 2], vec![0, 2, 3]];
        let t = table(&rows, 4);
        for model in [
            fit_ease(&t, 0.7).unwrap(),
            fit_itemknn(&t, 2, Similarity::Cosine).unwrap(),
        ] {
            let mut bytes = Vec::new();
            model.write_to(&mut bytes).unwrap();
            assert_eq!(&bytes[..8], b"MINREC01");
            let back = ItemModel::read_from(&mut bytes.as_slice()).unwrap();
            assert_eq!(back, model);
            let mut again = Vec::new();
            back.write_to(&mut again).unwrap();
            assert_eq!(again, bytes);
        }
    }

    #[test]
    fn corrupt_model_is_rejected() {
        assert!(matches!(
            ItemModel::read_from(&mut &b"NOTMAGIC"[..]),
            Err(Error::Format(_))
        ));
        let t = table(&[vec![0, 1]], 2);
        let mut bytes = Vec::new();
        fit_ease(&t, 1.0).unwrap().write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            ItemModel::read_from(&mut bytes.as_slice()),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn itemknn_matches_oracle(seed in any::<u64>(), n in 2usize..30, k in 1usize..8) {
            let mut r = rng::stream(seed, "test.knn");
            let rows: Vec<Vec<usize>> = (0..25)
                .map(|_| (0..n).filter(|_| r.random_bool(0.25)).collect())
                .collect();
            let m = fit_itemknn(&table(&rows, n), k, Similarity::Cosine).unwrap();
            let oracle = itemknn_oracle(&rows, n, k);
            for j in 0..n {
                let mut nonzeros = 0;
                for i in 0..n {
                    let w = m.weights().get(i, j);
                    prop_assert!((w - oracle[i][j]).abs() < 1e-12);
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&w));
                    nonzeros += (w != 0.0) as usize;
                }
                prop_assert!(nonzeros <= k);
                prop_assert_eq!(m.weights().get(j, j), 0.0);
            }
        }

        #[test]
        fn ranking_positions_invert_order(scores in proptest::collection::vec(-3i32..3, 1..40), mask_bits in any::<u64>()) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let masked: ItemSet = (0..scores.len()).filter(|i| mask_bits >> (i % 64) & 1 == 1).collect();
            let r = rank(&scores, &masked);
            prop_assert_eq!(r.len(), scores.len() - masked.len());
            for (idx, &item) in r.order().iter().enumerate() {
                prop_assert_eq!(r.position(item), Some(idx + 1));
            }
            for w in r.order().windows(2) {
                prop_assert!(scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]));
            }
            for depth in [0, 1, 3, scores.len()] {
                let top = rank_top(&scores, &masked, depth);
                let expect = &r.order()[..depth.min(r.len())];
                prop_assert_eq!(top.order(), expect);
            }
        }
    }
}
