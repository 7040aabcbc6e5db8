use std::fmt;

use serde::{Deserialize, Serialize};

/// A set of item indices, stored sorted and without duplicates.
///
/// Ordering is lexicographic over the sorted members, which is the
/// tie-breaking order used by the beam search.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemSet(Vec<usize>);

impl ItemSet {
    pub fn new() -> Self {
        ItemSet(Vec::new())
    }

    pub fn from_sorted_unchecked(items: Vec<usize>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        ItemSet(items)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.0.binary_search(&item).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn max_item(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn insert(&mut self, item: usize) -> bool {
        match self.0.binary_search(&item) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, item);
                true
            }
        }
    }

    pub fn remove(&mut self, item: usize) -> bool {
        match self.0.binary_search(&item) {
            Ok(pos) => {
                self.0.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn with(&self, item: usize) -> ItemSet {
        let mut out = self.clone();
        out.insert(item);
        out
    }

    pub fn without(&self, item: usize) -> ItemSet {
        let mut out = self.clone();
        out.remove(item);
        out
    }

    pub fn is_subset(&self, other: &ItemSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn is_disjoint(&self, other: &ItemSet) -> bool {
        self.iter().all(|i| !other.contains(i))
    }

    pub fn union(&self, other: &ItemSet) -> ItemSet {
        self.iter().chain(other.iter()).collect()
    }

    pub fn difference(&self, other: &ItemSet) -> ItemSet {
        self.iter().filter(|&i| !other.contains(i)).collect()
    }

    /// Dense membership mask over `0..n`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for i in self.iter() {
            if i < n {
                mask[i] = true;
            }
        }
        mask
    }
}

impl FromIterator<usize> for ItemSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut items: Vec<usize> = iter.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        ItemSet(items)
    }
}

impl From<Vec<usize>> for ItemSet {
    fn from(items: Vec<usize>) -> Self {
        items.into_iter().collect()
    }
}

impl<'a> IntoIterator for &'a ItemSet {
    type Item = usize;
    type IntoIter = std::iter::Copied<std::slice::Iter<'a, usize>>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter().copied()
    }
}

impl fmt::Display for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (pos, item) in self.0.iter().enumerate() {
            if pos > 0 {
                write!(f, ",")?;
            }
            write!(f, "{item}")?;
        }
        write!(f, "}}")
    }
}
