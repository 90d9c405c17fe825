//! Index-set types used throughout inference.

use crate::error::{DppError, Result};

/// A subset of the ground set, stored as strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SubsetSelection {
    items: Vec<usize>,
}

impl SubsetSelection {
    /// Builds a subset from arbitrary indices, sorting and checking range and
    /// uniqueness against a ground set of size `n_items`.
    pub fn new(mut items: Vec<usize>, n_items: usize) -> Result<Self> {
        items.sort_unstable();
        for w in items.windows(2) {
            if w[0] == w[1] {
                return Err(DppError::InvalidInput(format!("duplicate index {}", w[0])));
            }
        }
        if let Some(&last) = items.last() {
            if last >= n_items {
                return Err(DppError::InvalidInput(format!(
                    "index {last} out of range for ground set of size {n_items}"
                )));
            }
        }
        Ok(SubsetSelection { items })
    }

    pub fn empty() -> Self {
        SubsetSelection { items: Vec::new() }
    }

    /// All items `0..n`.
    pub fn full(n: usize) -> Self {
        SubsetSelection { items: (0..n).collect() }
    }

    /// Builds the subset whose membership is given by the bits of `mask`.
    pub fn from_mask(mask: u64, n_items: usize) -> Self {
        let items = (0..n_items).filter(|i| mask >> i & 1 == 1).collect();
        SubsetSelection { items }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    pub fn mask(&self) -> u64 {
        self.items.iter().fold(0u64, |m, &i| m | 1 << i)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().copied()
    }
}

impl From<SubsetSelection> for Vec<usize> {
    fn from(s: SubsetSelection) -> Self {
        s.items
    }
}

/// A conditioning event: every item of `include` appears, no item of
/// `exclude` does.
#[derive(Debug, Clone, Default)]
pub struct ConditionSpec {
    pub include: SubsetSelection,
    pub exclude: SubsetSelection,
}

impl ConditionSpec {
    pub fn new(include: SubsetSelection, exclude: SubsetSelection) -> Result<Self> {
        for i in include.iter() {
            if exclude.contains(i) {
                return Err(DppError::InvalidInput(format!(
                    "item {i} appears in both include and exclude sets"
                )));
            }
        }
        Ok(ConditionSpec { include, exclude })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sorts_and_validates() {
        let s = SubsetSelection::new(vec![3, 1, 2], 5).unwrap();
        assert_eq!(s.items(), &[1, 2, 3]);
        assert!(SubsetSelection::new(vec![1, 1], 5).is_err());
        assert!(SubsetSelection::new(vec![5], 5).is_err());
    }

    #[test]
    fn mask_round_trip() {
        let s = SubsetSelection::new(vec![0, 2, 4], 6).unwrap();
        assert_eq!(SubsetSelection::from_mask(s.mask(), 6), s);
    }

    #[test]
    fn condition_spec_rejects_overlap() {
        let inc = SubsetSelection::new(vec![0], 4).unwrap();
        let exc = SubsetSelection::new(vec![0, 1], 4).unwrap();
        assert!(ConditionSpec::new(inc, exc).is_err());
    }
}
