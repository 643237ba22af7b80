use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// A seeded partition of sample indices into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

/// Shuffles `0..n` and slices it into `k` contiguous folds whose sizes differ
/// by at most one; the last `n mod k` folds take the extra samples.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k-fold split needs k >= 2, got {k}"
        )));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[]));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f >= k - extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan { k, seed, folds })
}

impl FoldPlan {
    /// Training indices (all other folds, ascending) and test indices of
    /// fold `i`.
    pub fn train_test(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        let test = self.folds[i].clone();
        assert!(
            test.iter().all(|t| train.binary_search(t).is_err()),
            "train/test overlap in fold {i}"
        );
        (train, test)
    }

    /// Nested split for fold `i`: fold `i + 1 (mod k)` validates, fold `i`
    /// tests, the rest trains.
    pub fn train_val_test(&self, i: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let v = (i + 1) % self.k;
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i && *j != v)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        (train, self.folds[v].clone(), self.folds[i].clone())
    }

    pub fn len(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes() {
        let p = kfold_split(100, 10, 1).unwrap();
        assert!(p.folds.iter().all(|f| f.len() == 10));
        let p = kfold_split(101, 10, 1).unwrap();
        let mut sizes: Vec<usize> = p.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [vec![10; 9], vec![11]].concat());
        assert!(kfold_split(9, 10, 1).is_err());
        assert_eq!(
            kfold_split(50, 5, 3).unwrap(),
            kfold_split(50, 5, 3).unwrap()
        );
        assert_ne!(
            kfold_split(50, 5, 3).unwrap(),
            kfold_split(50, 5, 4).unwrap()
        );
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let p = kfold_split(n, k, seed).unwrap();
            let mut all: Vec<usize> = p.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = p.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for i in 0..k {
                let (tr, te) = p.train_test(i);
                prop_assert_eq!(tr.len() + te.len(), n);
                if k >= 3 {
                    let (tr, va, te) = p.train_val_test(i);
                    prop_assert_eq!(tr.len() + va.len() + te.len(), n);
                }
            }
        }
    }
}
