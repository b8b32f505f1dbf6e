//! Seeded k-fold splits.

use crate::error::{Error, Result};
use crate::numkit::SeededRng;

/// Partition `0..n` into `k` disjoint covering folds of sizes differing by
/// at most one, over a seeded permutation.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::InvalidConfig("fold count must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// The complement of one fold, in ascending index order.
pub fn train_indices(folds: &[Vec<usize>], held_out: usize, n: usize) -> Vec<usize> {
    let mut in_test = vec![false; n];
    for &i in &folds[held_out] {
        in_test[i] = true;
    }
    (0..n).filter(|&i| !in_test[i]).collect()
}
