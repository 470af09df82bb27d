use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Fold>,
}

/// Index-level split; `folds[f]` holds the validation positions of fold `f`
/// in ascending order.
pub(crate) fn split_fold_indices(n: usize, n_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_folds < 2 {
        return Err(Error::Sizing(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    if n < n_folds {
        return Err(Error::Sizing(format!(
            "{n} patients cannot fill {n_folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / n_folds + 1); n_folds];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % n_folds].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn split_folds(ids: &[String], n_folds: usize, seed: u64) -> Result<FoldSplit> {
    let val_sets = split_fold_indices(ids.len(), n_folds, seed)?;
    let folds = val_sets
        .iter()
        .map(|val| {
            let mut in_val = vec![false; ids.len()];
            for &i in val {
                in_val[i] = true;
            }
            Fold {
                train: ids
                    .iter()
                    .zip(&in_val)
                    .filter(|(_, &v)| !v)
                    .map(|(id, _)| id.clone())
                    .collect(),
                validation: val.iter().map(|&i| ids[i].clone()).collect(),
            }
        })
        .collect();
    Ok(FoldSplit { folds })
}
