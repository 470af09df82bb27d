use ndarray::Axis;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FeatureBag;
use crate::error::{Error, Result};

/// Row indices drawn by [`resample_bag`].
///
/// Downsampling draws `target_n` distinct rows. Upsampling repeats every row
/// `target_n / n` times and fills the remainder with distinct rows.
pub fn resample_indices(n: usize, target_n: usize, seed: u64) -> Result<Vec<usize>> {
    if target_n == 0 {
        return Err(Error::Validation(
            "target bag size must be at least 1".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Validation("cannot resample an empty bag".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n >= target_n {
        return Ok(index::sample(&mut rng, n, target_n).into_vec());
    }
    let copies = target_n / n;
    let mut out = Vec::with_capacity(target_n);
    for _ in 0..copies {
        out.extend(0..n);
    }
    out.extend(index::sample(&mut rng, n, target_n % n).into_iter());
    Ok(out)
}

pub fn resample_bag(bag: &FeatureBag, target_n: usize, seed: u64) -> Result<FeatureBag> {
    let idx = resample_indices(bag.n_tiles(), target_n, seed)?;
    FeatureBag::new(bag.patient_id(), bag.features().select(Axis(0), &idx))
}
