//! Feature bags, survival labels and everything needed to get them on and
//! off disk: the binary bag codec, CSV manifests, fixed-size resampling,
//! fold splitting and the seeded synthetic generator.

mod bag;
mod folds;
mod manifest;
mod resample;
mod synthetic;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bag::{read_bag, write_bag, BAG_MAGIC, BAG_VERSION};
pub(crate) use folds::split_fold_indices;
pub use folds::{split_folds, Fold, FoldSplit};
pub use manifest::{load_dataset, read_manifest, write_manifest, Manifest, ManifestEntry};
pub use resample::{resample_bag, resample_indices};
pub use synthetic::{
    generate_synthetic, generate_synthetic_cohort, SignalMode, SyntheticCohort, SyntheticSpec,
};

/// One patient's tile-feature matrix (tiles × feature dimensions).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag {
    patient_id: String,
    features: Array2<f32>,
}

impl FeatureBag {
    pub fn new(patient_id: impl Into<String>, features: Array2<f32>) -> Result<Self> {
        let patient_id = patient_id.into();
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::Validation(format!(
                "bag `{patient_id}` must have at least one tile and one feature, got {n}x{d}"
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "bag `{patient_id}` has a non-finite value at flat position {pos}"
            )));
        }
        Ok(Self {
            patient_id,
            features,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn n_tiles(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Widens the stored 32-bit features for 64-bit training arithmetic.
    pub fn to_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }
}

/// Observed time and event indicator for one patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalLabel {
    pub time: f64,
    /// `true` when death was observed, `false` when censored.
    pub event: bool,
}

impl SurvivalLabel {
    pub fn new(time: f64, event: bool) -> Result<Self> {
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::Validation(format!(
                "survival time must be positive and finite, got {time}"
            )));
        }
        Ok(Self { time, event })
    }

    pub fn event_indicator(&self) -> f64 {
        if self.event {
            1.0
        } else {
            0.0
        }
    }
}
