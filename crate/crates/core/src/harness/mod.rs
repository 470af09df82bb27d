//! Training, cross-validation and evaluation of risk models.

mod config;
mod cv;
mod dataset;
mod profile;
pub mod report;
mod stratify;
mod train;

pub use config::{Estimator, TrainConfig};
pub use cv::{cross_validate, stratified_split, CvOutcome, EvalReport, FoldResult};
pub use dataset::Dataset;
pub use profile::{
    decile_score_profile, profile_from, spearman, DecileProfile, DecileRow, N_DECILES,
};
pub use stratify::{risk_stratify, stratify_risks, Assignment, RiskGroup, Stratification};
pub use train::{median, train, GridPointResult, TrainedModel, TrainingMetadata};
