//! K-fold cross-validation with out-of-fold risk scores.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::dataset::Dataset;
use super::profile::{profile_from, DecileProfile, N_DECILES};
use super::stratify::{stratify_risks, Stratification};
use super::train::{train, GridPointResult, TrainedModel};
use crate::data::split_fold_indices;
use crate::error::{Error, Result};
use crate::survival::{c_index, KmCurve, LogRankResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_early_stop: usize,
    pub n_validation: usize,
    pub c_index: f64,
    pub threshold: f64,
    pub training: GridPointResult,
}

/// Cross-validation summary; serialises to the evaluation report JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm: String,
    pub n_patients: usize,
    pub n_folds: usize,
    pub fold_c_index: Vec<f64>,
    pub c_index: f64,
    /// Sample standard deviation across folds.
    pub c_index_sd: f64,
    pub logrank: Option<LogRankResult>,
    pub stratification_degenerate: bool,
    pub km_high: KmCurve,
    pub km_low: KmCurve,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decile_profile: Option<DecileProfile>,
    pub folds: Vec<FoldResult>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: EvalReport,
    pub models: Vec<TrainedModel>,
    /// Out-of-fold risk per patient, in dataset order.
    pub risks: Vec<f64>,
    /// High/low split of out-of-fold risks, each patient cut at the
    /// threshold of the model that scored it.
    pub stratification: Stratification,
}

/// Holds back `fraction` of `train_idx`, sampling events and censored
/// patients separately so both sides keep events. Returns `(kept, held)`.
pub fn stratified_split(
    data: &Dataset,
    train_idx: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut events, mut censored): (Vec<usize>, Vec<usize>) =
        train_idx.iter().partition(|&&i| data.labels()[i].event);
    if events.len() < 2 {
        return Err(Error::Data(format!(
            "{} events available; a held-out split needs at least 2",
            events.len()
        )));
    }
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);
    let n_ev = ((fraction * events.len() as f64).round() as usize).clamp(1, events.len() - 1);
    let n_ce = ((fraction * censored.len() as f64).round() as usize).min(censored.len());
    let mut hold: Vec<usize> = events[..n_ev]
        .iter()
        .chain(&censored[..n_ce])
        .copied()
        .collect();
    let mut fit: Vec<usize> = events[n_ev..]
        .iter()
        .chain(&censored[n_ce..])
        .copied()
        .collect();
    hold.sort_unstable();
    fit.sort_unstable();
    Ok((fit, hold))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

struct FoldRun {
    result: FoldResult,
    model: TrainedModel,
    validation: Vec<usize>,
    risks: Vec<f64>,
    windows: Option<Vec<Vec<f64>>>,
}

fn run_fold(
    config: &TrainConfig,
    data: &Dataset,
    fold: usize,
    train_idx: &[usize],
    valid_idx: &[usize],
) -> Result<FoldRun> {
    let (fit_idx, hold_idx) = stratified_split(
        data,
        train_idx,
        config.early_stopping_fraction,
        config.seed.wrapping_add(fold as u64 + 1),
    )?;
    let model = train(config, &data.subset(&fit_idx), &data.subset(&hold_idx))?;
    let valid = data.subset(valid_idx);
    let (risks, windows) = if config.strategy.scheme().is_some() {
        let (r, w) = model.predict_with_windows(&valid)?;
        (r, Some(w))
    } else {
        (model.predict(&valid)?, None)
    };
    let c = c_index(&risks, valid.labels()).map_err(|e| e.context("validation fold"))?;
    Ok(FoldRun {
        result: FoldResult {
            fold,
            n_train: fit_idx.len(),
            n_early_stop: hold_idx.len(),
            n_validation: valid_idx.len(),
            c_index: c,
            threshold: model.threshold,
            training: model.metadata.chosen.clone(),
        },
        model,
        validation: valid_idx.to_vec(),
        risks,
        windows,
    })
}

/// Splits `data` into `n_folds` folds with `config.seed`, trains on each
/// complement and scores the held-out fold. Folds run in parallel but the
/// result depends only on the configuration.
pub fn cross_validate(config: &TrainConfig, data: &Dataset, n_folds: usize) -> Result<CvOutcome> {
    config.validate()?;
    let folds = split_fold_indices(data.len(), n_folds, config.seed)?;
    let runs = (0..n_folds)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let mut train_idx = train_idx;
            train_idx.sort_unstable();
            run_fold(config, data, f, &train_idx, &folds[f])
                .map_err(|e| e.context(format!("fold {f}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = data.len();
    let mut risks = vec![0.0; n];
    let mut thresholds = vec![0.0; n];
    let mut windows: Vec<Vec<f64>> = vec![Vec::new(); n];
    for run in &runs {
        for (j, &i) in run.validation.iter().enumerate() {
            risks[i] = run.risks[j];
            thresholds[i] = run.model.threshold;
            if let Some(w) = &run.windows {
                windows[i] = w[j].clone();
            }
        }
    }
    // Centre each patient's risk on its own model's threshold so one cut
    // at zero applies the right rule to every fold.
    let centred: Vec<f64> = risks.iter().zip(&thresholds).map(|(r, t)| r - t).collect();
    let stratification = stratify_risks(data.ids(), &centred, data.labels(), 0.0)?;

    let decile_profile = match config.strategy.scheme() {
        Some(s) if n >= N_DECILES => Some(profile_from(s.percentiles(), &risks, &windows)?),
        _ => None,
    };

    let fold_c_index: Vec<f64> = runs.iter().map(|r| r.result.c_index).collect();
    let (c_mean, c_sd) = mean_sd(&fold_c_index);
    let report = EvalReport {
        algorithm: config.strategy.label(),
        n_patients: n,
        n_folds,
        fold_c_index,
        c_index: c_mean,
        c_index_sd: c_sd,
        logrank: stratification.logrank,
        stratification_degenerate: stratification.degenerate,
        km_high: stratification.km_high.clone(),
        km_low: stratification.km_low.clone(),
        decile_profile,
        folds: runs.iter().map(|r| r.result.clone()).collect(),
    };
    Ok(CvOutcome {
        report,
        models: runs.into_iter().map(|r| r.model).collect(),
        risks,
        stratification,
    })
}
