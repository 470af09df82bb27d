//! Mini-batch Cox training with patience-based early stopping and a
//! learning-rate x weight-decay grid.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Estimator, TrainConfig};
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::{
    backward, forward_batch, init_params, read_checkpoint, write_checkpoint, AdamConfig, AdamState,
    ModelParams,
};
use crate::pooling::{percentile_window_means, PoolingStrategy};
use crate::survival::{cox_nll, fit_l1_cox};

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub learning_rate: f64,
    pub weight_decay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Cox loss per observed event on the early-stopping set.
    pub best_validation_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub chosen: GridPointResult,
    pub grid: Vec<GridPointResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub strategy: PoolingStrategy,
    pub metadata: TrainingMetadata,
    /// Median training-set risk; strictly higher risks are high-risk.
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct SavedMetadata {
    threshold: f64,
    training: TrainingMetadata,
}

impl TrainedModel {
    /// Writes the model as a checkpoint; threshold and grid results go in
    /// the header metadata.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::to_value(SavedMetadata {
            threshold: self.threshold,
            training: self.metadata.clone(),
        })
        .map_err(|e| Error::Data(format!("model metadata: {e}")))?;
        write_checkpoint(path, &self.params, &self.strategy, meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (params, header) = read_checkpoint(path)?;
        let meta: SavedMetadata =
            serde_json::from_value(header.metadata).map_err(|e| Error::Format {
                field: "metadata",
                detail: format!("{}: {e}", path.display()),
            })?;
        Ok(Self {
            params,
            strategy: header.pooling,
            metadata: meta.training,
            threshold: meta.threshold,
        })
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(forward_batch(&self.params, &self.strategy, &data.views())?.risks())
    }

    /// Risks plus per-patient window-mean scores at each percentile of the
    /// model's scheme.
    pub fn predict_with_windows(&self, data: &Dataset) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let scheme = self.strategy.scheme().ok_or_else(|| {
            Error::Config(format!(
                "strategy `{}` has no percentile scheme",
                self.strategy.label()
            ))
        })?;
        let fwd = forward_batch(&self.params, &self.strategy, &data.views())?;
        let windows = fwd
            .patients
            .iter()
            .map(|p| percentile_window_means(scheme, &p.scores))
            .collect::<Result<Vec<_>>>()?;
        Ok((fwd.risks(), windows))
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn per_event_nll(params: &ModelParams, strategy: &PoolingStrategy, data: &Dataset) -> Result<f64> {
    let risks = forward_batch(params, strategy, &data.views())?.risks();
    Ok(cox_nll(&risks, data.labels())? / data.n_events() as f64)
}

/// Patient batches for one epoch. A trailing batch of one joins the
/// previous batch.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().map_or(false, |b| b.len() < 2) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

struct GridRun {
    params: ModelParams,
    result: GridPointResult,
}

fn run_grid_point(
    config: &TrainConfig,
    train: &Dataset,
    valid: &Dataset,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<GridRun> {
    let dims = config.model_dims(train.dim());
    let mut params = init_params(&dims, config.seed)?;
    let mut adam = AdamState::new(&params, AdamConfig::new(learning_rate, weight_decay));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let views = train.views();
    let labels = train.labels();

    let mut best_nll = per_event_nll(&params, &config.strategy, valid)?;
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut epochs_run = 0;
    let mut stale = 0;
    let mut any_update = false;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        for mut batch in epoch_batches(train.len(), config.batch_size, &mut rng) {
            if !batch.iter().any(|&i| labels[i].event) {
                let size = batch.len().min(train.len());
                batch = index::sample(&mut rng, train.len(), size).into_vec();
                if !batch.iter().any(|&i| labels[i].event) {
                    continue;
                }
            }
            let bviews: Vec<_> = batch.iter().map(|&i| views[i]).collect();
            let blabels: Vec<_> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = backward(&params, &bviews, &config.strategy, &blabels)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Optimization(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            adam.update(&mut params, &grads)?;
            any_update = true;
        }
        if !any_update {
            return Err(Error::Data(
                "every training batch was free of events".into(),
            ));
        }
        let nll = per_event_nll(&params, &config.strategy, valid)?;
        if !nll.is_finite() {
            return Err(Error::Optimization(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        if nll < best_nll {
            best_nll = nll;
            best_params = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(GridRun {
        params: best_params,
        result: GridPointResult {
            learning_rate,
            weight_decay,
            lambda: None,
            epochs_run,
            best_epoch,
            best_validation_nll: best_nll,
        },
    })
}

fn pooled_matrix(data: &Dataset) -> Array2<f64> {
    let mut m = Array2::zeros((data.len(), data.dim()));
    for i in 0..data.len() {
        m.row_mut(i)
            .assign(&data.bag(i).mean_axis(Axis(0)).expect("nonempty bag"));
    }
    m
}

fn fit_linear(config: &TrainConfig, train: &Dataset, valid: &Dataset) -> Result<Vec<GridRun>> {
    let Estimator::L1Cox {
        lambdas,
        iterations,
        tolerance,
    } = &config.estimator
    else {
        unreachable!("checked by caller")
    };
    let x = pooled_matrix(train);
    let mean = x.mean_axis(Axis(0)).unwrap();
    let sd = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 { s } else { 1.0 });
    let z = (&x - &mean) / &sd;
    let mut runs = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let beta = fit_l1_cox(z.view(), train.labels(), lambda, *iterations, *tolerance)?;
        let raw: Array1<f64> = &beta / &sd;
        let mut params = ModelParams::zeros(&config.model_dims(train.dim()))?;
        let head = &mut params.head[0];
        head.weights.row_mut(0).assign(&raw);
        head.bias[0] = -raw.dot(&mean);
        let nll = per_event_nll(&params, &config.strategy, valid)?;
        runs.push(GridRun {
            params,
            result: GridPointResult {
                learning_rate: 0.0,
                weight_decay: 0.0,
                lambda: Some(lambda),
                epochs_run: 0,
                best_epoch: 0,
                best_validation_nll: nll,
            },
        });
    }
    Ok(runs)
}

/// Fits one model per grid point on `train`, monitoring the Cox loss on
/// `valid`, and keeps the grid point with the lowest monitored loss.
pub fn train(config: &TrainConfig, train: &Dataset, valid: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data(
            "training and validation sets must be nonempty".into(),
        ));
    }
    if train.n_events() == 0 {
        return Err(Error::Data("training set has no observed events".into()));
    }
    if valid.n_events() == 0 {
        return Err(Error::Data("validation set has no observed events".into()));
    }
    if train.dim() != valid.dim() {
        return Err(Error::Data(
            "training and validation bags differ in feature count".into(),
        ));
    }

    let runs = match config.estimator {
        Estimator::Adam => config
            .grid()
            .into_iter()
            .map(|(lr, wd)| {
                run_grid_point(config, train, valid, lr, wd)
                    .map_err(|e| e.context(format!("grid point lr={lr}, weight_decay={wd}")))
            })
            .collect::<Result<Vec<_>>>()?,
        Estimator::L1Cox { .. } => fit_linear(config, train, valid)?,
    };
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.result
                .best_validation_nll
                .total_cmp(&b.1.result.best_validation_nll)
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i)
        .expect("grid is nonempty");
    let grid: Vec<GridPointResult> = runs.iter().map(|r| r.result.clone()).collect();
    let chosen = runs.into_iter().nth(best).unwrap();

    let risks = forward_batch(&chosen.params, &config.strategy, &train.views())?.risks();
    let threshold = median(&risks);
    Ok(TrainedModel {
        params: chosen.params,
        strategy: config.strategy.clone(),
        metadata: TrainingMetadata {
            chosen: chosen.result,
            grid,
        },
        threshold,
    })
}
