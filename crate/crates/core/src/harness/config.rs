use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ModelDims;
use crate::pooling::{scenario_preset, PoolingStrategy};

/// How the risk model is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    /// Mini-batch Adam on the Cox partial likelihood.
    Adam,
    /// Linear Cox on the pooled vector with an L1 penalty; one fit per
    /// lambda, chosen by early-stopping loss.
    L1Cox {
        lambdas: Vec<f64>,
        #[serde(default = "default_l1_iterations")]
        iterations: usize,
        #[serde(default = "default_l1_tolerance")]
        tolerance: f64,
    },
}

fn default_l1_iterations() -> usize {
    500
}
fn default_l1_tolerance() -> f64 {
    1e-7
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Adam
    }
}

impl Estimator {
    pub fn l1_cox(lambdas: Vec<f64>) -> Self {
        Estimator::L1Cox {
            lambdas,
            iterations: default_l1_iterations(),
            tolerance: default_l1_tolerance(),
        }
    }
}

fn default_strategy() -> PoolingStrategy {
    PoolingStrategy::Percentile(
        scenario_preset(7)
            .expect("preset 7")
            .with_k(3)
            .expect("odd k"),
    )
}
fn default_bag_size() -> Option<usize> {
    Some(12_000)
}
fn default_learning_rates() -> Vec<f64> {
    vec![1e-3, 1e-4]
}
fn default_weight_decays() -> Vec<f64> {
    vec![0.0, 1e-4]
}
fn default_max_epochs() -> usize {
    50
}
fn default_patience() -> usize {
    5
}
fn default_batch_size() -> usize {
    64
}
fn default_hidden() -> usize {
    128
}
fn default_head_hidden() -> Vec<usize> {
    vec![128]
}
fn default_early_stopping_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_strategy")]
    pub strategy: PoolingStrategy,
    /// Tiles per bag after resampling; `null` keeps bags as they are.
    #[serde(default = "default_bag_size")]
    pub bag_size: Option<usize>,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_weight_decays")]
    pub weight_decays: Vec<f64>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub scorer_hidden: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: Vec<usize>,
    /// Share of each cross-validation training fold held back to monitor
    /// the loss for early stopping and grid selection.
    #[serde(default = "default_early_stopping_fraction")]
    pub early_stopping_fraction: f64,
    #[serde(default)]
    pub estimator: Estimator,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.learning_rates.is_empty() || self.weight_decays.is_empty() {
            return fail("learning-rate and weight-decay grids must be nonempty".into());
        }
        if self
            .learning_rates
            .iter()
            .any(|&lr| !(lr.is_finite() && lr > 0.0))
        {
            return fail(format!(
                "learning rates must be positive: {:?}",
                self.learning_rates
            ));
        }
        if self
            .weight_decays
            .iter()
            .any(|&wd| !(wd.is_finite() && wd >= 0.0))
        {
            return fail(format!(
                "weight decays must be >= 0: {:?}",
                self.weight_decays
            ));
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if self.batch_size < 2 {
            return fail("batch size must be at least 2".into());
        }
        if self.bag_size == Some(0) {
            return fail("bag_size must be at least 1".into());
        }
        if !(self.early_stopping_fraction > 0.0 && self.early_stopping_fraction < 1.0) {
            return fail(format!(
                "early_stopping_fraction must lie in (0, 1), got {}",
                self.early_stopping_fraction
            ));
        }
        if let Some(b) = self.bag_size {
            if b < self.strategy.min_instances() {
                return fail(format!(
                    "bag_size {b} is smaller than the {} instances `{}` needs",
                    self.strategy.min_instances(),
                    self.strategy.label()
                ));
            }
        }
        if let Estimator::L1Cox { lambdas, .. } = &self.estimator {
            if !matches!(self.strategy, PoolingStrategy::MeanFeature) {
                return fail("the L1 Cox estimator works on the mean_feature strategy only".into());
            }
            if lambdas.is_empty() || lambdas.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
                return fail(format!(
                    "L1 Cox lambdas must be a nonempty list of values >= 0: {lambdas:?}"
                ));
            }
        }
        Ok(())
    }

    /// Grid points in evaluation order: learning rate major, weight decay minor.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.learning_rates
            .iter()
            .flat_map(|&lr| self.weight_decays.iter().map(move |&wd| (lr, wd)))
            .collect()
    }

    pub fn model_dims(&self, feature_dim: usize) -> ModelDims {
        let linear = matches!(self.estimator, Estimator::L1Cox { .. });
        ModelDims {
            input_dim: feature_dim,
            scorer_hidden: self.scorer_hidden,
            head_input: self.strategy.arity(feature_dim),
            head_hidden: if linear {
                Vec::new()
            } else {
                self.head_hidden.clone()
            },
            attention: self.strategy.uses_attention(),
        }
    }
}
