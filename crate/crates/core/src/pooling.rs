//! Bag-to-vector aggregation of tile scores.
//!
//! Percentile pooling sorts the tile scores of a bag and reads off the actual
//! instances at fixed distribution locations, optionally with `k`
//! neighbouring instances around each location. The baselines (mean score,
//! top-k, top/bottom-k, mean feature vector) and an attention variant over
//! the percentile windows share the same entry point.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Percentile lists of the seven nested scenarios, each a strict superset of
/// the previous one.
const SCENARIOS: [&[f64]; 7] = [
    &[0.0, 100.0],
    &[0.0, 0.1, 99.9, 100.0],
    &[0.0, 0.1, 1.0, 99.0, 99.9, 100.0],
    &[0.0, 0.1, 1.0, 5.0, 95.0, 99.0, 99.9, 100.0],
    &[0.0, 0.1, 1.0, 5.0, 10.0, 90.0, 95.0, 99.0, 99.9, 100.0],
    &[
        0.0, 0.1, 1.0, 5.0, 10.0, 25.0, 75.0, 90.0, 95.0, 99.0, 99.9, 100.0,
    ],
    &[
        0.0, 0.1, 1.0, 5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0, 99.0, 99.9, 100.0,
    ],
];

/// Sorted percentile locations and an odd neighbourhood width.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileScheme {
    percentiles: Vec<f64>,
    k: usize,
}

impl PercentileScheme {
    pub fn new(percentiles: Vec<f64>, k: usize) -> Result<Self> {
        if percentiles.is_empty() {
            return Err(Error::Config("percentile list must not be empty".into()));
        }
        if percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(Error::Config(format!(
                "percentiles must lie in [0, 100], got {percentiles:?}"
            )));
        }
        if percentiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "percentiles must be strictly increasing, got {percentiles:?}"
            )));
        }
        if k == 0 || k % 2 == 0 {
            return Err(Error::Config(format!(
                "neighbourhood k must be odd and >= 1, got {k}"
            )));
        }
        Ok(Self { percentiles, k })
    }

    pub fn percentiles(&self) -> &[f64] {
        &self.percentiles
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(self.percentiles.clone(), k)
    }

    /// Scenario number of this percentile list, if it is one of the presets.
    pub fn scenario_id(&self) -> Option<u8> {
        SCENARIOS
            .iter()
            .position(|s| *s == self.percentiles.as_slice())
            .map(|i| i as u8 + 1)
    }
}

/// Preset percentile scheme `id` (1..=7) with `k = 1`.
pub fn scenario_preset(id: u8) -> Result<PercentileScheme> {
    let list = id
        .checked_sub(1)
        .and_then(|i| SCENARIOS.get(i as usize))
        .ok_or_else(|| Error::Config(format!("scenario id must be 1..=7, got {id}")))?;
    PercentileScheme::new(list.to_vec(), 1)
}

/// Positions in the ascending score order selected for each percentile.
///
/// The centre is `round(p / 100 * (n - 1))` with halves rounded up; the `k`
/// window is shifted, never truncated, to stay inside `[0, n - 1]`.
pub fn percentile_indices(n: usize, scheme: &PercentileScheme) -> Result<Vec<Vec<usize>>> {
    let k = scheme.k;
    if n == 0 || n < k {
        return Err(Error::InsufficientInstances {
            needed: k.max(1),
            available: n,
        });
    }
    let half = (k / 2) as isize;
    let last_start = (n - k) as isize;
    Ok(scheme
        .percentiles
        .iter()
        .map(|&p| {
            let centre = (p / 100.0 * (n - 1) as f64 + 0.5).floor() as isize;
            let start = (centre - half).clamp(0, last_start) as usize;
            (start..start + k).collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoolingStrategy {
    Percentile(PercentileScheme),
    MeanScore,
    MaxTopK(usize),
    TopBottomK(usize),
    MeanFeature,
    AttentionPercentile(PercentileScheme),
}

impl PoolingStrategy {
    /// Length of the pooled vector for bags with `feature_dim` columns.
    pub fn arity(&self, feature_dim: usize) -> usize {
        match self {
            PoolingStrategy::Percentile(s) => s.percentiles.len() * s.k,
            PoolingStrategy::MeanScore => 1,
            PoolingStrategy::MaxTopK(k) => *k,
            PoolingStrategy::TopBottomK(k) => 2 * k,
            PoolingStrategy::MeanFeature => feature_dim,
            PoolingStrategy::AttentionPercentile(s) => s.percentiles.len(),
        }
    }

    /// Fewest tiles a bag needs for this strategy.
    pub fn min_instances(&self) -> usize {
        match self {
            PoolingStrategy::Percentile(s) | PoolingStrategy::AttentionPercentile(s) => s.k,
            PoolingStrategy::MaxTopK(k) | PoolingStrategy::TopBottomK(k) => *k,
            PoolingStrategy::MeanScore | PoolingStrategy::MeanFeature => 1,
        }
    }

    pub fn uses_attention(&self) -> bool {
        matches!(self, PoolingStrategy::AttentionPercentile(_))
    }

    pub fn uses_scores(&self) -> bool {
        !matches!(self, PoolingStrategy::MeanFeature)
    }

    pub fn scheme(&self) -> Option<&PercentileScheme> {
        match self {
            PoolingStrategy::Percentile(s) | PoolingStrategy::AttentionPercentile(s) => Some(s),
            _ => None,
        }
    }

    /// Short identifier used in reports and file names.
    pub fn label(&self) -> String {
        let scheme_label = |prefix: &str, s: &PercentileScheme| match s.scenario_id() {
            Some(id) => format!("{prefix}_s{id}_k{}", s.k),
            None => format!("{prefix}_{}p_k{}", s.percentiles.len(), s.k),
        };
        match self {
            PoolingStrategy::Percentile(s) => scheme_label("percentile", s),
            PoolingStrategy::MeanScore => "mean_score".into(),
            PoolingStrategy::MaxTopK(k) => format!("max_top_{k}"),
            PoolingStrategy::TopBottomK(k) => format!("top_bottom_{k}"),
            PoolingStrategy::MeanFeature => "mean_feature".into(),
            PoolingStrategy::AttentionPercentile(s) => scheme_label("attention", s),
        }
    }
}

/// How a pooled vector was produced; drives the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PoolTrace {
    /// Output position `i` is the score of tile `tiles[i]`.
    Selection(Vec<usize>),
    Mean,
    MeanFeature,
    Attention {
        windows: Vec<Vec<usize>>,
        weights: Vec<Vec<f64>>,
    },
}

/// Tile indices in ascending score order, ties broken by lower index.
pub(crate) fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

fn selection(strategy: &PoolingStrategy, scores: &[f64]) -> Result<Vec<usize>> {
    let n = scores.len();
    let needed = strategy.min_instances();
    if n < needed || n == 0 {
        return Err(Error::InsufficientInstances {
            needed: needed.max(1),
            available: n,
        });
    }
    let order = ascending_order(scores);
    Ok(match strategy {
        PoolingStrategy::Percentile(s) | PoolingStrategy::AttentionPercentile(s) => {
            percentile_indices(n, s)?
                .into_iter()
                .flatten()
                .map(|pos| order[pos])
                .collect()
        }
        PoolingStrategy::MaxTopK(k) => order.iter().rev().take(*k).copied().collect(),
        PoolingStrategy::TopBottomK(k) => order[..*k]
            .iter()
            .chain(order.iter().rev().take(*k))
            .copied()
            .collect(),
        PoolingStrategy::MeanScore | PoolingStrategy::MeanFeature => {
            unreachable!("not a selection strategy")
        }
    })
}

fn check_features(scores: &[f64], features: ArrayView2<f64>) -> Result<()> {
    if features.nrows() != scores.len() {
        return Err(Error::Shape(format!(
            "{} scores for a bag of {} tiles",
            scores.len(),
            features.nrows()
        )));
    }
    Ok(())
}

pub(crate) fn pool_traced(
    strategy: &PoolingStrategy,
    scores: &[f64],
    features: ArrayView2<f64>,
    attention: Option<(ArrayView2<f64>, ArrayView1<f64>)>,
) -> Result<(Vec<f64>, PoolTrace)> {
    check_features(scores, features)?;
    if features.nrows() == 0 {
        return Err(Error::InsufficientInstances {
            needed: 1,
            available: 0,
        });
    }
    match strategy {
        PoolingStrategy::MeanScore => {
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            Ok((vec![mean], PoolTrace::Mean))
        }
        PoolingStrategy::MeanFeature => {
            let means = features.mean_axis(ndarray::Axis(0)).expect("nonempty bag");
            Ok((means.to_vec(), PoolTrace::MeanFeature))
        }
        PoolingStrategy::AttentionPercentile(scheme) => {
            let (hidden, vector) = attention.ok_or_else(|| {
                Error::Config(
                    "attention pooling needs hidden embeddings and an attention vector".into(),
                )
            })?;
            let (out, windows, weights) = attention_windows(scheme, scores, hidden, vector)?;
            Ok((out, PoolTrace::Attention { windows, weights }))
        }
        _ => {
            let tiles = selection(strategy, scores)?;
            let values = tiles.iter().map(|&i| scores[i]).collect();
            Ok((values, PoolTrace::Selection(tiles)))
        }
    }
}

/// Pools `scores` (one per row of `features`) into the strategy's feature
/// vector. Attention pooling needs learned parameters; use
/// [`attention_pool`] for it.
pub fn pool(
    strategy: &PoolingStrategy,
    scores: &[f64],
    features: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    pool_traced(strategy, scores, features, None).map(|(v, _)| v)
}

#[allow(clippy::type_complexity)]
fn attention_windows(
    scheme: &PercentileScheme,
    scores: &[f64],
    hidden: ArrayView2<f64>,
    vector: ArrayView1<f64>,
) -> Result<(Vec<f64>, Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    if hidden.nrows() != scores.len() {
        return Err(Error::Shape(format!(
            "{} hidden rows for {} scores",
            hidden.nrows(),
            scores.len()
        )));
    }
    if hidden.ncols() != vector.len() {
        return Err(Error::Shape(format!(
            "attention vector of length {} for hidden width {}",
            vector.len(),
            hidden.ncols()
        )));
    }
    let order = ascending_order(scores);
    let windows: Vec<Vec<usize>> = percentile_indices(scores.len(), scheme)?
        .into_iter()
        .map(|w| w.into_iter().map(|pos| order[pos]).collect())
        .collect();
    let mut out = Vec::with_capacity(windows.len());
    let mut all_weights = Vec::with_capacity(windows.len());
    for w in &windows {
        let logits: Vec<f64> = w
            .iter()
            .map(|&t| {
                hidden
                    .row(t)
                    .iter()
                    .zip(vector)
                    .map(|(h, a)| h.tanh() * a)
                    .sum()
            })
            .collect();
        let weights = softmax(&logits);
        out.push(w.iter().zip(&weights).map(|(&t, wt)| wt * scores[t]).sum());
        all_weights.push(weights);
    }
    Ok((out, windows, all_weights))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax-weighted window average of the scores at each percentile, with
/// logits `vector . tanh(hidden_row)` for each tile in the window.
pub fn attention_pool(
    scheme: &PercentileScheme,
    scores: &[f64],
    hidden: ArrayView2<f64>,
    vector: ArrayView1<f64>,
) -> Result<Vec<f64>> {
    attention_windows(scheme, scores, hidden, vector).map(|(v, _, _)| v)
}

/// Mean score of each percentile window, in scheme order.
pub fn percentile_window_means(scheme: &PercentileScheme, scores: &[f64]) -> Result<Vec<f64>> {
    let order = ascending_order(scores);
    Ok(percentile_indices(scores.len(), scheme)?
        .iter()
        .map(|w| w.iter().map(|&pos| scores[order[pos]]).sum::<f64>() / w.len() as f64)
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum StrategyRepr {
    Percentile {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        percentiles: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<u8>,
        #[serde(default = "one")]
        k: usize,
    },
    MeanScore,
    MaxTopK {
        k: usize,
    },
    TopBottomK {
        k: usize,
    },
    MeanFeature,
    AttentionPercentile {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        percentiles: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<u8>,
        #[serde(default = "one")]
        k: usize,
    },
}

fn one() -> usize {
    1
}

fn scheme_from(
    percentiles: Option<Vec<f64>>,
    scenario: Option<u8>,
    k: usize,
) -> Result<PercentileScheme> {
    match (percentiles, scenario) {
        (Some(p), None) => PercentileScheme::new(p, k),
        (None, Some(id)) => scenario_preset(id)?.with_k(k),
        (Some(_), Some(_)) => Err(Error::Config(
            "give either `percentiles` or `scenario`, not both".into(),
        )),
        (None, None) => Err(Error::Config(
            "percentile strategy needs `percentiles` or `scenario`".into(),
        )),
    }
}

impl TryFrom<StrategyRepr> for PoolingStrategy {
    type Error = Error;

    fn try_from(r: StrategyRepr) -> Result<Self> {
        let positive = |k: usize, what: &str| {
            if k == 0 {
                Err(Error::Config(format!("{what} needs k >= 1")))
            } else {
                Ok(k)
            }
        };
        Ok(match r {
            StrategyRepr::Percentile {
                percentiles,
                scenario,
                k,
            } => PoolingStrategy::Percentile(scheme_from(percentiles, scenario, k)?),
            StrategyRepr::AttentionPercentile {
                percentiles,
                scenario,
                k,
            } => PoolingStrategy::AttentionPercentile(scheme_from(percentiles, scenario, k)?),
            StrategyRepr::MeanScore => PoolingStrategy::MeanScore,
            StrategyRepr::MeanFeature => PoolingStrategy::MeanFeature,
            StrategyRepr::MaxTopK { k } => PoolingStrategy::MaxTopK(positive(k, "max_top_k")?),
            StrategyRepr::TopBottomK { k } => {
                PoolingStrategy::TopBottomK(positive(k, "top_bottom_k")?)
            }
        })
    }
}

impl From<&PoolingStrategy> for StrategyRepr {
    fn from(s: &PoolingStrategy) -> Self {
        match s {
            PoolingStrategy::Percentile(sc) => StrategyRepr::Percentile {
                percentiles: Some(sc.percentiles.clone()),
                scenario: None,
                k: sc.k,
            },
            PoolingStrategy::AttentionPercentile(sc) => StrategyRepr::AttentionPercentile {
                percentiles: Some(sc.percentiles.clone()),
                scenario: None,
                k: sc.k,
            },
            PoolingStrategy::MeanScore => StrategyRepr::MeanScore,
            PoolingStrategy::MeanFeature => StrategyRepr::MeanFeature,
            PoolingStrategy::MaxTopK(k) => StrategyRepr::MaxTopK { k: *k },
            PoolingStrategy::TopBottomK(k) => StrategyRepr::TopBottomK { k: *k },
        }
    }
}

impl Serialize for PoolingStrategy {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        StrategyRepr::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PoolingStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = StrategyRepr::deserialize(deserializer)?;
        PoolingStrategy::try_from(repr).map_err(serde::de::Error::custom)
    }
}
