//! Forward and analytic backward passes through scorer, pooling and head.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{DenseLayer, ModelParams};
use crate::data::{FeatureBag, SurvivalLabel};
use crate::error::{Error, Result};
use crate::pooling::{pool_traced, PoolTrace, PoolingStrategy};
use crate::survival::cox_nll_with_grad;

/// Hidden activations (`n x hidden`) and per-tile scores.
fn scorer_forward(params: &ModelParams, x: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let [first, second] = params.scorer.as_slice() else {
        return Err(Error::Shape(format!(
            "scorer must have 2 layers, has {}",
            params.scorer.len()
        )));
    };
    if x.ncols() != first.in_dim() {
        return Err(Error::Shape(format!(
            "bag has {} features, scorer expects {}",
            x.ncols(),
            first.in_dim()
        )));
    }
    let hidden = first.forward(x);
    let scores = second.forward(hidden.view()).column(0).to_vec();
    Ok((hidden, scores))
}

/// One score per tile; row `i` of the bag determines score `i` alone.
pub fn score_tiles(params: &ModelParams, bag: &FeatureBag) -> Result<Vec<f64>> {
    scorer_forward(params, bag.to_f64().view()).map(|(_, s)| s)
}

/// Activations of every head layer, input first.
fn head_activations(params: &ModelParams, pooled: &[f64]) -> Result<Vec<Array1<f64>>> {
    let first = params
        .head
        .first()
        .ok_or_else(|| Error::Shape("head has no layers".into()))?;
    if pooled.len() != first.in_dim() {
        return Err(Error::Shape(format!(
            "pooled vector has {} entries, head expects {}",
            pooled.len(),
            first.in_dim()
        )));
    }
    let mut acts = Vec::with_capacity(params.head.len() + 1);
    acts.push(Array1::from(pooled.to_vec()));
    for layer in &params.head {
        let prev = acts.last().unwrap();
        let mut z = layer.weights.dot(prev);
        z += &layer.bias;
        let act = layer.activation;
        z.mapv_inplace(|v| act.apply(v));
        acts.push(z);
    }
    Ok(acts)
}

/// Risk score `O` for one pooled vector.
pub fn head_forward(params: &ModelParams, pooled: &[f64]) -> Result<f64> {
    Ok(head_activations(params, pooled)?.last().unwrap()[0])
}

/// Everything the backward pass needs about one patient.
#[derive(Debug, Clone)]
pub struct PatientForward {
    pub scores: Vec<f64>,
    pub pooled: Vec<f64>,
    pub risk: f64,
    hidden: Option<Array2<f64>>,
    head_acts: Vec<Array1<f64>>,
    trace: PoolTrace,
}

pub(crate) fn forward_patient(
    params: &ModelParams,
    strategy: &PoolingStrategy,
    x: ArrayView2<f64>,
    keep_hidden: bool,
) -> Result<PatientForward> {
    let (hidden, scores) = if strategy.uses_scores() {
        let (h, s) = scorer_forward(params, x)?;
        (Some(h), s)
    } else {
        if x.ncols() != params.scorer[0].in_dim() {
            return Err(Error::Shape(format!(
                "bag has {} features, model expects {}",
                x.ncols(),
                params.scorer[0].in_dim()
            )));
        }
        (None, Vec::new())
    };
    let attention = if strategy.uses_attention() {
        let vector = params
            .attention
            .as_ref()
            .ok_or_else(|| Error::Shape("attention pooling needs an attention vector".into()))?;
        Some((hidden.as_ref().unwrap().view(), vector.view()))
    } else {
        None
    };
    let pool_scores: &[f64] = if strategy.uses_scores() { &scores } else { &[] };
    let (pooled, trace) = if strategy.uses_scores() {
        pool_traced(strategy, pool_scores, x, attention)?
    } else {
        let means = x.mean_axis(Axis(0)).ok_or(Error::InsufficientInstances {
            needed: 1,
            available: 0,
        })?;
        (means.to_vec(), PoolTrace::MeanFeature)
    };
    let head_acts = head_activations(params, &pooled)?;
    let risk = head_acts.last().unwrap()[0];
    if !risk.is_finite() {
        return Err(Error::Optimization("non-finite risk score".into()));
    }
    Ok(PatientForward {
        scores,
        pooled,
        risk,
        hidden: if keep_hidden { hidden } else { None },
        head_acts,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct BatchForward {
    pub patients: Vec<PatientForward>,
}

impl BatchForward {
    pub fn risks(&self) -> Vec<f64> {
        self.patients.iter().map(|p| p.risk).collect()
    }
}

/// Forward pass without keeping hidden activations.
pub fn forward_batch(
    params: &ModelParams,
    strategy: &PoolingStrategy,
    bags: &[ArrayView2<f64>],
) -> Result<BatchForward> {
    let patients = bags
        .iter()
        .map(|x| forward_patient(params, strategy, *x, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchForward { patients })
}

/// Accumulates head gradients for one patient; returns d(loss)/d(pooled).
fn head_backward(
    params: &ModelParams,
    acts: &[Array1<f64>],
    d_out: f64,
    grads: &mut ModelParams,
) -> Array1<f64> {
    let mut delta = Array1::from(vec![d_out]);
    for (l, layer) in params.head.iter().enumerate().rev() {
        let out = &acts[l + 1];
        let act = layer.activation;
        delta.zip_mut_with(out, |d, &a| *d *= act.derivative_from_output(a));
        let input = &acts[l];
        let g = &mut grads.head[l];
        for (r, &dr) in delta.iter().enumerate() {
            if dr != 0.0 {
                g.weights.row_mut(r).scaled_add(dr, input);
            }
        }
        g.bias += &delta;
        delta = layer.weights.t().dot(&delta);
    }
    delta
}

/// Gradient contributions routed back to individual tiles.
struct TileGrads {
    tiles: Vec<usize>,
    score: Vec<f64>,
    /// Extra gradient on the hidden activation, from attention logits.
    hidden: Vec<Option<Array1<f64>>>,
}

fn pool_backward(
    fwd: &PatientForward,
    d_pooled: ArrayView1<f64>,
    attention: Option<&Array1<f64>>,
    d_attention: Option<&mut Array1<f64>>,
) -> TileGrads {
    let mut tg = TileGrads {
        tiles: Vec::new(),
        score: Vec::new(),
        hidden: Vec::new(),
    };
    match &fwd.trace {
        PoolTrace::Selection(tiles) => {
            for (&t, &g) in tiles.iter().zip(d_pooled) {
                tg.tiles.push(t);
                tg.score.push(g);
                tg.hidden.push(None);
            }
        }
        PoolTrace::Mean => {
            let n = fwd.scores.len();
            let g = d_pooled[0] / n as f64;
            tg.tiles.extend(0..n);
            tg.score.resize(n, g);
            tg.hidden.resize(n, None);
        }
        PoolTrace::MeanFeature => {}
        PoolTrace::Attention { windows, weights } => {
            let hidden = fwd.hidden.as_ref().expect("hidden kept for backward");
            let vector = attention.expect("attention params present");
            let d_vec = d_attention.expect("attention grads present");
            for ((window, w), (&u, &out)) in windows
                .iter()
                .zip(weights)
                .zip(d_pooled.iter().zip(&fwd.pooled))
            {
                for (&t, &a) in window.iter().zip(w) {
                    let s = fwd.scores[t];
                    let d_logit = u * a * (s - out);
                    let h = hidden.row(t);
                    let th = h.mapv(f64::tanh);
                    d_vec.scaled_add(d_logit, &th);
                    let dh = Array1::from_shape_fn(th.len(), |j| {
                        d_logit * vector[j] * (1.0 - th[j] * th[j])
                    });
                    tg.tiles.push(t);
                    tg.score.push(u * a);
                    tg.hidden.push(Some(dh));
                }
            }
        }
    }
    tg
}

fn scorer_backward(
    params: &ModelParams,
    x: ArrayView2<f64>,
    hidden: &Array2<f64>,
    tg: &TileGrads,
    grads: &mut ModelParams,
) {
    if tg.tiles.is_empty() {
        return;
    }
    let first: &DenseLayer = &params.scorer[0];
    let second: &DenseLayer = &params.scorer[1];
    let width = first.out_dim();
    let s = tg.tiles.len();
    let mut dz = Array2::<f64>::zeros((s, width));
    let mut xs = Array2::<f64>::zeros((s, x.ncols()));
    let mut d_w2 = Array1::<f64>::zeros(width);
    let mut d_b2 = 0.0;
    let w2 = second.weights.row(0);
    let b2 = second.bias[0];
    for (row, (&t, &g)) in tg.tiles.iter().zip(&tg.score).enumerate() {
        let h = hidden.row(t);
        // gradient through the scorer's output activation
        let score_pre = h.dot(&w2) + b2;
        let g = g * second
            .activation
            .derivative_from_output(second.activation.apply(score_pre));
        d_w2.scaled_add(g, &h);
        d_b2 += g;
        let mut dh = w2.mapv(|w| w * g);
        if let Some(extra) = &tg.hidden[row] {
            dh += extra;
        }
        let act = first.activation;
        let mut dz_row = dz.row_mut(row);
        for j in 0..width {
            dz_row[j] = dh[j] * act.derivative_from_output(h[j]);
        }
        xs.row_mut(row).assign(&x.row(t));
    }
    let g1 = &mut grads.scorer[0];
    g1.weights += &dz.t().dot(&xs);
    g1.bias += &dz.sum_axis(Axis(0));
    let g2 = &mut grads.scorer[1];
    g2.weights.row_mut(0).scaled_add(1.0, &d_w2);
    g2.bias[0] += d_b2;
}

/// Cox negative log partial likelihood of a batch and its gradient with
/// respect to every parameter. Selection strategies pass gradient only to
/// the selected tiles, with the selection fixed at the forward pass.
pub fn backward(
    params: &ModelParams,
    bags: &[ArrayView2<f64>],
    strategy: &PoolingStrategy,
    labels: &[SurvivalLabel],
) -> Result<(f64, ModelParams)> {
    if bags.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    if bags.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} bags for {} labels",
            bags.len(),
            labels.len()
        )));
    }
    if !labels.iter().any(|l| l.event) {
        return Err(Error::DegenerateBatch);
    }
    params.check_invariants()?;
    let forwards = bags
        .iter()
        .map(|x| forward_patient(params, strategy, *x, true))
        .collect::<Result<Vec<_>>>()?;
    let risks: Vec<f64> = forwards.iter().map(|f| f.risk).collect();
    let (loss, d_risk) = cox_nll_with_grad(&risks, labels)?;

    let mut grads = params.zeros_like();
    // fixed patient order keeps the reduction bit-deterministic
    for ((fwd, x), &d_o) in forwards.iter().zip(bags).zip(&d_risk) {
        let d_pooled = head_backward(params, &fwd.head_acts, d_o, &mut grads);
        let tg = pool_backward(
            fwd,
            d_pooled.view(),
            params.attention.as_ref(),
            grads.attention.as_mut(),
        );
        if let Some(hidden) = &fwd.hidden {
            scorer_backward(params, *x, hidden, &tg, &mut grads);
        }
    }
    Ok((loss, grads))
}
