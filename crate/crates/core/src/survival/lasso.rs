//! L1-penalised linear Cox model fitted by proximal gradient descent.

use ndarray::{Array1, ArrayView2};

use super::cox::{cox_nll, cox_nll_with_grad};
use crate::data::SurvivalLabel;
use crate::error::{Error, Result};

const MAX_CONSECUTIVE_INCREASES: usize = 10;
const MIN_STEP: f64 = 1e-14;

fn soft_threshold(x: f64, thresh: f64) -> f64 {
    if x > thresh {
        x - thresh
    } else if x < -thresh {
        x + thresh
    } else {
        0.0
    }
}

/// Penalised objective `cox_nll(X beta) + lambda * |beta|_1`.
pub fn l1_cox_objective(
    features: ArrayView2<f64>,
    labels: &[SurvivalLabel],
    beta: &Array1<f64>,
    lambda: f64,
) -> Result<f64> {
    let risks = features.dot(beta);
    let nll = cox_nll(risks.as_slice().unwrap(), labels)?;
    Ok(nll + lambda * beta.iter().map(|b| b.abs()).sum::<f64>())
}

/// Returns the coefficient vector after the relative objective change drops
/// below `tolerance` or `iterations` steps have been taken.
pub fn fit_l1_cox(
    features: ArrayView2<f64>,
    labels: &[SurvivalLabel],
    lambda: f64,
    iterations: usize,
    tolerance: f64,
) -> Result<Array1<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Validation(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("L1 Cox features must be finite".into()));
    }
    let d = features.ncols();
    let smooth = |beta: &Array1<f64>| -> Result<(f64, Array1<f64>)> {
        let risks = features.dot(beta);
        let (nll, dnll) = cox_nll_with_grad(risks.as_slice().unwrap(), labels)?;
        Ok((nll, features.t().dot(&Array1::from(dnll))))
    };
    let penalty = |beta: &Array1<f64>| lambda * beta.iter().map(|b| b.abs()).sum::<f64>();

    let mut beta = Array1::zeros(d);
    let (mut f, mut grad) = smooth(&beta)?;
    let mut objective = f + penalty(&beta);
    let mut step = 1.0;
    let mut increases = 0;

    for _ in 0..iterations {
        let (candidate, cand_f) = loop {
            let candidate: Array1<f64> = beta
                .iter()
                .zip(grad.iter())
                .map(|(b, g)| soft_threshold(b - step * g, step * lambda))
                .collect();
            let cand_f = smooth(&candidate)?.0;
            let diff = &candidate - &beta;
            let model = f + grad.dot(&diff) + diff.dot(&diff) / (2.0 * step);
            if cand_f <= model + 1e-12 * f.abs().max(1.0) || step <= MIN_STEP {
                break (candidate, cand_f);
            }
            step *= 0.5;
        };
        if !cand_f.is_finite() {
            return Err(Error::Optimization(
                "L1 Cox objective became non-finite".into(),
            ));
        }
        let new_objective = cand_f + penalty(&candidate);
        increases = if new_objective > objective {
            increases + 1
        } else {
            0
        };
        if increases >= MAX_CONSECUTIVE_INCREASES {
            return Err(Error::Optimization(format!(
                "L1 Cox objective increased for {MAX_CONSECUTIVE_INCREASES} consecutive steps"
            )));
        }
        let unchanged = candidate == beta;
        let rel_change = (objective - new_objective).abs() / objective.abs().max(1e-12);
        beta = candidate;
        objective = new_objective;
        if unchanged || rel_change < tolerance {
            break;
        }
        let (nf, ng) = smooth(&beta)?;
        f = nf;
        grad = ng;
        step *= 1.5;
    }
    Ok(beta)
}
