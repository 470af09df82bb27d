//! Cox negative log partial likelihood with Breslow risk sets.

use crate::data::SurvivalLabel;
use crate::error::{Error, Result};

/// Running `log(sum(exp(x)))` that never exponentiates a large argument.
#[derive(Clone, Copy)]
struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl LogSumExp {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        scaled: 0.0,
    };

    fn push(&mut self, x: f64) {
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.scaled.ln()
    }
}

fn check(risks: &[f64], labels: &[SurvivalLabel]) -> Result<()> {
    if risks.is_empty() {
        return Err(Error::Validation(
            "cox likelihood of an empty cohort".into(),
        ));
    }
    if risks.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} risk scores for {} labels",
            risks.len(),
            labels.len()
        )));
    }
    if let Some(i) = risks.iter().position(|r| !r.is_finite()) {
        return Err(Error::Validation(format!("risk score {i} is not finite")));
    }
    Ok(())
}

/// Groups of subject indices sharing a time, latest time first.
fn tie_groups_descending(labels: &[SurvivalLabel]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[b].time.total_cmp(&labels[a].time).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if labels[g[0]].time == labels[i].time => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// For each tie group (latest first): log of the risk-set denominator.
fn risk_set_log_denominators(risks: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let mut acc = LogSumExp::EMPTY;
    groups
        .iter()
        .map(|g| {
            for &i in g {
                acc.push(risks[i]);
            }
            acc.value()
        })
        .collect()
}

/// `-sum_{events i} [O_i - log sum_{t_j >= t_i} exp(O_j)]`.
pub fn cox_nll(risks: &[f64], labels: &[SurvivalLabel]) -> Result<f64> {
    check(risks, labels)?;
    let groups = tie_groups_descending(labels);
    let log_den = risk_set_log_denominators(risks, &groups);
    let mut nll = 0.0;
    for (g, lse) in groups.iter().zip(&log_den) {
        for &i in g {
            if labels[i].event {
                nll -= risks[i] - lse;
            }
        }
    }
    // rounding can leave a tiny negative value for singleton risk sets
    Ok(nll.max(0.0))
}

/// Gradient of [`cox_nll`] with respect to each risk score.
pub fn cox_nll_grad(risks: &[f64], labels: &[SurvivalLabel]) -> Result<Vec<f64>> {
    Ok(cox_nll_with_grad(risks, labels)?.1)
}

/// Loss and gradient in one pass.
///
/// `dNLL/dO_i = -delta_i + exp(O_i) * sum_{events e: t_e <= t_i} 1 / R_e`,
/// where the inner sum is accumulated in log space.
pub fn cox_nll_with_grad(risks: &[f64], labels: &[SurvivalLabel]) -> Result<(f64, Vec<f64>)> {
    check(risks, labels)?;
    let groups = tie_groups_descending(labels);
    let log_den = risk_set_log_denominators(risks, &groups);

    let mut nll = 0.0;
    let mut grad = vec![0.0; risks.len()];
    // walk from earliest to latest time, accumulating log sum_e d_e / R_e
    let mut inv_acc = LogSumExp::EMPTY;
    for (g, lse) in groups.iter().zip(&log_den).rev() {
        for &i in g {
            if labels[i].event {
                nll -= risks[i] - lse;
                inv_acc.push(-lse);
            }
        }
        let log_inv = inv_acc.value();
        for &i in g {
            let hazard_share = if log_inv.is_finite() {
                (risks[i] + log_inv).exp()
            } else {
                0.0
            };
            grad[i] = hazard_share - labels[i].event_indicator();
        }
    }
    Ok((nll.max(0.0), grad))
}
