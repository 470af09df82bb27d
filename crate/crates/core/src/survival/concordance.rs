use crate::data::SurvivalLabel;
use crate::error::{Error, Result};

/// Harrell's C: over pairs with `t_i < t_j` and an observed event at `t_i`,
/// the share where the earlier failure has the higher risk. Tied risks
/// count one half; pairs with equal times are not comparable.
pub fn c_index(risks: &[f64], labels: &[SurvivalLabel]) -> Result<f64> {
    if risks.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} risk scores for {} labels",
            risks.len(),
            labels.len()
        )));
    }
    let mut concordant = 0.0;
    let mut comparable = 0usize;
    for (i, li) in labels.iter().enumerate() {
        if !li.event {
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if li.time < lj.time {
                comparable += 1;
                if risks[i] > risks[j] {
                    concordant += 1.0;
                } else if risks[i] == risks[j] {
                    concordant += 0.5;
                }
            }
        }
    }
    if comparable == 0 {
        return Err(Error::UndefinedMetric(
            "c-index has no comparable pairs".into(),
        ));
    }
    Ok(concordant / comparable as f64)
}
