use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::train::TrainedModel;
use crate::data::SurvivalLabel;
use crate::error::{Error, Result};
use crate::survival::{km_estimate, logrank_test, KmCurve, LogRankResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskGroup {
    High,
    Low,
}

impl RiskGroup {
    /// Risks equal to the threshold go to the low-risk group.
    pub fn assign(risk: f64, threshold: f64) -> Self {
        if risk > threshold {
            RiskGroup::High
        } else {
            RiskGroup::Low
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub patient_id: String,
    pub risk: f64,
    pub group: RiskGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub threshold: f64,
    pub assignments: Vec<Assignment>,
    pub km_high: KmCurve,
    pub km_low: KmCurve,
    pub logrank: Option<LogRankResult>,
    /// Set when the log-rank test could not be run, e.g. one empty group.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Splits a cohort at `threshold` and compares the two groups.
pub fn stratify_risks(
    ids: &[String],
    risks: &[f64],
    labels: &[SurvivalLabel],
    threshold: f64,
) -> Result<Stratification> {
    if risks.is_empty() {
        return Err(Error::Data("cannot stratify an empty cohort".into()));
    }
    if risks.len() != labels.len() || ids.len() != labels.len() {
        return Err(Error::Shape("ids, risks and labels must align".into()));
    }
    let mut high = Vec::new();
    let mut low = Vec::new();
    let assignments = ids
        .iter()
        .zip(risks)
        .zip(labels)
        .map(|((id, &risk), label)| {
            let group = RiskGroup::assign(risk, threshold);
            match group {
                RiskGroup::High => high.push(*label),
                RiskGroup::Low => low.push(*label),
            }
            Assignment {
                patient_id: id.clone(),
                risk,
                group,
            }
        })
        .collect();
    let (logrank, note) = if high.is_empty() || low.is_empty() {
        (
            None,
            Some("all patients fall in one risk group; log-rank omitted".to_string()),
        )
    } else {
        match logrank_test(&high, &low) {
            Ok(r) => (Some(r), None),
            Err(Error::UndefinedTest(m)) => (None, Some(format!("log-rank omitted: {m}"))),
            Err(e) => return Err(e),
        }
    };
    Ok(Stratification {
        threshold,
        assignments,
        km_high: km_estimate(&high),
        km_low: km_estimate(&low),
        degenerate: logrank.is_none(),
        logrank,
        note,
    })
}

/// High/low split of `cohort` at the model's training-set median risk.
pub fn risk_stratify(model: &TrainedModel, cohort: &Dataset) -> Result<Stratification> {
    let risks = model.predict(cohort)?;
    stratify_risks(cohort.ids(), &risks, cohort.labels(), model.threshold)
}
