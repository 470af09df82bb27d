//! Survival statistics: Cox partial likelihood, concordance, Kaplan-Meier,
//! log-rank and the L1-penalised linear Cox baseline.

mod concordance;
mod cox;
mod km;
mod lasso;
mod logrank;

use serde::{Deserialize, Serialize};

pub use concordance::c_index;
pub use cox::{cox_nll, cox_nll_grad, cox_nll_with_grad};
pub use km::{km_estimate, write_km_csv, KmCurve};
pub use lasso::{fit_l1_cox, l1_cox_objective};
pub use logrank::{chi_square_1df_sf, erfc, logrank_test, LogRankResult};

/// A model's log relative hazard for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub patient_id: String,
    pub risk: f64,
}
