use serde::{Deserialize, Serialize};

use crate::data::SurvivalLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    #[serde(rename = "chi2")]
    pub chi_square: f64,
    #[serde(rename = "p")]
    pub p_value: f64,
}

/// Complementary error function, Chebyshev rational fit with fractional
/// error below 1.2e-7 for every argument.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi_square_1df_sf(chi_square: f64) -> f64 {
    if chi_square <= 0.0 {
        return 1.0;
    }
    erfc((chi_square / 2.0).sqrt()).clamp(0.0, 1.0)
}

/// Two-group log-rank test over the distinct event times of the pooled sample.
pub fn logrank_test(group_a: &[SurvivalLabel], group_b: &[SurvivalLabel]) -> Result<LogRankResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::UndefinedTest(
            "log-rank needs two nonempty groups".into(),
        ));
    }
    let mut pooled: Vec<(f64, bool, bool)> = group_a
        .iter()
        .map(|l| (l.time, l.event, true))
        .chain(group_b.iter().map(|l| (l.time, l.event, false)))
        .collect();
    if !pooled.iter().any(|p| p.1) {
        return Err(Error::UndefinedTest("log-rank with no events".into()));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut at_risk_a = group_a.len() as f64;
    let mut at_risk_b = group_b.len() as f64;
    let mut observed_minus_expected = 0.0;
    let mut variance = 0.0;
    let mut pos = 0;
    while pos < pooled.len() {
        let t = pooled[pos].0;
        let (mut deaths_a, mut deaths, mut leave_a, mut leave_b) = (0.0, 0.0, 0.0, 0.0);
        while pos < pooled.len() && pooled[pos].0 == t {
            let (_, event, in_a) = pooled[pos];
            if event {
                deaths += 1.0;
                if in_a {
                    deaths_a += 1.0;
                }
            }
            if in_a {
                leave_a += 1.0;
            } else {
                leave_b += 1.0;
            }
            pos += 1;
        }
        if deaths > 0.0 {
            let n = at_risk_a + at_risk_b;
            observed_minus_expected += deaths_a - deaths * at_risk_a / n;
            if n > 1.0 {
                variance += deaths * (at_risk_a / n) * (at_risk_b / n) * (n - deaths) / (n - 1.0);
            }
        }
        at_risk_a -= leave_a;
        at_risk_b -= leave_b;
    }
    if variance <= 0.0 {
        return Err(Error::UndefinedTest(
            "log-rank variance is zero; the groups never share a risk set".into(),
        ));
    }
    let chi_square = observed_minus_expected * observed_minus_expected / variance;
    Ok(LogRankResult {
        chi_square,
        p_value: chi_square_1df_sf(chi_square),
    })
}
