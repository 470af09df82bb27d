use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::train::TrainedModel;
use crate::error::{Error, Result};

pub const N_DECILES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileRow {
    /// 1 is the lowest-risk tenth of the cohort.
    pub decile: usize,
    pub n_patients: usize,
    pub mean_scores: Vec<f64>,
}

/// Mean selected tile score at each percentile, per risk decile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileProfile {
    pub percentiles: Vec<f64>,
    pub rows: Vec<DecileRow>,
}

impl DecileProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "decile,n_patients")?;
        for p in &self.percentiles {
            write!(out, ",p{p}")?;
        }
        writeln!(out)?;
        for row in &self.rows {
            write!(out, "{},{}", row.decile, row.n_patients)?;
            for v in &row.mean_scores {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Profile of one percentile across deciles.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_scores[j]).collect()
    }
}

/// Builds the profile from per-patient risks and window-mean scores.
/// Patients are ranked by risk (ties by position) and cut into tenths.
pub fn profile_from(
    percentiles: &[f64],
    risks: &[f64],
    windows: &[Vec<f64>],
) -> Result<DecileProfile> {
    let n = risks.len();
    if n < N_DECILES {
        return Err(Error::Sizing(format!(
            "decile profile needs >= 10 patients, got {n}"
        )));
    }
    if windows.len() != n || windows.iter().any(|w| w.len() != percentiles.len()) {
        return Err(Error::Shape(
            "one window-score row per patient and percentile expected".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]).then(a.cmp(&b)));
    let mut sums = vec![vec![0.0; percentiles.len()]; N_DECILES];
    let mut counts = vec![0usize; N_DECILES];
    for (rank, &p) in order.iter().enumerate() {
        let g = rank * N_DECILES / n;
        counts[g] += 1;
        for (s, v) in sums[g].iter_mut().zip(&windows[p]) {
            *s += v;
        }
    }
    let rows = sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(g, (s, c))| DecileRow {
            decile: g + 1,
            n_patients: c,
            mean_scores: s.into_iter().map(|v| v / c as f64).collect(),
        })
        .collect();
    Ok(DecileProfile {
        percentiles: percentiles.to_vec(),
        rows,
    })
}

pub fn decile_score_profile(model: &TrainedModel, cohort: &Dataset) -> Result<DecileProfile> {
    if cohort.len() < N_DECILES {
        return Err(Error::Sizing(format!(
            "decile profile needs >= 10 patients, got {}",
            cohort.len()
        )));
    }
    let (risks, windows) = model.predict_with_windows(cohort)?;
    let percentiles = model
        .strategy
        .scheme()
        .expect("checked by predict_with_windows")
        .percentiles();
    profile_from(percentiles, &risks, &windows)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `NaN` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_patients_give_identical_rows() {
        let risks = vec![0.3; 10];
        let windows = vec![vec![1.0, 2.0, 3.0]; 10];
        let p = profile_from(&[0.0, 50.0, 100.0], &risks, &windows).unwrap();
        assert_eq!(p.rows.len(), 10);
        assert!(p
            .rows
            .iter()
            .all(|r| r.mean_scores == vec![1.0, 2.0, 3.0] && r.n_patients == 1));
    }

    #[test]
    fn deciles_follow_risk() {
        let n = 35;
        let risks: Vec<f64> = (0..n).map(|i| ((i * 17) % n) as f64).collect();
        let windows: Vec<Vec<f64>> = risks.iter().map(|r| vec![*r, -r]).collect();
        let p = profile_from(&[10.0, 90.0], &risks, &windows).unwrap();
        assert_eq!(p.rows.iter().map(|r| r.n_patients).sum::<usize>(), n);
        assert!(
            (spearman(&(1..=10).map(f64::from).collect::<Vec<_>>(), &p.column(0)) - 1.0).abs()
                < 1e-12
        );
        assert!(
            (spearman(&(1..=10).map(f64::from).collect::<Vec<_>>(), &p.column(1)) + 1.0).abs()
                < 1e-12
        );
        let mut csv = Vec::new();
        p.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("decile,n_patients,p10,p90\n1,"));
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn too_small_cohort() {
        assert!(profile_from(&[50.0], &[1.0; 9], &vec![vec![0.0]; 9]).is_err());
    }

    #[test]
    fn spearman_ties() {
        let s = spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 20.0, 30.0]);
        assert!((s - 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    }
}
