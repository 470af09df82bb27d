use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::SurvivalLabel;

/// Product-limit survival curve evaluated at each distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    /// Subjects at risk just before each event time.
    pub at_risk: Vec<usize>,
    /// Cohort size, i.e. the number at risk at time zero.
    pub n_subjects: usize,
}

pub fn km_estimate(labels: &[SurvivalLabel]) -> KmCurve {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].time.total_cmp(&labels[b].time));

    let mut curve = KmCurve {
        event_times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        n_subjects: labels.len(),
    };
    let mut at_risk = labels.len();
    let mut s = 1.0;
    let mut pos = 0;
    while pos < order.len() {
        let t = labels[order[pos]].time;
        let mut end = pos;
        let mut deaths = 0;
        while end < order.len() && labels[order[end]].time == t {
            deaths += labels[order[end]].event as usize;
            end += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            curve.event_times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
        }
        at_risk -= end - pos;
        pos = end;
    }
    curve
}

impl KmCurve {
    /// Survival probability just after time `t` (right-continuous step).
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.event_times.iter().rposition(|&e| e <= t) {
            Some(i) => self.survival[i],
            None => 1.0,
        }
    }
}

/// Writes curves as `time,survival,at_risk,group` rows, each curve starting
/// with its time-zero row.
pub fn write_km_csv<W: Write>(mut out: W, curves: &[(&str, &KmCurve)]) -> std::io::Result<()> {
    writeln!(out, "time,survival,at_risk,group")?;
    for (group, curve) in curves {
        writeln!(out, "0,1,{},{group}", curve.n_subjects)?;
        for ((t, s), r) in curve
            .event_times
            .iter()
            .zip(&curve.survival)
            .zip(&curve.at_risk)
        {
            writeln!(out, "{t},{s},{r},{group}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(t: f64, e: bool) -> SurvivalLabel {
        SurvivalLabel::new(t, e).unwrap()
    }

    #[test]
    fn uniform_steps_without_censoring() {
        let c = km_estimate(&[l(1.0, true), l(2.0, true), l(3.0, true), l(4.0, true)]);
        assert_eq!(c.survival, vec![0.75, 0.5, 0.25, 0.0]);
        assert_eq!(c.at_risk, vec![4, 3, 2, 1]);
    }

    #[test]
    fn censoring_hand_case() {
        let c = km_estimate(&[l(1.0, true), l(2.0, false), l(3.0, true)]);
        assert_eq!(c.event_times, vec![1.0, 3.0]);
        assert!((c.survival[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.survival[1], 0.0);
        assert_eq!(c.survival_at(2.5), c.survival[0]);
        assert_eq!(c.survival_at(0.5), 1.0);
    }

    #[test]
    fn all_censored_is_flat() {
        let c = km_estimate(&[l(1.0, false), l(2.0, false)]);
        assert!(c.event_times.is_empty());
        assert_eq!(c.survival_at(10.0), 1.0);
    }

    #[test]
    fn csv_layout() {
        let c = km_estimate(&[l(1.0, true), l(2.0, true)]);
        let mut buf = Vec::new();
        write_km_csv(&mut buf, &[("low", &c)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time,survival,at_risk,group\n0,1,2,low\n1,0.5,2,low\n2,0,1,low\n"
        );
    }

    proptest::proptest! {
        #[test]
        fn non_increasing_and_empirical_without_censoring(
            times in proptest::collection::vec(0.1f64..20.0, 1..30),
            cens in proptest::collection::vec(proptest::bool::ANY, 30),
        ) {
            let labels: Vec<SurvivalLabel> = times.iter().zip(&cens).map(|(&t, &c)| l(t, c)).collect();
            let curve = km_estimate(&labels);
            for w in curve.survival.windows(2) {
                proptest::prop_assert!(w[1] <= w[0]);
            }
            let uncensored: Vec<SurvivalLabel> = times.iter().map(|&t| l(t, true)).collect();
            let curve = km_estimate(&uncensored);
            for (t, s) in curve.event_times.iter().zip(&curve.survival) {
                let surviving = times.iter().filter(|&&x| x > *t).count() as f64 / times.len() as f64;
                proptest::prop_assert!((s - surviving).abs() < 1e-12);
            }
        }
    }
}
