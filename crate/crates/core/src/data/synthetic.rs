//! Seeded synthetic survival bags with a planted tile-level signal.
//!
//! Every patient gets a latent risk `r ~ U[0, 1]`. Background tiles are
//! standard normal in `d` dimensions; the signal lives along one fixed random
//! unit axis:
//!
//! * [`SignalMode::Extreme`]: `ceil(1%)` of tiles are shifted by
//!   `extreme_shift * r`, so only the tails of the score distribution carry risk.
//! * [`SignalMode::Distributional`]: a fraction `max_shifted_fraction * r` of
//!   tiles is shifted by the fixed `shift_magnitude`, so risk is encoded in
//!   the shape of the whole score distribution.
//!
//! Each slide additionally receives a per-patient offset along the signal
//! axis (`slide_offset_sd`), playing the role of slide-level staining drift.
//! It moves every tile of a bag together and carries no risk information.
//!
//! Survival times are exponential with hazard `exp(signal_strength * r)`.
//! A `censoring_fraction` share of patients, chosen uniformly, is censored at
//! a uniform fraction of its event time.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FeatureBag, SurvivalLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    Extreme,
    Distributional,
}

fn default_shift_magnitude() -> f64 {
    5.0
}
fn default_extreme_shift() -> f64 {
    12.0
}
fn default_max_shifted_fraction() -> f64 {
    0.5
}
fn default_slide_offset_sd() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_patients: usize,
    pub tiles_per_bag_range: (usize, usize),
    pub d: usize,
    pub signal_mode: SignalMode,
    pub signal_strength: f64,
    pub censoring_fraction: f64,
    pub seed: u64,
    /// Shift applied to signal tiles in distributional mode.
    #[serde(default = "default_shift_magnitude")]
    pub shift_magnitude: f64,
    /// Shift per unit latent risk in extreme mode.
    #[serde(default = "default_extreme_shift")]
    pub extreme_shift: f64,
    /// Shifted fraction at `r = 1` in distributional mode.
    #[serde(default = "default_max_shifted_fraction")]
    pub max_shifted_fraction: f64,
    #[serde(default = "default_slide_offset_sd")]
    pub slide_offset_sd: f64,
}

impl SyntheticSpec {
    /// Spec with the default generator knobs.
    pub fn new(
        n_patients: usize,
        tiles_per_bag_range: (usize, usize),
        d: usize,
        signal_mode: SignalMode,
        signal_strength: f64,
        censoring_fraction: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_patients,
            tiles_per_bag_range,
            d,
            signal_mode,
            signal_strength,
            censoring_fraction,
            seed,
            shift_magnitude: default_shift_magnitude(),
            extreme_shift: default_extreme_shift(),
            max_shifted_fraction: default_max_shifted_fraction(),
            slide_offset_sd: default_slide_offset_sd(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.tiles_per_bag_range;
        let fail = |m: String| Err(Error::Config(m));
        if self.n_patients == 0 {
            return fail("n_patients must be at least 1".into());
        }
        if lo == 0 || lo > hi {
            return fail(format!(
                "tiles_per_bag_range ({lo}, {hi}) must satisfy 1 <= min <= max"
            ));
        }
        if self.d == 0 {
            return fail("d must be at least 1".into());
        }
        if !(self.signal_strength.is_finite() && self.signal_strength >= 0.0) {
            return fail(format!(
                "signal_strength must be >= 0, got {}",
                self.signal_strength
            ));
        }
        if !(0.0..1.0).contains(&self.censoring_fraction) {
            return fail(format!(
                "censoring_fraction must lie in [0, 1), got {}",
                self.censoring_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.max_shifted_fraction) {
            return fail(format!(
                "max_shifted_fraction must lie in [0, 1], got {}",
                self.max_shifted_fraction
            ));
        }
        for (name, v) in [
            ("shift_magnitude", self.shift_magnitude),
            ("extreme_shift", self.extreme_shift),
            ("slide_offset_sd", self.slide_offset_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Generated bags, labels and the latent risk that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub bags: Vec<FeatureBag>,
    pub labels: Vec<SurvivalLabel>,
    pub latent_risk: Vec<f64>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<FeatureBag>, Vec<SurvivalLabel>)> {
    let cohort = generate_synthetic_cohort(spec)?;
    Ok((cohort.bags, cohort.labels))
}

pub fn generate_synthetic_cohort(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d;

    let mut axis: Array1<f64> = Array1::from_shape_fn(d, |_| rng.sample(StandardNormal));
    let norm = axis.dot(&axis).sqrt();
    if norm > 0.0 {
        axis /= norm;
    } else {
        axis[0] = 1.0;
    }

    let (lo, hi) = spec.tiles_per_bag_range;
    let width = (spec.n_patients.max(1) - 1).to_string().len().max(4);
    let mut bags = Vec::with_capacity(spec.n_patients);
    let mut times = Vec::with_capacity(spec.n_patients);
    let mut latent = Vec::with_capacity(spec.n_patients);

    for p in 0..spec.n_patients {
        let n = rng.gen_range(lo..=hi);
        let r: f64 = rng.gen();
        let offset = spec.slide_offset_sd * rng.sample::<f64, _>(StandardNormal);

        let mut tiles: Array2<f64> = Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal));
        let (n_shifted, magnitude) = match spec.signal_mode {
            SignalMode::Extreme => ((n as f64 * 0.01).ceil() as usize, spec.extreme_shift * r),
            SignalMode::Distributional => (
                ((spec.max_shifted_fraction * r * n as f64).round() as usize).min(n),
                spec.shift_magnitude,
            ),
        };
        let mut shift = vec![offset; n];
        for i in index::sample(&mut rng, n, n_shifted.min(n)) {
            shift[i] += magnitude;
        }
        for (mut row, s) in tiles.rows_mut().into_iter().zip(&shift) {
            row.scaled_add(*s, &axis);
        }

        let rate = (spec.signal_strength * r).exp();
        let exp = Exp::new(rate).map_err(|e| Error::Config(format!("hazard rate {rate}: {e}")))?;
        let time = loop {
            let t: f64 = exp.sample(&mut rng);
            if t > 0.0 {
                break t;
            }
        };

        let id = format!("P{p:0width$}");
        bags.push(FeatureBag::new(id, tiles.mapv(|v| v as f32))?);
        times.push(time);
        latent.push(r);
    }

    let n_censored = (spec.censoring_fraction * spec.n_patients as f64).round() as usize;
    let mut events = vec![true; spec.n_patients];
    for i in index::sample(&mut rng, spec.n_patients, n_censored.min(spec.n_patients)).into_vec() {
        events[i] = false;
        let u = loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                break u;
            }
        };
        times[i] *= u;
    }

    let labels = times
        .iter()
        .zip(&events)
        .map(|(&t, &e)| SurvivalLabel::new(t, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticCohort {
        bags,
        labels,
        latent_risk: latent,
    })
}
