use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::data::{resample_bag, FeatureBag, SurvivalLabel};
use crate::error::{Error, Result};

/// Training-ready cohort: `f64` bags, labels and ids, cheap to subset.
#[derive(Debug, Clone)]
pub struct Dataset {
    ids: Vec<String>,
    bags: Vec<Arc<Array2<f64>>>,
    labels: Vec<SurvivalLabel>,
    dim: usize,
}

impl Dataset {
    /// Widens bags to `f64`, resampling each to `bag_size` tiles when given.
    /// Patient `i` is resampled with seed `seed + i`, so the draw is fixed
    /// for the whole run.
    pub fn prepare(
        bags: &[FeatureBag],
        labels: &[SurvivalLabel],
        bag_size: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if bags.is_empty() {
            return Err(Error::Data("dataset has no patients".into()));
        }
        if bags.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} bags for {} labels",
                bags.len(),
                labels.len()
            )));
        }
        let dim = bags[0].dim();
        let mut prepared = Vec::with_capacity(bags.len());
        for (i, bag) in bags.iter().enumerate() {
            if bag.dim() != dim {
                return Err(Error::Data(format!(
                    "patient `{}` has {} features, expected {dim}",
                    bag.patient_id(),
                    bag.dim()
                )));
            }
            let x = match bag_size {
                Some(target) if target != bag.n_tiles() => {
                    resample_bag(bag, target, seed.wrapping_add(i as u64))?.to_f64()
                }
                _ => bag.to_f64(),
            };
            prepared.push(Arc::new(x));
        }
        Ok(Self {
            ids: bags.iter().map(|b| b.patient_id().to_string()).collect(),
            bags: prepared,
            labels: labels.to_vec(),
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[SurvivalLabel] {
        &self.labels
    }

    pub fn bag(&self, i: usize) -> ArrayView2<'_, f64> {
        self.bags[i].view()
    }

    pub fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.bags.iter().map(|b| b.view()).collect()
    }

    pub fn n_events(&self) -> usize {
        self.labels.iter().filter(|l| l.event).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            bags: idx.iter().map(|&i| Arc::clone(&self.bags[i])).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
        }
    }

    /// Copy with tile rows of every bag permuted by `perm_for(patient)`.
    pub fn with_permuted_tiles(
        &self,
        mut perm_for: impl FnMut(usize, usize) -> Vec<usize>,
    ) -> Self {
        let bags = self
            .bags
            .iter()
            .enumerate()
            .map(|(i, b)| Arc::new(b.select(ndarray::Axis(0), &perm_for(i, b.nrows()))))
            .collect();
        Self {
            bags,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(id: &str, n: usize, d: usize) -> FeatureBag {
        FeatureBag::new(
            id,
            Array2::from_shape_fn((n, d), |(i, j)| (i * d + j) as f32),
        )
        .unwrap()
    }

    #[test]
    fn resamples_to_fixed_size() {
        let bags = vec![bag("a", 3, 2), bag("b", 9, 2)];
        let labels = vec![SurvivalLabel::new(1.0, true).unwrap(); 2];
        let ds = Dataset::prepare(&bags, &labels, Some(5), 1).unwrap();
        assert_eq!(ds.bag(0).nrows(), 5);
        assert_eq!(ds.bag(1).nrows(), 5);
        assert_eq!(ds.dim(), 2);
        let sub = ds.subset(&[1]);
        assert_eq!(sub.ids(), &["b".to_string()]);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let bags = vec![bag("a", 3, 2), bag("b", 3, 4)];
        let labels = vec![SurvivalLabel::new(1.0, true).unwrap(); 2];
        assert!(Dataset::prepare(&bags, &labels, None, 0).is_err());
        assert!(Dataset::prepare(&[], &[], None, 0).is_err());
    }
}
