//! Dense-network numerics for the tile scorer and the risk head.
//!
//! The scorer is applied to every tile independently (a width-1 convolution
//! over the tile axis is exactly a per-tile dense layer): `d -> hidden (relu)
//! -> 1`. The head maps the pooled vector to a single log relative hazard:
//! `m -> hidden.. (relu) -> 1`. Everything is computed in `f64`.

mod adam;
mod checkpoint;
mod model;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, LayerSpec};
pub use model::{backward, forward_batch, head_forward, score_tiles, BatchForward, PatientForward};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out_dim x in_dim`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Row-wise application to a batch (`rows x in_dim`).
    fn forward(&self, x: ndarray::ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        let act = self.activation;
        for mut row in z.rows_mut() {
            row += &self.bias;
            row.mapv_inplace(|v| act.apply(v));
        }
        z
    }
}

/// Layer sizes of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub scorer_hidden: usize,
    pub head_input: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: Vec<usize>,
    #[serde(default)]
    pub attention: bool,
}

fn default_hidden() -> usize {
    128
}

fn default_head_hidden() -> Vec<usize> {
    vec![128]
}

impl ModelDims {
    pub fn new(input_dim: usize, head_input: usize) -> Self {
        Self {
            input_dim,
            scorer_hidden: default_hidden(),
            head_input,
            head_hidden: default_head_hidden(),
            attention: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.scorer_hidden == 0 || self.head_input == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        if self.head_hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("head hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Scorer, head and the optional attention vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub scorer: Vec<DenseLayer>,
    pub head: Vec<DenseLayer>,
    pub attention: Option<Array1<f64>>,
}

impl ModelParams {
    /// All-zero parameters with the layout described by `dims`.
    pub fn zeros(dims: &ModelDims) -> Result<Self> {
        dims.validate()?;
        let scorer = vec![
            DenseLayer::zeros(dims.input_dim, dims.scorer_hidden, Activation::Relu),
            DenseLayer::zeros(dims.scorer_hidden, 1, Activation::Identity),
        ];
        let mut head = Vec::with_capacity(dims.head_hidden.len() + 1);
        let mut width = dims.head_input;
        for &h in &dims.head_hidden {
            head.push(DenseLayer::zeros(width, h, Activation::Relu));
            width = h;
        }
        head.push(DenseLayer::zeros(width, 1, Activation::Identity));
        Ok(Self {
            scorer,
            head,
            attention: dims.attention.then(|| Array1::zeros(dims.scorer_hidden)),
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input_dim: self.scorer[0].in_dim(),
            scorer_hidden: self.scorer[0].out_dim(),
            head_input: self.head[0].in_dim(),
            head_hidden: self.head[..self.head.len() - 1]
                .iter()
                .map(DenseLayer::out_dim)
                .collect(),
            attention: self.attention.is_some(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let zero = |l: &DenseLayer| DenseLayer::zeros(l.in_dim(), l.out_dim(), l.activation);
        Self {
            scorer: self.scorer.iter().map(zero).collect(),
            head: self.head.iter().map(zero).collect(),
            attention: self.attention.as_ref().map(|a| Array1::zeros(a.len())),
        }
    }

    /// Parameter blocks in declaration order: scorer layers, head layers
    /// (weights then bias for each), attention vector.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in self.scorer.iter().chain(&self.head) {
            out.push(layer.weights.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        if let Some(a) = &self.attention {
            out.push(a.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.scorer.iter_mut().chain(self.head.iter_mut()) {
            out.push(layer.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        if let Some(a) = &mut self.attention {
            out.push(a.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        let a = self.blocks();
        let b = other.blocks();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
            && self.dims() == other.dims()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_invariants(&self) -> Result<()> {
        let (Some(first), Some(last)) = (self.scorer.first(), self.scorer.last()) else {
            return Err(Error::Shape("scorer has no layers".into()));
        };
        if last.out_dim() != 1 || self.head.last().map(DenseLayer::out_dim) != Some(1) {
            return Err(Error::Shape(
                "scorer and head must end in a single output".into(),
            ));
        }
        for layers in [&self.scorer, &self.head] {
            for pair in layers.windows(2) {
                if pair[0].out_dim() != pair[1].in_dim() {
                    return Err(Error::Shape(format!(
                        "layer output {} feeds input {}",
                        pair[0].out_dim(),
                        pair[1].in_dim()
                    )));
                }
            }
            for l in layers {
                if l.bias.len() != l.out_dim() {
                    return Err(Error::Shape("bias length differs from layer width".into()));
                }
            }
        }
        if let Some(a) = &self.attention {
            if a.len() != first.out_dim() {
                return Err(Error::Shape(
                    "attention vector must match scorer hidden width".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Weights `~ N(0, 1 / in_dim)`, zero biases; deterministic in `seed`.
pub fn init_params(dims: &ModelDims, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in params.scorer.iter_mut().chain(params.head.iter_mut()) {
        let normal =
            Normal::new(0.0, 1.0 / (layer.in_dim() as f64).sqrt()).expect("positive scale");
        layer.weights.mapv_inplace(|_| normal.sample(&mut rng));
    }
    if let Some(a) = &mut params.attention {
        let normal = Normal::new(0.0, 1.0 / (a.len() as f64).sqrt()).expect("positive scale");
        a.mapv_inplace(|_| normal.sample(&mut rng));
    }
    Ok(params)
}
