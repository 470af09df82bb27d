use std::path::{Path, PathBuf};

use dismisl_core::data::{generate_synthetic, load_dataset, SyntheticSpec};
use dismisl_core::harness::{Dataset, TrainConfig};
use dismisl_core::pooling::PoolingStrategy;
use dismisl_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Manifest CSV; relative paths resolve against the config file.
    pub manifest: PathBuf,
}

/// Model overrides applied on top of the `train` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<PoolingStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<Vec<usize>>,
    /// Trained model used by `stratify` and `profile` instead of training one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<Vec<u8>>,
}

fn default_n_folds() -> usize {
    5
}
fn default_holdout_fraction() -> f64 {
    0.3
}
fn default_l1_lambdas() -> Vec<f64> {
    vec![0.0, 0.01, 0.05, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_n_folds")]
    pub n_folds: usize,
    /// Share of patients held out as the test cohort when `stratify` or
    /// `profile` trains its own model.
    #[serde(default = "default_holdout_fraction")]
    pub holdout_fraction: f64,
    /// Penalties tried by the mean-feature L1 Cox baseline.
    #[serde(default = "default_l1_lambdas")]
    pub l1_lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a config and applies command-line overrides. Relative paths
    /// are made absolute so the stored copy reproduces the run from anywhere.
    pub fn load(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::fs::canonicalize(if base.as_os_str().is_empty() {
            Path::new(".")
        } else {
            &base
        })
        .map_err(|e| Error::io(&base, e))?;
        if let Some(d) = &mut cfg.data {
            d.manifest = resolve(&base, &d.manifest);
        }
        if let Some(c) = &mut cfg.model.checkpoint {
            *c = resolve(&base, c);
        }
        match out {
            Some(dir) => cfg.output = Some(OutputSection { directory: dir }),
            None => {
                if let Some(o) = &mut cfg.output {
                    o.directory = resolve(&base, &o.directory);
                }
            }
        }
        if let Some(s) = seed {
            cfg.train.seed = s;
            if let Some(spec) = &mut cfg.synthetic {
                spec.seed = s;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either `data` or `synthetic`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of `data` or `synthetic` is required".into(),
                ))
            }
            (None, Some(spec)) => spec.validate()?,
            _ => {}
        }
        if self.output.is_none() {
            return Err(Error::Config(
                "no output directory: set `output.directory` or pass --out".into(),
            ));
        }
        if self.evaluation.n_folds < 2 {
            return Err(Error::Config(format!(
                "n_folds must be at least 2, got {}",
                self.evaluation.n_folds
            )));
        }
        let h = self.evaluation.holdout_fraction;
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie in (0, 1), got {h}"
            )));
        }
        self.train_config().validate()
    }

    pub fn output_dir(&self) -> &Path {
        &self.output.as_ref().expect("validated").directory
    }

    /// `train` section with the `model` overrides applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if let Some(s) = &self.model.strategy {
            t.strategy = s.clone();
        }
        if let Some(h) = self.model.scorer_hidden {
            t.scorer_hidden = h;
        }
        if let Some(h) = &self.model.head_hidden {
            t.head_hidden = h.clone();
        }
        t
    }

    /// Loads or generates the cohort and prepares it for training.
    pub fn dataset(&self) -> Result<Dataset> {
        let (bags, labels) = match (&self.data, &self.synthetic) {
            (Some(d), _) => load_dataset(&d.manifest)?,
            (_, Some(spec)) => generate_synthetic(spec)?,
            _ => unreachable!("validated"),
        };
        Dataset::prepare(&bags, &labels, self.train.bag_size, self.train.seed)
    }
}
