use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dismisl_core::data::{
    generate_synthetic, write_bag, write_manifest, Manifest, ManifestEntry, SyntheticSpec,
};
use dismisl_core::harness::report::{
    km_svg, write_json, write_profile_csv, write_stratification_km, write_text,
};
use dismisl_core::harness::{
    cross_validate, decile_score_profile, risk_stratify, stratified_split, train, CvOutcome,
    Dataset, Estimator, TrainConfig, TrainedModel,
};
use dismisl_core::pooling::{scenario_preset, PercentileScheme, PoolingStrategy};
use dismisl_core::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Creates the output directory and stores the effective config in it.
fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.output_dir().to_path_buf();
    ensure_dir(&out)?;
    write_json(&out.join("config.json"), cfg)?;
    Ok(out)
}

#[derive(Serialize)]
struct Provenance<'a> {
    generator: &'static str,
    version: &'static str,
    seed: u64,
    spec: &'a SyntheticSpec,
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let spec = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("`synth` needs a `synthetic` section".into()))?;
    let out = prepare_output(cfg)?;
    let (bags, labels) = generate_synthetic(spec)?;
    let bag_dir = out.join("bags");
    ensure_dir(&bag_dir)?;
    let mut entries = Vec::with_capacity(bags.len());
    for (bag, label) in bags.iter().zip(&labels) {
        let rel = PathBuf::from("bags").join(format!("{}.dmsb", bag.patient_id()));
        write_bag(bag, out.join(&rel))?;
        entries.push(ManifestEntry {
            patient_id: bag.patient_id().to_string(),
            bag_path: rel,
            label: *label,
        });
    }
    write_manifest(out.join("manifest.csv"), &Manifest::new(entries)?)?;
    write_json(
        &out.join("synthetic.json"),
        &Provenance {
            generator: "dismisl synth",
            version: env!("CARGO_PKG_VERSION"),
            seed: spec.seed,
            spec,
        },
    )?;
    eprintln!("wrote {} bags to {}", bags.len(), bag_dir.display());
    Ok(())
}

fn risks_csv(data: &Dataset, risks: &[f64], groups: Option<&[&str]>) -> String {
    let mut s = String::from("patient_id,time,event,risk");
    s.push_str(if groups.is_some() { ",group\n" } else { "\n" });
    for (i, (id, l)) in data.ids().iter().zip(data.labels()).enumerate() {
        let _ = write!(s, "{id},{},{},{}", l.time, l.event_indicator(), risks[i]);
        if let Some(g) = groups {
            let _ = write!(s, ",{}", g[i]);
        }
        s.push('\n');
    }
    s
}

fn group_names(s: &dismisl_core::harness::Stratification) -> Vec<&'static str> {
    s.assignments
        .iter()
        .map(|a| match a.group {
            dismisl_core::harness::RiskGroup::High => "high",
            dismisl_core::harness::RiskGroup::Low => "low",
        })
        .collect()
}

/// Trains on a stratified share of the cohort, holding out the early
/// stopping set, and saves the model.
pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let out = prepare_output(cfg)?;
    let tc = cfg.train_config();
    let data = cfg.dataset()?;
    let all: Vec<usize> = (0..data.len()).collect();
    let (fit, hold) = stratified_split(&data, &all, tc.early_stopping_fraction, tc.seed)?;
    let model = train(&tc, &data.subset(&fit), &data.subset(&hold))?;
    model.save(out.join("model.dmsm"))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        algorithm: String,
        n_train: usize,
        n_validation: usize,
        threshold: f64,
        training: &'a dismisl_core::harness::TrainingMetadata,
    }
    write_json(
        &out.join("training.json"),
        &Summary {
            algorithm: tc.strategy.label(),
            n_train: fit.len(),
            n_validation: hold.len(),
            threshold: model.threshold,
            training: &model.metadata,
        },
    )?;
    let risks = model.predict(&data)?;
    write_text(&out.join("risks.csv"), &risks_csv(&data, &risks, None))?;
    eprintln!(
        "trained {}: validation loss {:.4} per event at epoch {}",
        tc.strategy.label(),
        model.metadata.chosen.best_validation_nll,
        model.metadata.chosen.best_epoch
    );
    Ok(())
}

fn write_cv_outputs(dir: &Path, data: &Dataset, cv: &CvOutcome) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("report.json"), &cv.report)?;
    for (i, m) in cv.models.iter().enumerate() {
        m.save(dir.join(format!("fold_{i}.dmsm")))?;
    }
    write_stratification_km(&dir.join("km.csv"), &cv.stratification)?;
    write_text(
        &dir.join("km.svg"),
        &km_svg(
            &cv.stratification,
            &format!("{} (cross-validated)", cv.report.algorithm),
            0.0,
        ),
    )?;
    write_text(
        &dir.join("risks.csv"),
        &risks_csv(data, &cv.risks, Some(&group_names(&cv.stratification))),
    )?;
    if let Some(p) = &cv.report.decile_profile {
        write_profile_csv(&dir.join("deciles.csv"), p)?;
    }
    Ok(())
}

fn sweep_variants(cfg: &RunConfig, base: &TrainConfig) -> Result<Vec<PoolingStrategy>> {
    let Some(sweep) = &cfg.evaluation.sweep else {
        return Ok(vec![base.strategy.clone()]);
    };
    let scheme: &PercentileScheme = match &base.strategy {
        PoolingStrategy::Percentile(s) => s,
        other => {
            return Err(Error::Config(format!(
                "sweeps apply to percentile strategies, not `{}`",
                other.label()
            )))
        }
    };
    let schemes: Vec<PercentileScheme> = match &sweep.scenarios {
        Some(ids) => ids
            .iter()
            .map(|&id| scenario_preset(id)?.with_k(scheme.k()))
            .collect::<Result<_>>()?,
        None => vec![scheme.clone()],
    };
    let ks = sweep.k.clone().unwrap_or_else(|| vec![scheme.k()]);
    let mut out = Vec::new();
    for s in &schemes {
        for &k in &ks {
            out.push(PoolingStrategy::Percentile(s.with_k(k)?));
        }
    }
    Ok(out)
}

fn summary_header(n_folds: usize) -> String {
    let mut s = String::from("algorithm,strategy,status,mean_c_index,sd_c_index");
    for i in 1..=n_folds {
        let _ = write!(s, ",fold_{i}");
    }
    s.push_str(",error\n");
    s
}

fn summary_row(
    name: &str,
    strategy: &str,
    n_folds: usize,
    result: &std::result::Result<CvOutcome, Error>,
) -> String {
    let mut s = format!("{name},{strategy},");
    match result {
        Ok(cv) => {
            let _ = write!(s, "ok,{},{}", cv.report.c_index, cv.report.c_index_sd);
            for c in &cv.report.fold_c_index {
                let _ = write!(s, ",{c}");
            }
            s.push_str(",\n");
        }
        Err(e) => {
            s.push_str("failed,,");
            s.push_str(&",".repeat(n_folds));
            let msg = e.to_string().replace(['"', '\n'], " ");
            let _ = writeln!(s, ",\"{msg}\"");
        }
    }
    s
}

/// Cross-validates the configured strategy, or each variant of a sweep.
pub fn cv(cfg: &RunConfig) -> Result<()> {
    let out = prepare_output(cfg)?;
    let base = cfg.train_config();
    let variants = sweep_variants(cfg, &base)?;
    let data = cfg.dataset()?;
    let n_folds = cfg.evaluation.n_folds;
    if cfg.evaluation.sweep.is_none() {
        let outcome = cross_validate(&base, &data, n_folds)?;
        write_cv_outputs(&out, &data, &outcome)?;
        eprintln!(
            "{}: mean C-index {:.4} (sd {:.4})",
            outcome.report.algorithm, outcome.report.c_index, outcome.report.c_index_sd
        );
        return Ok(());
    }
    let mut table = summary_header(n_folds);
    let mut first_err = None;
    for strategy in variants {
        let label = strategy.label();
        let tc = TrainConfig {
            strategy,
            ..base.clone()
        };
        let result = cross_validate(&tc, &data, n_folds);
        if let Ok(o) = &result {
            write_cv_outputs(&out.join(&label), &data, o)?;
            eprintln!("{label}: mean C-index {:.4}", o.report.c_index);
        }
        table.push_str(&summary_row(&label, &label, n_folds, &result));
        if let Err(e) = result {
            eprintln!("{label}: {e}");
            first_err.get_or_insert(e);
        }
    }
    write_text(&out.join("sweep.csv"), &table)?;
    first_err.map_or(Ok(()), Err)
}

/// The six algorithms compared by `baselines`, as (row name, config).
pub fn baseline_configs(
    base: &TrainConfig,
    l1_lambdas: &[f64],
) -> Result<Vec<(&'static str, TrainConfig)>> {
    let deep = match &base.strategy {
        s @ (PoolingStrategy::Percentile(_) | PoolingStrategy::AttentionPercentile(_)) => s.clone(),
        _ => PoolingStrategy::Percentile(scenario_preset(7)?.with_k(3)?),
    };
    let with = |s: PoolingStrategy| TrainConfig {
        strategy: s,
        estimator: Estimator::Adam,
        ..base.clone()
    };
    let mut linear = with(PoolingStrategy::MeanFeature);
    linear.estimator = Estimator::l1_cox(l1_lambdas.to_vec());
    linear.head_hidden = Vec::new();
    Ok(vec![
        ("deepdismisl", with(deep)),
        ("top_bottom_10", with(PoolingStrategy::TopBottomK(10))),
        ("mean_score", with(PoolingStrategy::MeanScore)),
        ("max_top_1", with(PoolingStrategy::MaxTopK(1))),
        ("max_top_10", with(PoolingStrategy::MaxTopK(10))),
        ("mean_feature_l1_cox", linear),
    ])
}

/// Cross-validates every baseline; one failure does not stop the others.
pub fn baselines(cfg: &RunConfig) -> Result<()> {
    let out = prepare_output(cfg)?;
    let data = cfg.dataset()?;
    let n_folds = cfg.evaluation.n_folds;
    let mut table = summary_header(n_folds);
    let mut first_err = None;
    for (name, tc) in baseline_configs(&cfg.train_config(), &cfg.evaluation.l1_lambdas)? {
        let result = tc
            .validate()
            .and_then(|_| cross_validate(&tc, &data, n_folds));
        match &result {
            Ok(o) => {
                write_cv_outputs(&out.join(name), &data, o)?;
                eprintln!("{name}: mean C-index {:.4}", o.report.c_index);
            }
            Err(e) => eprintln!("{name}: failed: {e}"),
        }
        table.push_str(&summary_row(name, &tc.strategy.label(), n_folds, &result));
        if let Err(e) = result {
            first_err.get_or_insert(e.context(name));
        }
    }
    write_text(&out.join("baselines.csv"), &table)?;
    first_err.map_or(Ok(()), Err)
}

/// Model plus the cohort to evaluate it on: a saved checkpoint scores the
/// whole dataset, otherwise a model is trained on a stratified share and
/// the rest is the held-out cohort.
fn model_and_cohort(cfg: &RunConfig, out: &Path) -> Result<(TrainedModel, Dataset)> {
    let data = cfg.dataset()?;
    if let Some(path) = &cfg.model.checkpoint {
        return Ok((TrainedModel::load(path)?, data));
    }
    let tc = cfg.train_config();
    let all: Vec<usize> = (0..data.len()).collect();
    let (dev, test) = stratified_split(&data, &all, cfg.evaluation.holdout_fraction, tc.seed)?;
    let (fit, hold) = stratified_split(
        &data,
        &dev,
        tc.early_stopping_fraction,
        tc.seed.wrapping_add(1),
    )?;
    let model = train(&tc, &data.subset(&fit), &data.subset(&hold))?;
    model.save(out.join("model.dmsm"))?;
    Ok((model, data.subset(&test)))
}

pub fn stratify(cfg: &RunConfig) -> Result<()> {
    let out = prepare_output(cfg)?;
    let (model, cohort) = model_and_cohort(cfg, &out)?;
    let s = risk_stratify(&model, &cohort)?;
    write_json(&out.join("stratification.json"), &s)?;
    write_stratification_km(&out.join("km.csv"), &s)?;
    write_text(
        &out.join("km.svg"),
        &km_svg(
            &s,
            &format!("{} (held-out cohort)", model.strategy.label()),
            0.0,
        ),
    )?;
    match (&s.logrank, &s.note) {
        (Some(lr), _) => eprintln!("log-rank chi2 {:.3}, p {:.3e}", lr.chi_square, lr.p_value),
        (None, Some(note)) => eprintln!("warning: {note}"),
        _ => {}
    }
    Ok(())
}

pub fn profile(cfg: &RunConfig) -> Result<()> {
    let out = prepare_output(cfg)?;
    let (model, cohort) = model_and_cohort(cfg, &out)?;
    let p = decile_score_profile(&model, &cohort)?;
    write_profile_csv(&out.join("deciles.csv"), &p)?;
    write_json(&out.join("deciles.json"), &p)?;
    Ok(())
}
