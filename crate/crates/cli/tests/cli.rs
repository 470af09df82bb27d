use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dismisl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dismisl"))
        .args(args)
        .current_dir(cwd)
        .env("DISMISL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

const SYNTH: &str = r#"{
  "synthetic": {"n_patients": 30, "tiles_per_bag_range": [20, 30], "d": 4,
                "signal_mode": "distributional", "signal_strength": 2.0,
                "censoring_fraction": 0.2, "seed": 3},
  "model": {"strategy": {"kind": "percentile", "scenario": 3}, "scorer_hidden": 4, "head_hidden": [4]},
  "train": {"bag_size": 20, "learning_rates": [0.001], "weight_decays": [0.0],
            "max_epochs": 2, "batch_size": 8},
  "evaluation": {"n_folds": 3}
}"#;

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn synth_writes_bags_manifest_and_provenance_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SYNTH);
    for out in ["a", "b"] {
        let o = dismisl(
            &["synth", "--config", cfg.to_str().unwrap(), "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = dir.path().join("a");
    let manifest = String::from_utf8(read(a.join("manifest.csv"))).unwrap();
    assert_eq!(manifest.lines().count(), 31);
    assert_eq!(std::fs::read_dir(a.join("bags")).unwrap().count(), 30);
    let prov: serde_json::Value = serde_json::from_slice(&read(a.join("synthetic.json"))).unwrap();
    assert_eq!(prov["seed"], 3);
    assert_eq!(
        read(a.join("manifest.csv")),
        read(dir.path().join("b/manifest.csv"))
    );
    assert_eq!(
        read(a.join("bags/P0007.dmsb")),
        read(dir.path().join("b/bags/P0007.dmsb"))
    );
    assert!(a.join("config.json").exists());
}

#[test]
fn invalid_censoring_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &SYNTH.replace(
            r#""censoring_fraction": 0.2"#,
            r#""censoring_fraction": 1.0"#,
        ),
    );
    let o = dismisl(
        &["synth", "--config", cfg.to_str().unwrap(), "--out", "o"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("censoring_fraction"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dismisl(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_bag_names_the_patient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SYNTH);
    assert!(dismisl(
        &["synth", "--config", cfg.to_str().unwrap(), "--out", "d"],
        dir.path()
    )
    .status
    .success());
    std::fs::remove_file(dir.path().join("d/bags/P0004.dmsb")).unwrap();
    let data = write_config(
        dir.path(),
        "data.json",
        r#"{"data": {"manifest": "d/manifest.csv"}, "output": {"directory": "cv"}}"#,
    );
    let o = dismisl(&["cv", "--config", data.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("P0004"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dismisl(&["cv", "--config", "nope.json", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn cv_outputs_are_complete_and_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SYNTH);
    for out in ["r1", "r2"] {
        let o = dismisl(
            &["cv", "--config", cfg.to_str().unwrap(), "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let r1 = dir.path().join("r1");
    for f in [
        "report.json",
        "km.csv",
        "km.svg",
        "risks.csv",
        "deciles.csv",
        "fold_0.dmsm",
        "fold_2.dmsm",
    ] {
        assert_eq!(
            read(r1.join(f)),
            read(dir.path().join("r2").join(f)),
            "{f} differs"
        );
    }
    let report: serde_json::Value = serde_json::from_slice(&read(r1.join("report.json"))).unwrap();
    let folds: Vec<f64> = report["fold_c_index"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(folds.len(), 3);
    assert_eq!(
        report["c_index"].as_f64().unwrap(),
        folds.iter().sum::<f64>() / 3.0
    );
    let km = String::from_utf8(read(r1.join("km.csv"))).unwrap();
    assert!(km.starts_with("time,survival,at_risk,group\n"));
    let svg = String::from_utf8(read(r1.join("km.svg"))).unwrap();
    assert!(svg.contains("log-rank"));

    // The stored config alone reproduces the run.
    let o = dismisl(
        &[
            "cv",
            "--config",
            r1.join("config.json").to_str().unwrap(),
            "--out",
            "r3",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(
        read(r1.join("report.json")),
        read(dir.path().join("r3/report.json"))
    );
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SYNTH);
    let c = cfg.to_str().unwrap();
    assert!(dismisl(
        &["cv", "--config", c, "--out", "s1", "--seed", "11"],
        dir.path()
    )
    .status
    .success());
    let stored: serde_json::Value =
        serde_json::from_slice(&read(dir.path().join("s1/config.json"))).unwrap();
    assert_eq!(stored["train"]["seed"], 11);
    assert_eq!(stored["synthetic"]["seed"], 11);
}

#[test]
fn k_sweep_emits_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "k.json",
        &SYNTH.replace(
            r#""n_folds": 3"#,
            r#""n_folds": 3, "sweep": {"k": [1, 3, 5, 7]}"#,
        ),
    );
    let o = dismisl(
        &["cv", "--config", cfg.to_str().unwrap(), "--out", "k"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in [1, 3, 5, 7] {
        assert!(dir
            .path()
            .join(format!("k/percentile_s3_k{k}/report.json"))
            .exists());
    }
    let table = String::from_utf8(read(dir.path().join("k/sweep.csv"))).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn baselines_table_has_six_rows_and_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    // Bags of 8 tiles are too small for the two k=10 baselines only.
    let cfg = write_config(
        dir.path(),
        "b.json",
        &SYNTH
            .replace(r#""bag_size": 20"#, r#""bag_size": null"#)
            .replace("[20, 30]", "[8, 8]"),
    );
    let o = dismisl(
        &["baselines", "--config", cfg.to_str().unwrap(), "--out", "b"],
        dir.path(),
    );
    assert_ne!(o.status.code(), Some(0));
    let table = String::from_utf8(read(dir.path().join("b/baselines.csv"))).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    let names: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "deepdismisl",
            "top_bottom_10",
            "mean_score",
            "max_top_1",
            "max_top_10",
            "mean_feature_l1_cox"
        ]
    );
    for (i, r) in rows.iter().enumerate() {
        let expected = if i == 1 || i == 4 { ",failed," } else { ",ok," };
        assert!(r.contains(expected), "{r}");
    }
    assert!(dir.path().join("b/mean_score/report.json").exists());
}

#[test]
fn train_then_stratify_and_profile_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SYNTH);
    let c = cfg.to_str().unwrap();
    assert!(dismisl(&["train", "--config", c, "--out", "t"], dir.path())
        .status
        .success());
    let model = dir.path().join("t/model.dmsm");
    assert!(model.exists());
    let with_ckpt = write_config(
        dir.path(),
        "ck.json",
        &SYNTH.replacen(
            r#""model": {"#,
            &format!(r#""model": {{"checkpoint": "{}", "#, model.display()),
            1,
        ),
    );
    let ck = with_ckpt.to_str().unwrap();
    let o = dismisl(&["stratify", "--config", ck, "--out", "st"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value =
        serde_json::from_slice(&read(dir.path().join("st/stratification.json"))).unwrap();
    assert_eq!(s["assignments"].as_array().unwrap().len(), 30);
    assert!(dir.path().join("st/km.svg").exists());

    let o = dismisl(&["profile", "--config", ck, "--out", "pr"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(read(dir.path().join("pr/deciles.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("decile,n_patients,p0,p0.1,p1,p99,p99.9,p100\n"));
}
