//! Acceptance checks for the whole pipeline, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines are always visible:
//! `cargo test -p dismisl-core --test acceptance`. Numeric arguments pick a
//! subset, e.g. `-- 1 2 3`. The process exits nonzero if any check fails.

use std::time::Instant;

use dismisl_core::data::{
    generate_synthetic, generate_synthetic_cohort, SignalMode, SurvivalLabel, SyntheticSpec,
};
use dismisl_core::harness::{
    cross_validate, risk_stratify, spearman, stratified_split, train, Dataset, Estimator,
    TrainConfig,
};
use dismisl_core::network::{backward, forward_batch, init_params, ModelDims, ModelParams};
use dismisl_core::pooling::{scenario_preset, PoolingStrategy};
use dismisl_core::survival::{
    c_index, cox_nll, cox_nll_grad, km_estimate, logrank_test, write_km_csv,
};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn percentile(scenario: u8, k: usize) -> PoolingStrategy {
    PoolingStrategy::Percentile(scenario_preset(scenario).unwrap().with_k(k).unwrap())
}

fn deep() -> PoolingStrategy {
    percentile(7, 3)
}

/// Small widths: at 500 patients the wide default scorer overfits.
fn experiment_config(strategy: PoolingStrategy, seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        strategy,
        bag_size: None,
        learning_rates: vec![1e-3],
        weight_decays: vec![0.0],
        scorer_hidden: 8,
        head_hidden: vec![16],
        max_epochs: 60,
        patience: 15,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    };
    if matches!(c.strategy, PoolingStrategy::MeanFeature) {
        c.estimator = Estimator::l1_cox(vec![0.0, 0.01, 0.05, 0.1]);
    }
    c
}

fn spec(mode: SignalMode, strength: f64, n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec::new(n, (200, 200), 32, mode, strength, 0.3, seed)
}

/// Cross-validated C-indices, regenerating the cohort only when it changes.
#[derive(Default)]
struct Lab {
    current: Option<((u8, u64, u64), Dataset)>,
    results: Vec<((u8, u64, u64), String, f64)>,
}

impl Lab {
    fn cv(&mut self, mode: SignalMode, strength: f64, seed: u64, strategy: PoolingStrategy) -> f64 {
        let key = (mode as u8, strength.to_bits(), seed);
        let label = strategy.label();
        if let Some(r) = self.results.iter().find(|r| r.0 == key && r.1 == label) {
            return r.2;
        }
        if self.current.as_ref().map(|c| c.0) != Some(key) {
            let (bags, labels) = generate_synthetic(&spec(mode, strength, 500, seed)).unwrap();
            self.current = Some((key, Dataset::prepare(&bags, &labels, None, seed).unwrap()));
        }
        let data = &self.current.as_ref().unwrap().1;
        let c = cross_validate(&experiment_config(strategy, seed), data, 5)
            .unwrap()
            .report
            .c_index;
        self.results.push((key, label, c));
        c
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|c| format!("{c:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn all_strategies() -> Vec<PoolingStrategy> {
    let mut out: Vec<PoolingStrategy> = (1..=7)
        .flat_map(|s| [percentile(s, 1), percentile(s, 3)])
        .collect();
    out.extend([
        PoolingStrategy::MeanScore,
        PoolingStrategy::MaxTopK(1),
        PoolingStrategy::MaxTopK(10),
        PoolingStrategy::TopBottomK(10),
        PoolingStrategy::AttentionPercentile(scenario_preset(7).unwrap().with_k(3).unwrap()),
    ]);
    out
}

fn random_params(strategy: &PoolingStrategy, d: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let dims = ModelDims {
        input_dim: d,
        scorer_hidden: 5,
        head_input: strategy.arity(d),
        head_hidden: vec![4],
        attention: strategy.uses_attention(),
    };
    let mut p = init_params(&dims, rng.gen()).unwrap();
    // nonzero biases keep every unit away from the trivial all-zero regime
    for block in p.blocks_mut() {
        for v in block {
            *v += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    p
}

fn random_bag(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

fn labels(pairs: &[(f64, bool)]) -> Vec<SurvivalLabel> {
    pairs
        .iter()
        .map(|&(t, e)| SurvivalLabel::new(t, e).unwrap())
        .collect()
}

fn gradient_check(_: &mut Lab) -> Outcome {
    let t0 = Instant::now();
    let h = 1e-5;
    // below this magnitude the error is taken as absolute
    let floor = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let bags: Vec<Array2<f64>> = (0..4).map(|_| random_bag(10, 6, &mut rng)).collect();
    let views: Vec<ArrayView2<f64>> = bags.iter().map(|b| b.view()).collect();
    let y = labels(&[(3.0, true), (1.5, true), (4.2, false), (2.2, true)]);
    let mut worst = (0.0f64, String::new());
    let mut n_checked = 0;
    for strategy in all_strategies() {
        let params = random_params(&strategy, 6, &mut rng);
        let loss = |p: &ModelParams| {
            cox_nll(&forward_batch(p, &strategy, &views).unwrap().risks(), &y).unwrap()
        };
        let (_, grads) = backward(&params, &views, &strategy, &y).unwrap();
        let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
        for (b, block) in analytic.iter().enumerate() {
            for (j, &a) in block.iter().enumerate() {
                let mut p = params.clone();
                p.blocks_mut()[b][j] += h;
                let up = loss(&p);
                p.blocks_mut()[b][j] -= 2.0 * h;
                let down = loss(&p);
                let fd = (up - down) / (2.0 * h);
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
                n_checked += 1;
                if rel > worst.0 {
                    worst = (rel, strategy.label());
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst.0 < 1e-4 && secs < 10.0,
        format!(
            "max relative error {:.2e} ({}) over {n_checked} parameters, {secs:.1}s",
            worst.0, worst.1
        ),
    )
}

fn naive_cox(risks: &[f64], y: &[SurvivalLabel]) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut nll = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        if !y[i].event {
            continue;
        }
        let denom: f64 = (0..n)
            .filter(|&j| y[j].time >= y[i].time)
            .map(|j| risks[j].exp())
            .sum();
        nll += denom.ln() - risks[i];
        grad[i] -= 1.0;
        for k in 0..n {
            if y[k].time >= y[i].time {
                grad[k] += risks[k].exp() / denom;
            }
        }
    }
    (nll, grad)
}

fn naive_c_index(risks: &[f64], y: &[SurvivalLabel]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            let (early, late) = if y[i].time < y[j].time {
                (i, j)
            } else if y[j].time < y[i].time {
                (j, i)
            } else {
                continue;
            };
            if !y[early].event {
                continue;
            }
            den += 1.0;
            num += match risks[early].partial_cmp(&risks[late]).unwrap() {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    (den > 0.0).then(|| num / den)
}

fn distinct_event_times(y: &[SurvivalLabel]) -> Vec<f64> {
    let mut t: Vec<f64> = y.iter().filter(|l| l.event).map(|l| l.time).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn naive_km(y: &[SurvivalLabel]) -> Vec<(f64, f64, usize)> {
    let times = distinct_event_times(y);
    times
        .iter()
        .map(|&s| {
            let surv: f64 = times
                .iter()
                .filter(|&&u| u <= s)
                .map(|&u| {
                    let n = y.iter().filter(|l| l.time >= u).count() as f64;
                    let d = y.iter().filter(|l| l.event && l.time == u).count() as f64;
                    1.0 - d / n
                })
                .product();
            (s, surv, y.iter().filter(|l| l.time >= s).count())
        })
        .collect()
}

fn naive_logrank(a: &[SurvivalLabel], b: &[SurvivalLabel]) -> Option<f64> {
    let all: Vec<SurvivalLabel> = a.iter().chain(b).copied().collect();
    let (mut o_minus_e, mut var) = (0.0, 0.0);
    for s in distinct_event_times(&all) {
        let na = a.iter().filter(|l| l.time >= s).count() as f64;
        let n = all.iter().filter(|l| l.time >= s).count() as f64;
        let da = a.iter().filter(|l| l.event && l.time == s).count() as f64;
        let d = all.iter().filter(|l| l.event && l.time == s).count() as f64;
        o_minus_e += da - d * na / n;
        if n > 1.0 {
            var += d * (na / n) * (1.0 - na / n) * (n - d) / (n - 1.0);
        }
    }
    (var > 0.0).then(|| o_minus_e * o_minus_e / var)
}

/// Two-sided normal tail at sqrt(chi2) by composite Simpson quadrature.
fn quadrature_p(chi2: f64) -> f64 {
    let z = chi2.sqrt();
    let m = 20_000;
    let step = z / m as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = phi(0.0) + phi(z);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(i as f64 * step);
    }
    (1.0 - 2.0 * s * step / 3.0).max(0.0)
}

fn oracles(_: &mut Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = [0.0f64; 6];
    let mut mismatches = Vec::new();
    for inst in 0..100 {
        let n = rng.gen_range(2..=12);
        let mut pairs: Vec<(f64, bool)> = (0..n)
            .map(|_| (rng.gen_range(1..=6) as f64 * 0.5, rng.gen_bool(0.6)))
            .collect();
        pairs[0].1 = true;
        let y = labels(&pairs);
        let tied = rng.gen_bool(0.5);
        let risks: Vec<f64> = (0..n)
            .map(|_| {
                let r = 2.0 * rng.sample::<f64, _>(StandardNormal);
                if tied {
                    r.round() * 0.5
                } else {
                    r
                }
            })
            .collect();

        let (nll, grad) = naive_cox(&risks, &y);
        worst[0] = worst[0].max((cox_nll(&risks, &y).unwrap() - nll).abs());
        for (g, o) in cox_nll_grad(&risks, &y).unwrap().iter().zip(&grad) {
            worst[1] = worst[1].max((g - o).abs());
        }

        match (c_index(&risks, &y), naive_c_index(&risks, &y)) {
            (Ok(c), Some(o)) => worst[2] = worst[2].max((c - o).abs()),
            (Err(_), None) => {}
            _ => mismatches.push(format!("c-index definedness, instance {inst}")),
        }

        let km = km_estimate(&y);
        let oracle = naive_km(&y);
        if km.event_times.len() != oracle.len() {
            mismatches.push(format!("km steps, instance {inst}"));
        } else {
            for (i, (t, s, r)) in oracle.iter().enumerate() {
                if km.event_times[i] != *t || km.at_risk[i] != *r {
                    mismatches.push(format!("km step {i}, instance {inst}"));
                }
                worst[3] = worst[3].max((km.survival[i] - s).abs());
            }
        }

        let cut = rng.gen_range(1..n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let a: Vec<SurvivalLabel> = idx[..cut].iter().map(|&i| y[i]).collect();
        let b: Vec<SurvivalLabel> = idx[cut..].iter().map(|&i| y[i]).collect();
        match (logrank_test(&a, &b), naive_logrank(&a, &b)) {
            (Ok(r), Some(chi2)) => {
                worst[4] = worst[4].max((r.chi_square - chi2).abs());
                worst[5] = worst[5].max((r.p_value - quadrature_p(chi2)).abs());
            }
            (Err(_), None) => {}
            _ => mismatches.push(format!("log-rank definedness, instance {inst}")),
        }
    }
    let pass = mismatches.is_empty() && worst[..5].iter().all(|&e| e < 1e-9) && worst[5] < 1e-6;
    outcome(
        pass,
        format!(
            "max abs error nll {:.1e}, grad {:.1e}, c {:.1e}, km {:.1e}, chi2 {:.1e}, p {:.1e}; {} structural mismatches{}",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4],
            worst[5],
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn permutation_invariance(_: &mut Lab) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let d = 6;
    let bags: Vec<Array2<f64>> = (0..50)
        .map(|_| {
            let n = rng.gen_range(20..=60);
            random_bag(n, d, &mut rng)
        })
        .collect();
    let mut strategies = all_strategies();
    strategies.push(PoolingStrategy::MeanFeature);
    let mut worst = (0.0f64, String::new());
    for strategy in &strategies {
        let params = random_params(strategy, d, &mut rng);
        for bag in &bags {
            let mut perm: Vec<usize> = (0..bag.nrows()).collect();
            perm.shuffle(&mut rng);
            let shuffled = bag.select(ndarray::Axis(0), &perm);
            let r = forward_batch(&params, strategy, &[bag.view(), shuffled.view()])
                .unwrap()
                .risks();
            let diff = (r[0] - r[1]).abs();
            if diff > worst.0 {
                worst = (diff, strategy.label());
            }
        }
    }
    outcome(
        worst.0 < 1e-12,
        format!(
            "max |risk change| {:.1e}{} over {} strategies x 50 bags",
            worst.0,
            if worst.1.is_empty() {
                String::new()
            } else {
                format!(" ({})", worst.1)
            },
            strategies.len()
        ),
    )
}

fn scenario_trend(lab: &mut Lab) -> Outcome {
    let t0 = Instant::now();
    let mut table = vec![[0.0; 7]; SEEDS.len()];
    for (row, &seed) in table.iter_mut().zip(&SEEDS) {
        for s in 1..=7u8 {
            row[s as usize - 1] = lab.cv(SignalMode::Distributional, 3.0, seed, percentile(s, 1));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let means: Vec<f64> = (0..7)
        .map(|j| mean(&table.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let idx: Vec<f64> = (1..=7).map(f64::from).collect();
    let rhos: Vec<f64> = table.iter().map(|r| spearman(&idx, r)).collect();
    let positive = rhos.iter().filter(|&&r| r > 0.0).count();
    let gain = means[6] - means[0];
    outcome(
        gain >= 0.03 && positive >= 4 && secs < 600.0,
        format!(
            "scenario means {}; S7-S1 {gain:.3}; spearman {} ({positive}/5 positive); {secs:.0}s",
            fmt(&means),
            fmt(&rhos)
        ),
    )
}

fn k_trend(lab: &mut Lab) -> Outcome {
    let mut k1 = Vec::new();
    let mut k3 = Vec::new();
    for &seed in &SEEDS {
        k1.push(lab.cv(SignalMode::Distributional, 3.0, seed, percentile(7, 1)));
        k3.push(lab.cv(SignalMode::Distributional, 3.0, seed, deep()));
    }
    let wins = k1.iter().zip(&k3).filter(|(a, b)| b >= a).count();
    outcome(
        wins >= 4,
        format!(
            "k=1 {} | k=3 {} ({wins}/5 seeds k=3 >= k=1)",
            fmt(&k1),
            fmt(&k3)
        ),
    )
}

fn baseline_contrast(lab: &mut Lab) -> Outcome {
    let algorithms = [
        deep(),
        PoolingStrategy::TopBottomK(10),
        PoolingStrategy::MeanScore,
        PoolingStrategy::MaxTopK(1),
        PoolingStrategy::MaxTopK(10),
        PoolingStrategy::MeanFeature,
    ];
    let mut wins = 0;
    let mut rows = Vec::new();
    for &seed in &SEEDS {
        let cs: Vec<f64> = algorithms
            .iter()
            .map(|a| lab.cv(SignalMode::Distributional, 3.0, seed, a.clone()))
            .collect();
        if cs[1..].iter().all(|&c| cs[0] > c) {
            wins += 1;
        }
        rows.push(fmt(&cs));
    }
    let mut deep_ext = Vec::new();
    let mut tb_ext = Vec::new();
    for &seed in &SEEDS {
        deep_ext.push(lab.cv(SignalMode::Extreme, 3.0, seed, deep()));
        tb_ext.push(lab.cv(
            SignalMode::Extreme,
            3.0,
            seed,
            PoolingStrategy::TopBottomK(10),
        ));
    }
    let gap = mean(&deep_ext) - mean(&tb_ext);
    outcome(
        wins >= 4 && gap.abs() < 0.03,
        format!(
            "distributional [deep tb10 mean max1 max10 l1cox] per seed: {}; best in {wins}/5 | extreme deep {:.3} vs top_bottom_10 {:.3}, gap {gap:.3}",
            rows.join(" / "),
            mean(&deep_ext),
            mean(&tb_ext)
        ),
    )
}

fn stratification(_: &mut Lab) -> Outcome {
    let mut ps = Vec::new();
    for &seed in &SEEDS {
        let cohort =
            generate_synthetic_cohort(&spec(SignalMode::Distributional, 3.0, 700, seed)).unwrap();
        let all = Dataset::prepare(&cohort.bags, &cohort.labels, None, seed).unwrap();
        let dev = all.subset(&(0..500).collect::<Vec<_>>());
        let held_out = all.subset(&(500..700).collect::<Vec<_>>());
        let cfg = experiment_config(deep(), seed);
        let (fit, stop) = stratified_split(
            &dev,
            &(0..500).collect::<Vec<_>>(),
            cfg.early_stopping_fraction,
            seed + 1,
        )
        .unwrap();
        let model = train(&cfg, &dev.subset(&fit), &dev.subset(&stop)).unwrap();
        let s = risk_stratify(&model, &held_out).unwrap();
        ps.push(s.logrank.map_or(1.0, |l| l.p_value));
    }
    let hits = ps.iter().filter(|&&p| p < 0.05).count();
    outcome(
        hits >= 4,
        format!(
            "held-out log-rank p {} ({hits}/5 below 0.05)",
            ps.iter()
                .map(|p| format!("{p:.1e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn null_control(lab: &mut Lab) -> Outcome {
    let cs: Vec<f64> = SEEDS
        .iter()
        .map(|&s| lab.cv(SignalMode::Distributional, 0.0, s, deep()))
        .collect();
    let m = mean(&cs);
    outcome(
        (0.44..=0.56).contains(&m),
        format!("C-index {} mean {m:.3}", fmt(&cs)),
    )
}

/// Every report a small cross-validation run writes, as bytes.
fn report_bytes(threads: usize) -> Vec<(String, Vec<u8>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let mut sp = spec(SignalMode::Distributional, 3.0, 120, 5);
        sp.tiles_per_bag_range = (40, 80);
        sp.d = 8;
        let (bags, y) = generate_synthetic(&sp).unwrap();
        let data = Dataset::prepare(&bags, &y, Some(48), 5).unwrap();
        let mut cfg = experiment_config(deep(), 5);
        cfg.max_epochs = 8;
        cfg.learning_rates = vec![1e-3, 3e-3];
        let cv = cross_validate(&cfg, &data, 3).unwrap();
        let mut km = Vec::new();
        write_km_csv(
            &mut km,
            &[("high", &cv.report.km_high), ("low", &cv.report.km_low)],
        )
        .unwrap();
        let mut deciles = Vec::new();
        cv.report
            .decile_profile
            .as_ref()
            .unwrap()
            .write_csv(&mut deciles)
            .unwrap();
        let mut first_bag = Vec::new();
        for row in bags[0].features().rows() {
            for v in row {
                first_bag.extend_from_slice(&v.to_le_bytes());
            }
        }
        vec![
            (
                "report.json".into(),
                serde_json::to_vec_pretty(&cv.report).unwrap(),
            ),
            (
                "stratification.json".into(),
                serde_json::to_vec_pretty(&cv.stratification).unwrap(),
            ),
            ("km.csv".into(), km),
            ("deciles.csv".into(), deciles),
            ("bag P0000".into(), first_bag),
        ]
    })
}

fn determinism(_: &mut Lab) -> Outcome {
    let a = report_bytes(1);
    let b = report_bytes(1);
    let c = report_bytes(4);
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .zip(&c)
        .filter(|((x, y), z)| x.1 != y.1 || x.1 != z.1)
        .map(|((x, _), _)| x.0.as_str())
        .collect();
    outcome(
        differing.is_empty(),
        format!(
            "{} artefacts compared across 3 runs (1, 1 and 4 threads){}",
            a.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", differing.join(", "))
            }
        ),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let checks: [(&str, fn(&mut Lab) -> Outcome); 9] = [
        ("gradient check", gradient_check),
        ("oracle equivalence", oracles),
        ("permutation invariance", permutation_invariance),
        ("percentile-count trend", scenario_trend),
        ("neighbour-count trend", k_trend),
        ("baseline contrast", baseline_contrast),
        ("risk stratification", stratification),
        ("null control", null_control),
        ("determinism", determinism),
    ];
    let mut lab = Lab::default();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let o = check(&mut lab);
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n} {name}: {} [{:.1}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
