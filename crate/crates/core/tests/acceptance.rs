//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use mvts_cgan::autodiff::Tensor;
use mvts_cgan::cgan::{
    condition_batch, sample_latent, train, CganModel, ModelShape, TrainConfig, CONDITION_DIM, TOY_TIMESTEPS,
};
use mvts_cgan::classify::{
    featurize, kkt_max_violation, run_experiment, svm_predict, svm_train, Arm, ConfusionMatrix, FeatureMode,
    SvmConfig,
};
use mvts_cgan::data::{make_toy_dataset, ClassLabel, DEFAULT_CHANNELS, DEFAULT_TIMESTEPS};
use mvts_cgan::metrics::{adversarial_accuracy, bin_pair, kl_divergence, write_report, EmitOptions, FeatureDistribution};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let checks = [
        ("dense", dense_grad_check(11)),
        ("lstm", lstm_grad_check(12)),
        ("bce", bce_grad_check(13)),
        ("d_loss", d_loss_grad_check(14)),
        ("g_loss", g_loss_grad_check(15)),
    ];
    let elapsed = start.elapsed();
    let ok = checks.iter().all(|(_, c)| c.passed(100)) && elapsed < Duration::from_secs(60);
    let parts: Vec<String> = checks
        .iter()
        .map(|(n, c)| format!("{n} {} params max err {:.1e}", c.checked, c.max_err))
        .collect();
    outcome(ok, format!("{}; {:.1?}", parts.join(", "), elapsed))
}

fn skill_scores() -> Outcome {
    let m = ConfusionMatrix::new(10, 5, 20, 65);
    let (tss, hss) = (m.tss().unwrap(), m.hss2().unwrap());
    let perfect = ConfusionMatrix::new(12, 0, 0, 88);
    let negative = ConfusionMatrix::new(0, 12, 0, 88);
    let ok = (tss - 0.4314).abs() <= 1e-4
        && (hss - 0.3056).abs() <= 1e-4
        && perfect.tss().unwrap() == 1.0
        && perfect.hss2().unwrap() == 1.0
        && negative.tss().unwrap() == 0.0
        && negative.hss2().unwrap() == 0.0;
    outcome(ok, format!("tss {tss:.6}, hss2 {hss:.6}"))
}

fn normal_points(r: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| r.sample(StandardNormal)).collect()).collect()
}

fn adversarial_accuracy_contract() -> Outcome {
    let mut r = rng(31);
    let real = normal_points(&mut r, 200, 4);
    let copy = adversarial_accuracy(&real, &real.clone()).unwrap().value;
    let far: Vec<Vec<f64>> = real.iter().map(|v| v.iter().map(|x| x + 1e3).collect()).collect();
    let shifted = adversarial_accuracy(&real, &far).unwrap().value;

    let mut same = Vec::new();
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let a = normal_points(&mut r, 500, 4);
        let b = normal_points(&mut r, 500, 4);
        same.push(adversarial_accuracy(&a, &b).unwrap().value);
    }
    let (lo, hi) = same
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));

    let mut oracle_ok = true;
    for case in 0..100 {
        let n = 2 + case % 49;
        let d = 1 + case % 4;
        let a = normal_points(&mut r, n, d);
        let b = normal_points(&mut r, n, d);
        let aa = adversarial_accuracy(&a, &b).unwrap();
        let (ts, st) = aa_oracle(&a, &b);
        oracle_ok &= aa.term_ts == ts && aa.term_st == st && aa.value == (ts + st) / 2.0;
    }
    let ok = copy == 0.0 && shifted == 1.0 && lo >= 0.4 && hi <= 0.6 && oracle_ok;
    outcome(
        ok,
        format!(
            "copy {copy}, shifted {shifted}, same-distribution range [{lo:.3}, {hi:.3}] over 20 seeds, \
             brute-force agreement on 100 cases: {oracle_ok}"
        ),
    )
}

fn kl_contract() -> Outcome {
    let mut r = rng(41);
    let hist = |counts: Vec<u64>| FeatureDistribution {
        bin_edges: (0..=20).map(f64::from).collect(),
        total: counts.iter().sum(),
        counts,
        feature: None,
        channel: None,
    };
    let mut nonneg = true;
    for _ in 0..1000 {
        let p = hist((0..20).map(|_| r.random_range(0..100)).collect());
        let q = hist((0..20).map(|_| r.random_range(0..100)).collect());
        nonneg &= kl_divergence(&p, &q).unwrap() >= 0.0;
    }
    let values: Vec<f64> = (0..500).map(|_| r.sample(StandardNormal)).collect();
    let (p, q) = bin_pair(&values, &values, 20).unwrap();
    let self_kl = kl_divergence(&p, &q).unwrap();

    let start = Instant::now();
    let run = toy_run(toy_flares(1, 128), 300, 0);
    let means = run.report.mean_kl_by_group();
    let (first, last) = (means[0], means[5]);
    let trend = matches!((first, last), (Some(f), Some(l)) if l < f);
    outcome(
        nonneg && self_kl == 0.0 && trend,
        format!(
            "KL(p||p) {self_kl}, 1000 pairs non-negative: {nonneg}, toy mean KL 1-50 {:.4} vs 251-300 {:.4} ({:.1?})",
            first.unwrap_or(f64::NAN),
            last.unwrap_or(f64::NAN),
            start.elapsed()
        ),
    )
}

fn imbalance_remediation() -> Outcome {
    let start = Instant::now();
    let mut train_set = make_toy_dataset(11, 40, 2000, TOY_TIMESTEPS, 4);
    let mut test = make_toy_dataset(12, 40, 2000, TOY_TIMESTEPS, 4);
    test.partition_id = 2;
    let params = train_set.fit_and_scale().unwrap();
    test.scale_with(&params).unwrap();

    let flares = train_set.filter_label(ClassLabel::Flare);
    let run = toy_run(flares, 300, 0);
    let group = run.report.selected_group().unwrap();
    let ckpt = run
        .checkpoints
        .iter()
        .filter(|c| c.epoch <= group.last_epoch)
        .next_back()
        .unwrap();
    let synth = ckpt.synthesize(ClassLabel::Flare, train_set.balancing_count(), 0).unwrap();
    let report = run_experiment(&train_set, Some(&synth), &[test], &SvmConfig::default(), FeatureMode::Flatten).unwrap();
    let base = report.result(Arm::Baseline, 2).unwrap();
    let aug = report.result(Arm::Augmented, 2).unwrap();
    let gain = aug.tss - base.tss;
    let elapsed = start.elapsed();
    outcome(
        gain >= 0.2 && elapsed < Duration::from_secs(15 * 60),
        format!(
            "selected group {}, epoch {}; TSS baseline {:.3} augmented {:.3} (gain {gain:.3}); \
             HSS2 baseline {:.3} augmented {:.3}; {:.1?}",
            group.label(),
            ckpt.epoch,
            base.tss,
            aug.tss,
            base.hss2,
            aug.hss2,
            elapsed
        ),
    )
}

fn determinism_and_persistence() -> Outcome {
    let data = toy_flares(2, 48);
    let cfg = TrainConfig {
        epochs: 10,
        seed: 5,
        ..TrainConfig::toy()
    };
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    let ckpt_equal = a.checkpoints.len() == b.checkpoints.len()
        && a.checkpoints
            .iter()
            .zip(&b.checkpoints)
            .all(|(x, y)| x.to_bytes().unwrap() == y.to_bytes().unwrap());

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let emit = EmitOptions {
        kl: true,
        aa: true,
        svg: true,
    };
    let files: Vec<Vec<Vec<u8>>> = dirs
        .iter()
        .map(|d| {
            let report = toy_run(data.clone(), 10, 5).report;
            write_report(&report, d.path(), emit)
                .unwrap()
                .iter()
                .map(|p| std::fs::read(p).unwrap())
                .collect()
        })
        .collect();
    let reports_equal = files[0] == files[1];

    let path = dirs[0].path().join("ckpt.json");
    let ckpt = &a.checkpoints[1];
    ckpt.save(&path).unwrap();
    let loaded = mvts_cgan::cgan::Checkpoint::load(&path).unwrap();
    let synth_equal = ckpt.synthesize(ClassLabel::Flare, 130, 8).unwrap() == loaded.synthesize(ClassLabel::Flare, 130, 8).unwrap();
    outcome(
        ckpt_equal && reports_equal && synth_equal,
        format!(
            "checkpoints identical: {ckpt_equal}, {} report files identical: {reports_equal}, \
             round-trip synthesis identical: {synth_equal}",
            files[0].len()
        ),
    )
}

fn svm_correctness() -> Outcome {
    let xor_x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let xor_y = vec![-1.0, -1.0, 1.0, 1.0];
    let xor_cfg = SvmConfig {
        c: 10.0,
        gamma: 2.0,
        ..Default::default()
    };
    let xor = svm_train(&xor_x, &xor_y, &xor_cfg).unwrap();
    let xor_ok = svm_predict(&xor, &xor_x).unwrap() == xor_y;

    let mut worst: f64 = kkt_max_violation(&xor, &xor_x, &xor_y).unwrap();
    let mut models = 1;
    let mut r = rng(71);
    for _ in 0..20 {
        let n = r.random_range(10..120);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
        let mut y: Vec<f64> = x
            .iter()
            .map(|v| if v[0] * v[1] + 0.3 * v[2] + r.random_range(-0.3..0.3) > 0.0 { 1.0 } else { -1.0 })
            .collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let m = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        worst = worst.max(kkt_max_violation(&m, &x, &y).unwrap());
        models += 1;
    }
    let mut toy = make_toy_dataset(11, 40, 2000, TOY_TIMESTEPS, 4);
    toy.fit_and_scale().unwrap();
    let x: Vec<Vec<f64>> = toy.samples.iter().map(|s| featurize(s, FeatureMode::Flatten)).collect();
    let y: Vec<f64> = toy.samples.iter().map(|s| s.label.sign()).collect();
    let m = svm_train(&x, &y, &SvmConfig::default()).unwrap();
    worst = worst.max(kkt_max_violation(&m, &x, &y).unwrap());
    models += 1;

    outcome(
        xor_ok && worst <= 1e-3,
        format!("XOR correct: {xor_ok}, worst KKT violation {worst:.2e} over {models} models"),
    )
}

fn shape_conformance() -> Outcome {
    let (b, t, p, l) = (32, DEFAULT_TIMESTEPS, DEFAULT_CHANNELS.len(), 3);
    let mut r = rng(81);
    let model = CganModel::new(
        ModelShape {
            latent_dim: l,
            hidden: 100,
            channels: p,
        },
        &mut r,
    )
    .unwrap();
    let z = sample_latent(&mut r, b, t, l);
    let c = condition_batch(&[ClassLabel::Flare; 32], t);
    let x: Tensor = model.generator.generate(&z, &c).unwrap();
    let ok = x.shape() == [32, 60, 4] && c.shape() == [32, 60, CONDITION_DIM] && z.shape() == [32, 60, 3];
    outcome(
        ok,
        format!("generator {:?}, condition {:?}, latent {:?}", x.shape(), c.shape(), z.shape()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("skill-score oracles", skill_scores),
        ("adversarial accuracy contract", adversarial_accuracy_contract),
        ("KL contract", kl_contract),
        ("imbalance remediation", imbalance_remediation),
        ("determinism and persistence", determinism_and_persistence),
        ("SVM correctness", svm_correctness),
        ("pipeline shape conformance", shape_conformance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {}",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
