use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mvts_cgan::data::{read_dataset, ClassLabel};

fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvts-cgan"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("spawn")
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let o = run(cwd, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn toy(cwd: &Path, out: &str, seed: &str, partition: &str, scaler: Option<&str>) {
    let mut args = vec![
        "toy", "--out", out, "--seed", seed, "--partition", partition, "--n-pos", "12", "--n-neg", "40",
        "--timesteps", "8",
    ];
    if let Some(s) = scaler {
        args.extend(["--scaler", s]);
    }
    ok(cwd, &args);
}

const SMALL_TRAIN: &[&str] = &["--hidden", "4", "--g-lr", "0.001", "--batch-size", "16"];

fn train(cwd: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["train", "--data", "tr/dataset.json", "--out", out];
    args.extend_from_slice(SMALL_TRAIN);
    args.extend_from_slice(extra);
    ok(cwd, &args);
}

#[test]
fn train_writes_requested_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    toy(d, "tr", "1", "1", None);
    train(d, "ck", &["--epochs", "10", "--checkpoint-every", "5"]);
    let mut ckpts: Vec<String> = fs::read_dir(d.join("ck"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("ckpt_epoch_"))
        .collect();
    ckpts.sort();
    assert_eq!(ckpts, vec!["ckpt_epoch_10.json", "ckpt_epoch_5.json"]);
    let log = fs::read_to_string(d.join("ck/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 11);
}

#[test]
fn same_seed_same_outputs_and_config_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    toy(d, "tr", "1", "1", None);
    train(d, "a", &["--epochs", "4", "--checkpoint-every", "2", "--seed", "9"]);
    train(d, "b", &["--epochs", "4", "--checkpoint-every", "2", "--seed", "9"]);
    ok(d, &["train", "--config", "a/config_train.txt", "--out", "c"]);
    for name in ["train_log.csv", "ckpt_epoch_2.json", "ckpt_epoch_4.json"] {
        let a = fs::read(d.join("a").join(name)).unwrap();
        assert_eq!(a, fs::read(d.join("b").join(name)).unwrap(), "{name}");
        assert_eq!(a, fs::read(d.join("c").join(name)).unwrap(), "{name} (replay)");
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("samples")).unwrap();
    let o = run(d, &["ingest", "--dir", "samples", "--manifest", "missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));

    assert_eq!(run(d, &["train", "--set", "nope=1"]).status.code(), Some(2));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(2));
    toy(d, "tr", "1", "1", None);
    assert_eq!(
        run(d, &["train", "--data", "tr/dataset.json", "--epochs", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), "{").unwrap();
    let o = run(d, &["synth", "--checkpoint", "bad.json", "--count", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ingest_with_saved_scaler_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let samples = d.join("samples");
    fs::create_dir(&samples).unwrap();
    let mut manifest = String::from("sample_id,label\n");
    for i in 0..6 {
        let mut body = String::from("TOTUSJH\tABSNJZH\tSAVNCPP\tTOTBSQ\n");
        for t in 0..5 {
            let v = (i * 10 + t) as f64;
            let cell = if t == 2 && i == 1 { String::new() } else { v.to_string() };
            body.push_str(&format!("{cell}\t{}\t{}\t{}\n", v * 2.0, v + 1.0, 100.0 - v));
        }
        fs::write(samples.join(format!("s{i}.tsv")), body).unwrap();
        let label = if i % 3 == 0 { "FLARE" } else { "NOFLARE" };
        manifest.push_str(&format!("s{i},{label}\n"));
    }
    fs::write(d.join("manifest.csv"), manifest).unwrap();

    ok(d, &["ingest", "--dir", "samples", "--manifest", "manifest.csv", "--out", "a"]);
    ok(d, &["ingest", "--dir", "samples", "--manifest", "manifest.csv", "--out", "b", "--scaler", "a/scaler.json"]);
    for name in ["dataset.json", "scaler.json", "rejected.csv"] {
        assert_eq!(
            fs::read(d.join("a").join(name)).unwrap(),
            fs::read(d.join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let ds = read_dataset(&d.join("a/dataset.json")).unwrap();
    assert_eq!(ds.len(), 6);
    assert_eq!(ds.count(ClassLabel::Flare), 2);
    assert!(ds.samples.iter().all(|s| s.is_preprocessed()));
}

#[test]
fn synth_counts_and_classification() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    toy(d, "tr", "1", "1", None);
    toy(d, "te", "2", "2", Some("tr/scaler.json"));
    train(d, "ck", &["--epochs", "2", "--checkpoint-every", "2", "--conditioning", "flare_only"]);

    ok(d, &["synth", "--checkpoint", "ck/ckpt_epoch_2.json", "--count", "0", "--out", "empty"]);
    assert!(read_dataset(&d.join("empty/synthetic.json")).unwrap().is_empty());

    ok(d, &["synth", "--checkpoint", "ck/ckpt_epoch_2.json", "--balance-with", "tr/dataset.json", "--out", "sy"]);
    let sy = read_dataset(&d.join("sy/synthetic.json")).unwrap();
    assert_eq!(sy.len(), 28);
    assert!(sy.samples.iter().all(|s| s.synthetic && s.label == ClassLabel::Flare));

    let table = ok(
        d,
        &["eval", "clf", "--train", "tr/dataset.json", "--synth", "sy/synthetic.json", "--test", "te/dataset.json", "--out", "clf"],
    );
    assert!(table.contains("baseline") && table.contains("augmented"));
    let csv = fs::read_to_string(d.join("clf/classification.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("arm,test_partition,tp,fn,fp,tn,tss,hss2"));
    assert_eq!(csv.lines().count(), 3);

    let o = run(
        d,
        &["eval", "clf", "--train", "tr/dataset.json", "--synth", "tr/dataset.json", "--test", "te/dataset.json", "--out", "bad"],
    );
    assert_eq!(o.status.code(), Some(2), "real samples passed as synthetic");
}

#[test]
fn report_over_checkpoint_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    toy(d, "tr", "1", "1", None);
    train(d, "ck", &["--epochs", "6", "--checkpoint-every", "1"]);
    let stdout = ok(d, &["report", "--checkpoints", "ck", "--data", "tr/dataset.json", "--out", "rep"]);
    assert!(stdout.contains("lowest mean KL"));
    assert!(d.join("rep/kl_groups.csv").is_file());
    assert!(d.join("rep/aa_mean.csv").is_file());

    ok(d, &["eval", "kl", "--checkpoints", "ck", "--data", "tr/dataset.json", "--out", "kl"]);
    assert!(d.join("kl/kl_mean_TOTUSJH.csv").is_file());
    assert!(!d.join("kl/aa_mean.csv").exists());
}
