use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use mvts_cgan::cgan::{train_to_dir, Checkpoint};
use mvts_cgan::classify::run_experiment;
use mvts_cgan::data::{
    ingest_directory, make_toy_dataset, read_dataset, write_dataset, ClassLabel, Dataset, IngestOptions, ScalingParams,
};
use mvts_cgan::metrics::{epoch_report, write_report, CheckpointSource, EmitOptions};

use crate::config::{RunConfig, UsageError};

const SCALER_FORMAT: &str = "mvts-scaler";
const SCALER_VERSION: u64 = 1;

pub fn run(command: &str, cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    match command {
        "ingest" => ingest(cfg, &out)?,
        "toy" => toy(cfg, &out)?,
        "train" => train(cfg, &out)?,
        "synth" => synth(cfg, &out)?,
        "eval_kl" => metrics(cfg, &out, true, false)?,
        "eval_aa" => metrics(cfg, &out, false, true)?,
        "report" => metrics(cfg, &out, true, true)?,
        "eval_clf" => classify(cfg, &out)?,
        other => bail!(UsageError(format!("unknown command '{other}'"))),
    }
    let echo = out.join(format!("config_{command}.txt"));
    fs::write(&echo, cfg.echo(command)).with_context(|| format!("writing {}", echo.display()))?;
    Ok(())
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_scaler(params: &ScalingParams, path: &Path) -> Result<()> {
    let doc = json!({ "format": SCALER_FORMAT, "schema_version": SCALER_VERSION, "params": params });
    fs::write(path, format!("{doc:#}\n")).with_context(|| format!("writing {}", path.display()))
}

fn read_scaler(path: &Path) -> Result<ScalingParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{}: not valid JSON", path.display()))?;
    if doc["format"] != SCALER_FORMAT || doc["schema_version"] != SCALER_VERSION {
        bail!(UsageError(format!(
            "{}: expected {SCALER_FORMAT} version {SCALER_VERSION}",
            path.display()
        )));
    }
    serde_json::from_value(doc["params"].clone()).with_context(|| format!("{}: malformed scaler", path.display()))
}

/// Imputes, then scales with the given scaler or a freshly fitted one,
/// and writes `dataset.json` and `scaler.json`.
fn finish_dataset(mut ds: Dataset, scaler: Option<PathBuf>, out: &Path) -> Result<Dataset> {
    ds.impute()?;
    let params = match scaler {
        Some(p) => {
            let params = read_scaler(&p)?;
            ds.scale_with(&params)?;
            params
        }
        None => ds.fit_and_scale()?,
    };
    write_dataset(&ds, &out.join("dataset.json"))?;
    write_scaler(&params, &out.join("scaler.json"))?;
    println!(
        "partition {}: {} samples ({} flare, {} no-flare)",
        ds.partition_id,
        ds.len(),
        ds.count(ClassLabel::Flare),
        ds.count(ClassLabel::NoFlare)
    );
    Ok(ds)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn ingest(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = cfg.input("ingest.dir")?;
    let manifest = cfg.input("ingest.manifest")?;
    let scaler = cfg.opt_input("ingest.scaler")?;
    let channels = cfg.list("ingest.channels");
    if channels.is_empty() {
        bail!(UsageError("ingest.channels is empty".into()));
    }
    let opts = IngestOptions {
        channels,
        delimiter: cfg.delimiter()?,
        partition_id: cfg.parse("ingest.partition")?,
    };
    let report = ingest_directory(&dir, &manifest, &opts)?;
    create_out(out)?;
    let mut rejected = String::from("path,reason\n");
    for r in &report.rejected {
        log::warn!("skipped {}: {}", r.path.display(), r.reason);
        rejected.push_str(&format!(
            "{},{}\n",
            csv_field(&r.path.display().to_string()),
            csv_field(&r.reason)
        ));
    }
    fs::write(out.join("rejected.csv"), rejected)?;
    finish_dataset(report.dataset, scaler, out)?;
    if !report.rejected.is_empty() {
        println!("{} files rejected, see rejected.csv", report.rejected.len());
    }
    Ok(())
}

fn toy(cfg: &RunConfig, out: &Path) -> Result<()> {
    let scaler = cfg.opt_input("toy.scaler")?;
    let timesteps: usize = cfg.parse("toy.timesteps")?;
    let channels: usize = cfg.parse("toy.channels")?;
    if timesteps < 2 || channels == 0 {
        bail!(UsageError("toy data needs timesteps >= 2 and channels >= 1".into()));
    }
    let mut ds = make_toy_dataset(
        cfg.parse("seed")?,
        cfg.parse("toy.n_pos")?,
        cfg.parse("toy.n_neg")?,
        timesteps,
        channels,
    );
    ds.partition_id = cfg.parse("toy.partition")?;
    create_out(out)?;
    finish_dataset(ds, scaler, out)?;
    Ok(())
}

fn load_dataset(cfg: &RunConfig, key: &str) -> Result<Dataset> {
    let path = cfg.input(key)?;
    read_dataset(&path).with_context(|| format!("loading {key}"))
}

fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let tc = cfg.train_config()?;
    let data = load_dataset(cfg, "train.data")?;
    let (paths, log) = train_to_dir(&tc, &data, out)?;
    if let Some(last) = log.last() {
        println!(
            "{} epochs, {} checkpoints; final d_loss {:.5}, g_loss {:.5}",
            log.len(),
            paths.len(),
            last.d_loss,
            last.g_loss
        );
    }
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg.input("synth.checkpoint")?;
    let label = cfg.label("synth.class")?;
    let count: usize = match (cfg.parse_opt::<usize>("synth.count")?, cfg.opt_path("synth.balance_with")) {
        (Some(_), Some(_)) => bail!(UsageError("set synth.count or synth.balance_with, not both".into())),
        (Some(n), None) => n,
        (None, Some(_)) => load_dataset(cfg, "synth.balance_with")?.balancing_count(),
        (None, None) => bail!(UsageError("synth.count or synth.balance_with is required".into())),
    };
    let ckpt = Checkpoint::load(&path)?;
    let ds = ckpt.synthesize(label, count, cfg.parse("seed")?)?;
    create_out(out)?;
    write_dataset(&ds, &out.join("synthetic.json"))?;
    println!("{count} synthetic {label} samples from epoch {}", ckpt.epoch);
    Ok(())
}

/// `ckpt_epoch_N.json` files in `dir`, ordered by epoch.
fn checkpoint_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("ckpt_epoch_"))
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(e) = epoch {
            found.push((e, path));
        }
    }
    if found.is_empty() {
        bail!(UsageError(format!("no checkpoint files in {}", dir.display())));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn metrics(cfg: &RunConfig, out: &Path, kl: bool, aa: bool) -> Result<()> {
    let opts = cfg.report_options()?;
    let svg: bool = cfg.parse("metrics.svg")?;
    let dir = cfg.input("eval.checkpoints")?;
    let real = load_dataset(cfg, "eval.data")?;
    let sources: Vec<CheckpointSource> = checkpoint_files(&dir)?.into_iter().map(CheckpointSource::File).collect();
    let report = epoch_report(&sources, &real, &opts)?;
    let written = write_report(&report, out, EmitOptions { kl, aa, svg })?;
    log::info!("wrote {} report files", written.len());
    let kl_means = report.mean_kl_by_group();
    for (g, m) in report.groups.iter().zip(&kl_means) {
        match m {
            Some(m) => println!("epochs {}: mean KL {m:.4}", g.label()),
            None => println!("epochs {}: no checkpoints", g.label()),
        }
    }
    if let Some(g) = report.selected_group() {
        println!("lowest mean KL: epochs {}", g.label());
    }
    Ok(())
}

fn classify(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (svm, mode) = cfg.svm_config()?;
    let train = load_dataset(cfg, "clf.train")?;
    let synth = match cfg.opt_input("clf.synth")? {
        Some(p) => Some(read_dataset(&p).context("loading clf.synth")?),
        None => None,
    };
    let test_paths = cfg.list("clf.test");
    if test_paths.is_empty() {
        bail!(UsageError("clf.test needs at least one dataset".into()));
    }
    let mut tests = Vec::with_capacity(test_paths.len());
    for p in &test_paths {
        let p = Path::new(p);
        if !p.exists() {
            bail!(UsageError(format!("clf.test: {} does not exist", p.display())));
        }
        tests.push(read_dataset(p).with_context(|| format!("loading {}", p.display()))?);
    }
    let report = run_experiment(&train, synth.as_ref(), &tests, &svm, mode)?;
    report.write(out)?;
    println!("{:<10} {:>5} {:>5} {:>5} {:>5} {:>5} {:>8} {:>8}", "arm", "test", "tp", "fn", "fp", "tn", "tss", "hss2");
    for r in &report.results {
        let c = &r.confusion;
        println!(
            "{:<10} {:>5} {:>5} {:>5} {:>5} {:>5} {:>8.4} {:>8.4}",
            r.arm.to_string(),
            r.test_partition,
            c.tp,
            c.fn_,
            c.fp,
            c.tn,
            r.tss,
            r.hss2
        );
    }
    Ok(())
}
