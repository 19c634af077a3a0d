use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use boneair::corpus::{Manifest, Split};
use boneair::metrics::MetricReport;
use boneair::signal_io::read_wav;
use tempfile::TempDir;

fn boneair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boneair"))
        .args(args)
        .output()
        .expect("spawn boneair")
}

#[track_caller]
fn ok(args: &[&str]) -> String {
    let out = boneair(args);
    assert!(
        out.status.success(),
        "boneair {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[track_caller]
fn exit_code(args: &[&str]) -> i32 {
    boneair(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A one-utterance-per-split corpus of 1 s recordings, shared by the tests.
fn corpus() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("corpus");
        ok(&["synth", s(&root), "--train", "1", "--val", "1", "--test", "1", "--duration-s", "1"]);
        dir
    })
    .path()
}

fn manifest_path() -> PathBuf {
    corpus().join("corpus/manifest.jsonl")
}

const FAST: [&str; 10] = [
    "--max-epochs",
    "2",
    "--batch-size",
    "2",
    "--segment-length",
    "1024",
    "--steps-per-epoch",
    "2",
    "--val-segments",
    "2",
];

fn train(arch: &str, out: &Path, extra: &[&str]) {
    let m = manifest_path();
    let mut args = vec!["train", "--arch", arch, "--manifest", s(&m), "--out", s(out)];
    for pair in FAST.chunks(2) {
        if !extra.contains(&pair[0]) {
            args.extend_from_slice(pair);
        }
    }
    args.extend_from_slice(extra);
    ok(&args);
}

/// FCN_B trained once, shared by the enhance/evaluate tests.
fn fcn_b() -> PathBuf {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        train("fcn_b", dir.path(), &[]);
        dir
    })
    .path()
    .join("fcn_b.ckpt")
}

fn lf() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let limits = ["--max-epochs", "1", "--steps-per-epoch", "1", "--train-records", "4", "--val-records", "2"];
        train("lf", dir.path(), &limits);
        dir
    })
    .path()
}

fn first_record(split: Split) -> boneair::corpus::UtteranceRecord {
    let m = Manifest::load(manifest_path()).unwrap();
    let rec = m.split(split).next().unwrap().clone();
    rec
}

#[test]
fn synth_counts_follow_the_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let args = ["synth", s(&out), "--train", "2", "--val", "1", "--test", "1", "--duration-s", "1"];
    ok(&args);
    let m = Manifest::load(out.join("manifest.jsonl")).unwrap();
    assert_eq!(m.meta.records.train, 32);
    assert_eq!(m.split(Split::Train).count(), 32);
    assert_eq!(m.split(Split::Validation).count(), 16);
    assert_eq!(m.split(Split::Test).count(), 12);
}

#[test]
fn synth_is_reproducible_from_run_json() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", s(&a), "--train", "1", "--val", "1", "--test", "1", "--duration-s", "1", "--seed", "4"]);
    ok(&["synth", s(&b), "--config", s(&a.join("run.json")), "--jobs", "2"]);
    let read = |p: &Path| std::fs::read(p.join("manifest.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    let m = Manifest::load(a.join("manifest.jsonl")).unwrap();
    let rec = m.split(Split::Test).next().unwrap().clone();
    let wav = |root: &Path| std::fs::read(root.join(&rec.noisy_acm_path)).unwrap();
    assert_eq!(wav(&a), wav(&b));
}

#[test]
fn synth_into_unwritable_path_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, b"x").unwrap();
    let out = file.join("corpus");
    assert_eq!(exit_code(&["synth", s(&out), "--train", "1", "--val", "1", "--test", "1"]), 1);
}

#[test]
fn config_errors_exit_two() {
    let m = manifest_path();
    assert_eq!(exit_code(&["train", "--arch", "fcn_z", "--manifest", s(&m), "--out", "/tmp/x"]), 2);
    assert_eq!(exit_code(&["synth", "/tmp/never", "--train", "0"]), 2);
    assert_eq!(exit_code(&["frobnicate"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(
        exit_code(&["train", "--arch", "fcn_b", "--manifest", s(&m), "--out", s(out), "--fine-tune"]),
        2
    );
    assert_eq!(
        exit_code(&["train", "--arch", "fcn_b", "--manifest", s(&m), "--out", s(out), "--batch-size", "0"]),
        2
    );
}

#[test]
fn missing_manifest_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("nope.jsonl");
    assert_eq!(exit_code(&["train", "--arch", "fcn_b", "--manifest", s(&m), "--out", s(dir.path())]), 1);
}

#[test]
fn zero_learning_rate_keeps_losses_constant() {
    let dir = tempfile::tempdir().unwrap();
    train("fcn_b", dir.path(), &["--lr", "0", "--max-epochs", "3", "--patience", "5"]);
    let text = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,train_mse,val_mse"));
    let val: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(val.len(), 3);
    assert!(val.iter().all(|v| v.to_bits() == val[0].to_bits()), "{val:?}");
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    train("fcn_b", &a, &["--seed", "3"]);
    train("fcn_b", &b, &["--seed", "3"]);
    let read = |p: &Path, f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read(&a, "fcn_b.ckpt"), read(&b, "fcn_b.ckpt"));
    assert_eq!(read(&a, "history.csv"), read(&b, "history.csv"));

    let c = dir.path().join("c");
    ok(&["train", "--config", s(&a.join("run.json")), "--out", s(&c)]);
    assert_eq!(read(&a, "fcn_b.ckpt"), read(&c, "fcn_b.ckpt"));
}

#[test]
fn toml_config_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    let m = manifest_path();
    std::fs::write(
        &cfg,
        format!(
            "arch = \"fcn_b\"\nmanifest = {:?}\n[hyper]\nmax_epochs = 1\nsteps_per_epoch = 1\nbatch_size = 1\nsegment_length = 600\nval_segments = 1\nlr = 0.5\n",
            s(&m)
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&["train", "--config", s(&cfg), "--out", s(&out), "--lr", "0.001"]);
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "train");
    assert_eq!(run["config"]["hyper"]["lr"], 0.001);
    assert_eq!(run["config"]["hyper"]["segment_length"], 600);
    assert_eq!(run["config"]["arch"], "fcn_b");
}

#[test]
fn late_fusion_writes_three_checkpoints_and_a_descriptor() {
    let dir = lf();
    for f in ["lf.json", "fcn_a.ckpt", "fcn_b.ckpt", "fusion.ckpt", "run.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    for f in ["history_fcn_a.csv", "history_fcn_b.csv", "history_fusion.csv"] {
        let text = std::fs::read_to_string(dir.join(f)).unwrap();
        assert!(text.starts_with("epoch,train_mse,val_mse\n"), "{f}");
    }
    assert!(!dir.join("history_fine_tune.csv").exists());
}

#[test]
fn enhance_enforces_the_modality_contract() {
    let rec = first_record(Split::Test);
    let root = manifest_path().parent().unwrap().to_path_buf();
    let acm = root.join(&rec.noisy_acm_path);
    let bcm = root.join(&rec.bcm_path);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("y.wav");
    let lf_dir = lf();
    let fcn_a = lf_dir.join("fcn_a.ckpt");
    let b = fcn_b();

    let enhance = |system: &Path, a: Option<&Path>, bc: Option<&Path>| {
        let mut args = vec!["enhance", "--system", s(system), "--out", s(&out)];
        if let Some(a) = a {
            args.extend(["--in-acm", s(a)]);
        }
        if let Some(bc) = bc {
            args.extend(["--in-bcm", s(bc)]);
        }
        exit_code(&args)
    };
    assert_eq!(enhance(&fcn_a, Some(&acm), Some(&bcm)), 2);
    assert_eq!(enhance(&fcn_a, None, Some(&bcm)), 2);
    assert_eq!(enhance(&b, Some(&acm), None), 2);
    assert_eq!(enhance(lf_dir, Some(&acm), None), 2);
    assert_eq!(enhance(&lf_dir.join("nope.ckpt"), Some(&acm), None), 1);

    assert_eq!(enhance(&fcn_a, Some(&acm), None), 0);
    assert_eq!(read_wav(&out).unwrap().len(), read_wav(&acm).unwrap().len());
    assert_eq!(enhance(lf_dir, Some(&acm), Some(&bcm)), 0);
    assert_eq!(read_wav(&out).unwrap().len(), read_wav(&acm).unwrap().len());
    assert!(out.with_extension("run.json").is_file());

    ok(&["enhance", "--system", s(&b), "--in-bcm", s(&bcm), "--out", s(&out), "--csv"]);
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), read_wav(&bcm).unwrap().len() + 1);
}

#[test]
fn enhancing_then_evaluating_reproduces_evaluate() {
    let m = Manifest::load(manifest_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let wavs = dir.path().join("wavs");
    let b = fcn_b();
    for rec in m.split(Split::Test) {
        let out = wavs.join(format!("{}.wav", rec.id));
        ok(&["enhance", "--system", s(&b), "--in-bcm", s(&m.resolve(&rec.bcm_path)), "--out", s(&out)]);
    }
    let report = dir.path().join("report");
    let systems = format!("fcn_b={},wav:saved={}", s(&b), s(&wavs));
    ok(&["evaluate", "--manifest", s(&manifest_path()), "--systems", &systems, "--out", s(&report)]);
    let r = MetricReport::read_csv(report.join("rows.csv")).unwrap();
    let model: Vec<_> = r.rows_for("FCN_B").collect();
    let saved: Vec<_> = r.rows_for("saved").collect();
    assert_eq!(model.len(), 12);
    assert_eq!(model.len(), saved.len());
    for (x, y) in model.iter().zip(&saved) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.stoi.to_bits(), y.stoi.to_bits());
        assert_eq!(x.estoi.to_bits(), y.estoi.to_bits());
        assert_eq!(x.seg_snr_db.to_bits(), y.seg_snr_db.to_bits());
    }
}

fn evaluate_noisy(out: &Path, extra: &[&str]) -> String {
    let m = manifest_path();
    let mut args = vec!["evaluate", "--manifest", s(&m), "--systems", "noisy", "--out", s(out)];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn evaluate_table_has_one_row_per_snr_and_average() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = evaluate_noisy(dir.path(), &[]);
    let md = std::fs::read_to_string(dir.path().join("tables.md")).unwrap();
    assert_eq!(stdout, md);
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines[0], "| SNR (dB) | Noisy ACM STOI | Noisy ACM ESTOI | Noisy ACM segSNR |");
    let labels: Vec<&str> = lines[2..].iter().map(|l| l.split('|').nth(1).unwrap().trim()).collect();
    assert_eq!(labels, ["-5", "0", "5", "10", "Avg."]);

    let again = tempfile::tempdir().unwrap();
    evaluate_noisy(again.path(), &["--jobs", "3"]);
    for f in ["rows.csv", "tables.md"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap()
        );
    }
}

#[test]
fn evaluate_rejects_unknown_systems() {
    let m = manifest_path();
    for systems in ["noisy,wiener", "fcn_a", "wav:=x"] {
        assert_eq!(
            exit_code(&["evaluate", "--manifest", s(&m), "--systems", systems, "--out", "/tmp/unused"]),
            2,
            "{systems}"
        );
    }
}

#[test]
fn external_pesq_adds_a_column_only() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain");
    evaluate_noisy(&plain, &[]);
    let base = MetricReport::read_csv(plain.join("rows.csv")).unwrap();
    let mut pesq = String::from("id,system,pesq\n");
    for (i, r) in base.rows.iter().enumerate() {
        pesq.push_str(&format!("{},{},{}\n", r.id, r.system, 1.0 + i as f64 * 0.1));
    }
    let pesq_path = dir.path().join("pesq.csv");
    std::fs::write(&pesq_path, pesq).unwrap();
    let merged = dir.path().join("merged");
    evaluate_noisy(&merged, &["--external-pesq", s(&pesq_path)]);
    let got = MetricReport::read_csv(merged.join("rows.csv")).unwrap();
    for (a, b) in base.rows.iter().zip(&got.rows) {
        assert_eq!(a.stoi.to_bits(), b.stoi.to_bits());
        assert_eq!(a.estoi.to_bits(), b.estoi.to_bits());
        assert!(a.pesq.is_none() && b.pesq.is_some());
    }
    let md = std::fs::read_to_string(merged.join("tables.md")).unwrap();
    assert!(md.starts_with("| SNR (dB) | Noisy ACM PESQ | Noisy ACM STOI |"));
}

fn rows_csv(path: &Path, system: &str, stoi: &[f64]) {
    let mut text = String::from("id,system,noise_type,snr_db,stoi,estoi,seg_snr_db,pesq\n");
    for (i, v) in stoi.iter().enumerate() {
        text.push_str(&format!("r{i},{system},babble,0.0,{v},0.5,1.0,\n"));
    }
    std::fs::write(path, text).unwrap();
}

fn t_of(stdout: &str) -> serde_json::Value {
    serde_json::from_str(stdout).unwrap()
}

#[test]
fn ttest_matches_the_fixture_and_is_antisymmetric() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let base = [0.5, 0.6, 0.55, 0.7, 0.65];
    let d = [2.0, 1.0, 3.0, 2.0, 4.0];
    rows_csv(&a, "X", &base.iter().zip(&d).map(|(x, d)| x + d / 100.0).collect::<Vec<_>>());
    rows_csv(&b, "Y", &base);

    let out = dir.path().join("res/t.json");
    let fwd = t_of(&ok(&["ttest", "--rows-a", s(&a), "--rows-b", s(&b), "--column", "stoi", "--out", s(&out)]));
    let t = fwd["t_statistic"].as_f64().unwrap();
    assert!((t - 4.707).abs() < 1e-3, "t = {t}");
    assert_eq!(fwd["degrees_of_freedom"], 4);
    assert!((fwd["p_value_two_tailed"].as_f64().unwrap() - 0.00925).abs() < 1e-4);
    assert_eq!(t_of(&std::fs::read_to_string(&out).unwrap()), fwd);
    assert!(out.with_extension("run.json").is_file());

    let rev = t_of(&ok(&["ttest", "--rows-a", s(&b), "--rows-b", s(&a)]));
    assert!((rev["t_statistic"].as_f64().unwrap() + t).abs() < 1e-12);
    assert_eq!(rev["p_value_two_tailed"], fwd["p_value_two_tailed"]);
}

#[test]
fn ttest_usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let short = dir.path().join("short.csv");
    rows_csv(&a, "X", &[0.1, 0.2, 0.4]);
    rows_csv(&short, "X", &[0.1, 0.2]);
    assert_eq!(exit_code(&["ttest", "--rows-a", s(&a), "--rows-b", s(&a)]), 2);
    assert_eq!(exit_code(&["ttest", "--rows-a", s(&a), "--rows-b", s(&short)]), 2);
    assert_eq!(exit_code(&["ttest", "--rows-a", s(&a), "--rows-b", s(&a), "--column", "loudness"]), 2);
    assert_eq!(
        exit_code(&["ttest", "--rows-a", s(&a), "--rows-b", s(&dir.path().join("missing.csv"))]),
        1
    );
}
