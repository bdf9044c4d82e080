use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccsq::dataset::{load_manifest, Partition, Task};
use ccsq::io::{Sidecar, Table};
use ccsq::normalize::probit;
use ccsq::pipeline::{Corpus, PredictionSet};
use ccsq::seqnet::{predict_utterance, NetworkParams};
use ccsq::synth::{confounded_corpus, ConfoundedCorpusConfig};
use ndarray::Array2;
use tempfile::TempDir;

fn ccsq_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccsq"))
        .args(args)
        .current_dir(dir)
        .envs(envs.iter().copied())
        .output()
        .expect("spawn ccsq")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ccsq_in(dir, args, &[]);
    assert!(
        out.status.success(),
        "ccsq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = ccsq_in(dir, args, &[]);
    (out.status.code().expect("exit code"), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn tone(path: &Path, seconds: f64, freq: f64) {
    let rate = 16_000u32;
    let n = (seconds * rate as f64) as usize;
    let samples: Vec<f64> = (0..n).map(|i| 0.4 * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect();
    ccsq::features::write_wav_pcm16(path, &samples, rate).unwrap();
}

/// Writes a small confounded corpus as `manifest.csv` plus `feats/<id>.csv`.
fn write_corpus(dir: &Path, speakers: usize, per_speaker: usize, seed: u64) -> Corpus {
    let corpus = confounded_corpus(&ConfoundedCorpusConfig {
        speakers,
        utterances_per_speaker: per_speaker,
        seed,
        ..Default::default()
    })
    .unwrap();
    for (i, r) in corpus.manifest.records().iter().enumerate() {
        Table { names: corpus.feature_names.clone(), values: corpus.features(i).clone() }
            .write(&dir.join("feats").join(&r.feature_path))
            .unwrap();
    }
    corpus.manifest.write(&dir.join("manifest.csv")).unwrap();
    corpus
}

const TOY_CONFIG: &str = r#"{
  "folds": {"strategy": "speaker", "k": 2},
  "seed": 5,
  "network": {"layers": [{"kind": "blstm", "size": 4}]},
  "train": {"learning_rate": 0.01, "max_epochs": 4, "batch_size": 8},
  "normalization": "meanvar",
  "tasks": ["valence", "arousal"]
}
"#;

fn trained_toy(dir: &Path) {
    write_corpus(dir, 6, 6, 1);
    fs::write(dir.join("config.json"), TOY_CONFIG).unwrap();
    ok(
        dir,
        &["train", "--manifest", "manifest.csv", "--features", "feats", "--config", "config.json", "--models-out",
          "models"],
    );
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(tmp.path(), &[]).0, 1);
    assert_eq!(code(tmp.path(), &["bogus"]).0, 1);
    assert_eq!(code(tmp.path(), &["train", "--manifest", "x"]).0, 1);
    assert_eq!(code(tmp.path(), &["folds", "--manifest", "m", "--k", "2", "--strategy", "sideways", "--out", "f"]).0, 1);
    assert_eq!(code(tmp.path(), &["--help"]).0, 0);
    assert_eq!(code(tmp.path(), &["train", "--help"]).0, 0);
    let out = ccsq_in(tmp.path(), &["folds", "--help"], &[("CCSQ_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(0));
    let out = ccsq_in(tmp.path(), &["fuse", "--a", "a", "--b", "b", "--task", "arousal", "--out", "o"], &[("CCSQ_THREADS", "0")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn extract_frame_counts_and_widths() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    tone(&d.join("one.wav"), 1.0, 220.0);
    ok(d, &["extract", "--wav", "one.wav", "--lld-out", "lld", "--functionals-out", "func"]);
    let lld = Table::load(&d.join("lld/one.csv")).unwrap();
    assert_eq!(lld.values.dim(), (95, 29));
    let func = Table::load(&d.join("func/one.csv")).unwrap();
    assert_eq!(func.values.ncols(), 522);
    assert_eq!(Sidecar::load_for(&d.join("lld/one.csv")).unwrap().unwrap().frame_period_s, Some(0.01));

    let extra = Array2::from_shape_fn((95, 36), |(t, j)| (t as f64 * 0.1 + j as f64).sin());
    let names = (0..36).map(|j| format!("ext{j}")).collect();
    Table { names, values: extra }.write(&d.join("extra/one.csv")).unwrap();
    ok(
        d,
        &["extract", "--wav", "one.wav", "--extra-lld", "extra/one.csv", "--lld-out", "lld65", "--functionals-out",
          "func65"],
    );
    assert_eq!(Table::load(&d.join("lld65/one.csv")).unwrap().values.ncols(), 65);
    assert_eq!(Table::load(&d.join("func65/one.csv")).unwrap().values.ncols(), 1170);
}

#[test]
fn batch_extract_continues_past_bad_files() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    tone(&d.join("a.wav"), 2.5, 200.0);
    tone(&d.join("b.wav"), 2.5, 300.0);
    fs::write(d.join("broken.wav"), b"not a wav file").unwrap();
    fs::write(d.join("list.txt"), "a.wav\nbroken.wav\n\nb.wav\nmissing.wav\n").unwrap();
    let (c, err) = code(d, &["extract", "--wav-list", "list.txt", "--lld-out", "lld", "--functionals-out", "func"]);
    assert_eq!(c, 2);
    assert!(err.contains("broken.wav") && err.contains("missing.wav"), "{err}");
    assert!(err.contains("2 of 4"), "{err}");
    assert!(d.join("func/a.csv").exists() && d.join("func/b.csv").exists());
    assert!(!d.join("func/broken.csv").exists());
}

#[test]
fn normalize_cdf_gives_plotting_positions() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let corpus = write_corpus(d, 4, 3, 2);
    ok(d, &["normalize", "--in", "feats", "--mode", "cdf", "--partition", "train", "--out", "norm"]);
    let tables: Vec<Table> = files(&d.join("norm"))
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| Table::load(&p).unwrap())
        .collect();
    assert_eq!(tables.len(), corpus.len());
    let n: usize = tables.iter().map(|t| t.values.nrows()).sum();
    for j in 0..corpus.input_dim() {
        let mut col: Vec<f64> = tables.iter().flat_map(|t| t.values.column(j).to_vec()).collect();
        col.sort_by(f64::total_cmp);
        for (i, v) in col.iter().enumerate() {
            let expected = probit((i as f64 + 0.5) / n as f64).unwrap();
            assert!((v - expected).abs() < 1e-12, "column {j} row {i}: {v} vs {expected}");
        }
    }
    let side = Sidecar::load_for(&d.join("norm/s00u000.csv")).unwrap().unwrap();
    assert_eq!(side.normalization.as_deref(), Some("cdf_adjust"));
    let (c, _) = code(d, &["normalize", "--in", "feats", "--mode", "cdf", "--partition", "train", "--out", "n2", "--stats-out", "s.csv"]);
    assert_eq!(c, 2);
    assert!(!d.join("n2").exists());
}

#[test]
fn normalize_meanvar_with_persisted_stats() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 4, 3, 3);
    ok(
        d,
        &["normalize", "--in", "feats", "--mode", "meanvar", "--partition", "train", "--out", "norm", "--stats-out",
          "stats.csv"],
    );
    let all: Vec<Table> = files(&d.join("norm"))
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| Table::load(&p).unwrap())
        .collect();
    let width = all[0].values.ncols();
    for j in 0..width {
        let col: Vec<f64> = all.iter().flat_map(|t| t.values.column(j).to_vec()).collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10, "column {j}: mean {mean}, var {var}");
    }
    // Applying the stored statistics to the training data reproduces the output.
    ok(
        d,
        &["normalize", "--in", "feats", "--mode", "meanvar", "--partition", "dev", "--out", "again", "--stats-in",
          "stats.csv"],
    );
    for p in files(&d.join("norm")).into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
        let a = Table::load(&p).unwrap();
        let b = Table::load(&d.join("again").join(p.file_name().unwrap())).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn normalize_rejects_width_mismatch() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 3, 2, 4);
    Table { names: vec!["x".into()], values: Array2::zeros((3, 1)) }.write(&d.join("feats/zz.csv")).unwrap();
    let (c, err) = code(d, &["normalize", "--in", "feats", "--mode", "cdf", "--partition", "train", "--out", "norm"]);
    assert_eq!(c, 2);
    assert!(err.contains("zz.csv"), "{err}");
    assert!(!d.join("norm").exists());
}

#[test]
fn folds_are_deterministic_and_speaker_disjoint() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let corpus = write_corpus(d, 6, 4, 5);
    ok(d, &["folds", "--manifest", "manifest.csv", "--k", "3", "--strategy", "speaker", "--seed", "9", "--out", "a.csv"]);
    ok(d, &["folds", "--manifest", "manifest.csv", "--k", "3", "--strategy", "speaker", "--seed", "9", "--out", "b.csv"]);
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    let plan = ccsq::dataset::FoldPlan::load(&d.join("a.csv")).unwrap();
    for r in corpus.manifest.records() {
        let fold = plan.fold_of(&r.utterance_id).unwrap();
        for s in corpus.manifest.records().iter().filter(|s| s.speaker_id == r.speaker_id) {
            assert_eq!(plan.fold_of(&s.utterance_id), Some(fold));
        }
    }
}

#[test]
fn toy_training_writes_every_artifact_and_is_deterministic() {
    let a = TempDir::new().unwrap();
    trained_toy(a.path());
    let names: Vec<String> = files(&a.path().join("models"))
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            "config.json", "fold_0.ccsq", "fold_0_history.csv", "fold_1.ccsq", "fold_1_history.csv", "folds.csv",
            "oof.csv", "train_stats.json"
        ]
    );
    let oof = PredictionSet::load(&a.path().join("models/oof.csv")).unwrap();
    assert_eq!(oof.len(Task::Valence), 36);
    assert_eq!(oof.len(Task::Arousal), 36);

    let b = TempDir::new().unwrap();
    write_corpus(b.path(), 6, 6, 1);
    fs::write(b.path().join("config.json"), TOY_CONFIG).unwrap();
    let out = ccsq_in(
        b.path(),
        &["train", "--manifest", "manifest.csv", "--features", "feats", "--config", "config.json", "--models-out",
          "models"],
        &[("CCSQ_THREADS", "1")],
    );
    assert!(out.status.success());
    for p in files(&a.path().join("models")) {
        let q = b.path().join("models").join(p.file_name().unwrap());
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap(), "{} differs", p.display());
    }
}

#[test]
fn training_reports_config_and_numerical_errors() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 4, 4, 6);
    fs::write(d.join("bad.json"), TOY_CONFIG.replace("\"max_epochs\": 4", "\"max_epochs\": \"four\"")).unwrap();
    let args = |cfg: &'static str| {
        ["train", "--manifest", "manifest.csv", "--features", "feats", "--config", cfg, "--models-out", "models"]
    };
    let (c, err) = code(d, &args("bad.json"));
    assert_eq!(c, 2);
    assert!(err.contains("train.max_epochs"), "{err}");
    fs::write(d.join("unknown.json"), TOY_CONFIG.replace("\"seed\": 5", "\"seed\": 5, \"sead\": 1")).unwrap();
    let (c, err) = code(d, &args("unknown.json"));
    assert_eq!(c, 2);
    assert!(err.contains("sead"), "{err}");

    fs::write(d.join("hot.json"), TOY_CONFIG.replace("\"learning_rate\": 0.01", "\"learning_rate\": 1e308, \"clip_norm\": 1e308")).unwrap();
    let (c, err) = code(d, &args("hot.json"));
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("fold") && err.contains("epoch"), "{err}");
    assert!(!d.join("models").exists());

    // Features normalized one way, configuration expecting the other.
    ok(d, &["normalize", "--in", "feats", "--mode", "cdf", "--partition", "train", "--out", "norm"]);
    fs::write(d.join("good.json"), TOY_CONFIG).unwrap();
    let (c, err) = code(
        d,
        &["train", "--manifest", "manifest.csv", "--features", "norm", "--config", "good.json", "--models-out", "models"],
    );
    assert_eq!(c, 2);
    assert!(err.contains("cdf_adjust"), "{err}");
}

#[test]
fn constant_labels_are_a_numerical_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_corpus(d, 4, 4, 7);
    let text = fs::read_to_string(d.join("manifest.csv")).unwrap();
    let mut lines = text.lines();
    let mut flat = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut cols: Vec<&str> = line.split(',').collect();
        cols[4] = "0.25";
        flat += &(cols.join(",") + "\n");
    }
    fs::write(d.join("manifest.csv"), flat).unwrap();
    fs::write(d.join("config.json"), TOY_CONFIG.replace("[\"valence\", \"arousal\"]", "[\"valence\"]")).unwrap();
    let (c, err) = code(
        d,
        &["train", "--manifest", "manifest.csv", "--features", "feats", "--config", "config.json", "--models-out", "m"],
    );
    assert_eq!(c, 3, "{err}");
}

#[test]
fn predict_fuse_and_evaluate_identities() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    trained_toy(d);

    // A directory holding one model predicts exactly that model's outputs.
    fs::create_dir(d.join("single")).unwrap();
    fs::copy(d.join("models/fold_1.ccsq"), d.join("single/fold_1.ccsq")).unwrap();
    ok(d, &["predict", "--models", "single", "--manifest", "manifest.csv", "--features", "feats", "--out", "one.csv"]);
    let one = PredictionSet::load(&d.join("one.csv")).unwrap();
    let params = NetworkParams::load(&d.join("models/fold_1.ccsq")).unwrap();
    let manifest = load_manifest(&d.join("manifest.csv"), Partition::Dev).unwrap();
    let corpus = Corpus::load(manifest.clone(), &d.join("feats")).unwrap();
    for (i, r) in manifest.records().iter().enumerate() {
        let direct = predict_utterance(&params, corpus.features(i).view()).unwrap();
        for task in [Task::Arousal, Task::Valence] {
            let e = one.get(&r.utterance_id, task).unwrap();
            assert_eq!(e.value, direct[&task]);
            assert_eq!(e.n_models, 1);
        }
    }

    ok(d, &["predict", "--models", "models", "--manifest", "manifest.csv", "--features", "feats", "--out", "ens.csv"]);
    ok(d, &["fuse", "--a", "ens.csv", "--b", "ens.csv", "--task", "valence", "--out", "fused.csv"]);
    let ens = PredictionSet::load(&d.join("ens.csv")).unwrap();
    let fused = PredictionSet::load(&d.join("fused.csv")).unwrap();
    for (id, e) in ens.entries(Task::Valence) {
        assert_eq!(fused.get(id, Task::Valence).unwrap().value, e.value);
    }

    // Predictions equal to the labels.
    let mut gold = String::from("utterance_id,task,prediction,n_models\n");
    for r in manifest.records() {
        gold += &format!("{},arousal,{},1\n", r.utterance_id, r.arousal);
    }
    fs::write(d.join("gold.csv"), gold).unwrap();
    let text = ok(
        d,
        &["evaluate", "--pred", "gold.csv", "--manifest", "manifest.csv", "--train-stats", "models/train_stats.json",
          "--out", "report.json"],
    );
    assert!(text.contains("gold"));
    let rows: serde_json::Value = serde_json::from_slice(&fs::read(d.join("report.json")).unwrap()).unwrap();
    assert!((rows[0]["cc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((rows[0]["ccc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(d.join("report.txt").exists());

    // Rescaled predictions carry the training label moments.
    ok(
        d,
        &["predict", "--models", "models", "--manifest", "manifest.csv", "--features", "feats", "--out", "scaled.csv",
          "--rescale", "models/train_stats.json"],
    );
    let scaled = PredictionSet::load(&d.join("scaled.csv")).unwrap();
    let values: Vec<f64> = scaled.entries(Task::Arousal).map(|(_, e)| e.value).collect();
    let labels: Vec<f64> = manifest.records().iter().map(|r| r.arousal).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&values) - mean(&labels)).abs() < 1e-12);
}

#[test]
fn alignment_errors_list_ids_and_leave_no_output() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("a.csv"), "utterance_id,task,prediction,n_models\nu1,valence,0.1,1\nu2,valence,0.2,1\n").unwrap();
    fs::write(d.join("b.csv"), "utterance_id,task,prediction,n_models\nu1,valence,0.3,1\nu3,valence,0.2,1\n").unwrap();
    let (c, err) = code(d, &["fuse", "--a", "a.csv", "--b", "b.csv", "--task", "valence", "--out", "out/f.csv"]);
    assert_eq!(c, 2);
    assert!(err.contains("u2") && err.contains("u3"), "{err}");
    assert!(!d.join("out").exists());

    fs::write(d.join("m.csv"), "utterance_id,video_id,speaker_id,arousal,valence,feature_path\nu1,v,s,0.1,0.2,u1.csv\n").unwrap();
    let (c, err) = code(d, &["evaluate", "--pred", "a.csv", "--manifest", "m.csv", "--train-stats", "nope.json", "--out", "r.json"]);
    assert_eq!(c, 2, "{err}");
    let leftovers: Vec<PathBuf> = files(d).into_iter().filter(|p| p.file_name().unwrap().to_string_lossy().contains(".tmp")).collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
    assert!(!d.join("r.json").exists());
}

#[test]
fn scripted_run_with_fold_file() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    trained_toy(d);
    ok(d, &["folds", "--manifest", "manifest.csv", "--k", "2", "--strategy", "speaker", "--seed", "5", "--out", "folds.csv"]);
    ok(
        d,
        &["train", "--manifest", "manifest.csv", "--features", "feats", "--config", "config.json", "--models-out",
          "models2", "--folds", "folds.csv"],
    );
    // The fold file equals the plan the config would build.
    for name in ["fold_0.ccsq", "fold_1.ccsq", "oof.csv"] {
        assert_eq!(fs::read(d.join("models").join(name)).unwrap(), fs::read(d.join("models2").join(name)).unwrap());
    }
    ok(d, &["folds", "--manifest", "manifest.csv", "--k", "3", "--strategy", "random", "--out", "f3.csv"]);
    let (c, err) = code(
        d,
        &["train", "--manifest", "manifest.csv", "--features", "feats", "--config", "config.json", "--models-out",
          "m3", "--folds", "f3.csv"],
    );
    assert_eq!(c, 2);
    assert!(err.contains("k=3"), "{err}");
}
