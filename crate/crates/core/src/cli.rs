//! Command-line front end. Each subcommand reads and writes files only;
//! every output is written atomically.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::dataset::{load_manifest, make_folds, FoldPlan, FoldStrategy, Partition, Task};
use crate::error::{Error, Result};
use crate::features::{
    extract_lld, functional_sequence, pool_embeddings, read_wav, LldMatrix, DEFAULT_STEP_S, DEFAULT_WINDOW_S,
    LLD_HOP_S,
};
use crate::io::{csv_files, write_atomic, write_json, Sidecar, Table};
use crate::normalize::{apply_stats, cdf_adjust, meanvar_standardize, NormStats, PartitionFeatureTable};
use crate::pipeline::{
    fuse, predict_ensemble, read_train_stats, report, report_text, rescale_set, run_cv, write_train_stats, Corpus,
    ExperimentConfig, Normalization, PredictionSet,
};
use crate::seqnet::{write_history, NetworkParams};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ccsq", version, about = "Dimensional emotion regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Acoustic descriptors and window functionals from WAV files.
    Extract(ExtractArgs),
    /// Window means of per-frame embeddings.
    Pool(PoolArgs),
    /// Partition-level Gaussianization or standardization.
    Normalize(NormalizeArgs),
    /// Fold plan for a manifest.
    Folds(FoldsArgs),
    /// Cross-validated training: one model per fold.
    Train(TrainArgs),
    /// Ensemble predictions of a model directory.
    Predict(PredictArgs),
    /// Average two prediction sets.
    Fuse(FuseArgs),
    /// CC, CCC and scaled CCC of predictions.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Single mono WAV file.
    #[arg(long, conflicts_with = "wav_list", required_unless_present = "wav_list")]
    wav: Option<PathBuf>,
    /// Text file with one WAV path per line.
    #[arg(long)]
    wav_list: Option<PathBuf>,
    #[arg(long)]
    lld_out: PathBuf,
    #[arg(long)]
    functionals_out: PathBuf,
    /// External descriptor CSV (with --wav) or a directory of `<stem>.csv`.
    #[arg(long)]
    extra_lld: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PoolArgs {
    /// Embedding CSV or directory of CSVs.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Embedding frames per second.
    #[arg(long)]
    frame_rate: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Cdf,
    Meanvar,
}

#[derive(Debug, Args)]
struct NormalizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    partition: Partition,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, conflicts_with = "stats_in")]
    stats_out: Option<PathBuf>,
    #[arg(long)]
    stats_in: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FoldsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    strategy: FoldStrategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    models_out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fold plan written by `folds`; built from the config when absent.
    #[arg(long)]
    folds: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Training statistics JSON; rescales predictions to its moments.
    #[arg(long)]
    rescale: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    train_stats: PathBuf,
    /// JSON report; an aligned text twin is written next to it.
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CCSQ_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("CCSQ_THREADS must be a positive integer, got `{value}`")))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract(a) => extract(a),
        Command::Pool(a) => pool(a),
        Command::Normalize(a) => normalize(a),
        Command::Folds(a) => folds(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Validation(format!("cannot derive an utterance id from `{}`", path.display())))
}

fn read_list(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn load_lld(path: &Path) -> Result<LldMatrix> {
    let period = Sidecar::load_for(path)?
        .and_then(|s| s.frame_period_s)
        .unwrap_or(LLD_HOP_S);
    LldMatrix::from_table(Table::load(path)?, period)
}

fn extract_one(wav: &Path, extra: Option<&Path>, lld_out: &Path, func_out: &Path) -> Result<()> {
    let id = stem(wav)?;
    let (samples, rate) = read_wav(wav)?;
    let mut lld = extract_lld(&samples, rate)?;
    if let Some(extra) = extra {
        lld = lld.concat_columns(&load_lld(extra)?)?;
    }
    let lld_path = lld_out.join(format!("{id}.csv"));
    lld.to_table().write(&lld_path)?;
    lld.sidecar().write_for(&lld_path)?;
    let seq = functional_sequence(&lld, DEFAULT_WINDOW_S, DEFAULT_STEP_S)?;
    let func_path = func_out.join(format!("{id}.csv"));
    seq.to_table().write(&func_path)?;
    seq.sidecar("functionals").write_for(&func_path)
}

fn extract(a: ExtractArgs) -> Result<()> {
    let (wavs, batch) = match (&a.wav, &a.wav_list) {
        (Some(w), _) => (vec![w.clone()], false),
        (None, Some(list)) => (read_list(list)?, true),
        (None, None) => unreachable!("clap requires one of --wav and --wav-list"),
    };
    let extra_for = |wav: &Path| -> Result<Option<PathBuf>> {
        match &a.extra_lld {
            None => Ok(None),
            Some(p) if p.is_dir() => Ok(Some(p.join(format!("{}.csv", stem(wav)?)))),
            Some(_) if batch => Err(Error::Validation(
                "--extra-lld must be a directory of <stem>.csv files with --wav-list".into(),
            )),
            Some(p) => Ok(Some(p.clone())),
        }
    };
    let results: Vec<Result<()>> = wavs
        .par_iter()
        .map(|w| extract_one(w, extra_for(w)?.as_deref(), &a.lld_out, &a.functionals_out))
        .collect();
    let mut failures = 0;
    for (w, r) in wavs.iter().zip(&results) {
        if let Err(e) = r {
            eprintln!("{}: {e}", w.display());
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::Validation(format!(
            "{failures} of {} files failed",
            wavs.len()
        )));
    }
    eprintln!("extracted {} utterances", wavs.len());
    Ok(())
}

fn table_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    let files = if path.is_dir() { csv_files(path)? } else { vec![path.to_path_buf()] };
    if files.is_empty() {
        return Err(Error::Validation(format!("no CSV files in `{}`", path.display())));
    }
    Ok(files)
}

fn pool(a: PoolArgs) -> Result<()> {
    let files = table_inputs(&a.input)?;
    files
        .par_iter()
        .map(|f| {
            let t = Table::load(f)?;
            let seq = pool_embeddings(t.values.view(), &t.names, a.frame_rate, DEFAULT_WINDOW_S, DEFAULT_STEP_S)?;
            let out = a.out.join(format!("{}.csv", stem(f)?));
            seq.to_table().write(&out)?;
            let mut side = seq.sidecar("pooled");
            side.frame_rate = Some(a.frame_rate);
            side.write_for(&out)
        })
        .collect::<Result<Vec<()>>>()?;
    eprintln!("pooled {} files", files.len());
    Ok(())
}

fn normalize(a: NormalizeArgs) -> Result<()> {
    let files = table_inputs(&a.input)?;
    let tables = files.par_iter().map(|f| Table::load(f)).collect::<Result<Vec<_>>>()?;
    let names = tables[0].names.clone();
    let mut sequences = Vec::with_capacity(files.len());
    for (f, t) in files.iter().zip(tables) {
        if t.names != names {
            return Err(Error::Dimension(format!(
                "`{}` has {} columns that differ from `{}` ({} columns)",
                f.display(),
                t.names.len(),
                files[0].display(),
                names.len()
            )));
        }
        sequences.push((stem(f)?, t.values));
    }
    let table = PartitionFeatureTable::from_sequences(a.partition, names.clone(), &sequences)?;
    let (adjusted, tag) = match a.mode {
        Mode::Cdf => {
            if a.stats_in.is_some() || a.stats_out.is_some() {
                return Err(Error::Validation("--stats-in/--stats-out apply to --mode meanvar only".into()));
            }
            (cdf_adjust(&table), Normalization::CdfAdjust)
        }
        Mode::Meanvar => match &a.stats_in {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let stats = NormStats::parse_csv(&text, &p.display().to_string())?;
                (apply_stats(&table, &stats)?, Normalization::Meanvar)
            }
            None => {
                let (t, stats) = meanvar_standardize(&table);
                if let Some(p) = &a.stats_out {
                    write_atomic(p, stats.to_csv().as_bytes())?;
                }
                (t, Normalization::Meanvar)
            }
        },
    };
    for ((id, values), src) in adjusted.to_sequences().into_iter().zip(&files) {
        let out = a.out.join(format!("{id}.csv"));
        Table { names: names.clone(), values }.write(&out)?;
        let mut side = Sidecar::load_for(src)?.unwrap_or_default();
        if side.kind.is_empty() {
            side.kind = "functionals".into();
        }
        side.normalization = Some(tag.name().to_string());
        side.write_for(&out)?;
    }
    eprintln!("normalized {} utterances ({} rows)", files.len(), table.rows.nrows());
    Ok(())
}

fn folds(a: FoldsArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest, Partition::Train)?;
    let plan = make_folds(&manifest, a.strategy, a.k, a.seed)?;
    plan.write(&a.out)?;
    eprintln!("fold sizes {:?}", plan.fold_sizes());
    Ok(())
}

fn check_normalization(corpus: &Corpus, dir: &Path, expected: Normalization) -> Result<()> {
    let first = &corpus.manifest.records()[0];
    let path = dir.join(&first.feature_path);
    match Sidecar::load_for(&path)?.and_then(|s| s.normalization) {
        Some(tag) if tag != expected.name() => Err(Error::Config(format!(
            "config normalization is `{}` but `{}` was normalized with `{tag}`",
            expected.name(),
            path.display()
        ))),
        Some(_) => Ok(()),
        None => {
            eprintln!(
                "warning: `{}` carries no normalization tag; using features as given",
                path.display()
            );
            Ok(())
        }
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let manifest = load_manifest(&a.manifest, Partition::Train)?;
    let corpus = Corpus::load(manifest, &a.features)?;
    check_normalization(&corpus, &a.features, config.normalization)?;
    let plan = match &a.folds {
        Some(p) => {
            let plan = FoldPlan::load(p)?;
            if plan.k != config.folds.k {
                return Err(Error::Config(format!(
                    "fold plan has k={} but config folds.k={}",
                    plan.k, config.folds.k
                )));
            }
            plan
        }
        None => make_folds(&corpus.manifest, config.folds.strategy, config.folds.k, config.seed)?,
    };
    let outcome = run_cv(&corpus, &plan, &config)?;
    let dir = &a.models_out;
    for m in &outcome.models {
        m.params.save(&dir.join(format!("{}.ccsq", m.id())))?;
        write_history(&dir.join(format!("{}_history.csv", m.id())), &m.history)?;
        eprintln!(
            "fold {}: best epoch {} of {}, val CCC {:.4}",
            m.fold,
            m.best_epoch,
            m.history.len(),
            m.history[m.best_epoch - 1].val_ccc
        );
    }
    outcome.oof.write(&dir.join("oof.csv"))?;
    write_train_stats(&dir.join("train_stats.json"), &outcome.train_stats)?;
    plan.write(&dir.join("folds.csv"))?;
    write_json(&dir.join("config.json"), &config)?;
    Ok(())
}

fn load_models(dir: &Path) -> Result<Vec<(String, NetworkParams)>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "ccsq") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no .ccsq models in `{}`", dir.display())));
    }
    paths.iter().map(|p| Ok((stem(p)?, NetworkParams::load(p)?))).collect()
}

fn predict(a: PredictArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let manifest = load_manifest(&a.manifest, Partition::Dev)?;
    let corpus = Corpus::load(manifest, &a.features)?;
    let mut preds = predict_ensemble(&models, &corpus)?;
    if let Some(p) = &a.rescale {
        preds = rescale_set(&preds, &read_train_stats(p)?)?;
    }
    preds.write(&a.out)?;
    eprintln!("{} models, {} utterances", models.len(), corpus.len());
    Ok(())
}

fn fuse_cmd(a: FuseArgs) -> Result<()> {
    let fused = fuse(&PredictionSet::load(&a.a)?, &PredictionSet::load(&a.b)?, a.task)?;
    fused.write(&a.out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let preds = PredictionSet::load(&a.pred)?;
    let manifest = load_manifest(&a.manifest, Partition::Dev)?;
    let stats = read_train_stats(&a.train_stats)?;
    let approach = stem(&a.pred)?;
    let rows = report(&approach, &preds, &manifest, &stats)?;
    write_json(&a.out, &rows)?;
    let text = report_text(&rows);
    write_atomic(&a.out.with_extension("txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
