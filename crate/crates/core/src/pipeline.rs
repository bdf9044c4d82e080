//! Experiment protocols: cross-validated training, fold ensembles,
//! prediction rescaling, fusion and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, make_folds, DatasetManifest, FoldPlan, FoldStrategy, Partition, Task};
use crate::error::{Error, Result};
use crate::io::{write_atomic, Table};
use crate::metrics::{evaluate_report, scale_predictions, MomentStats};
use crate::normalize::{cdf_adjust, meanvar_standardize, PartitionFeatureTable};
use crate::seqnet::{
    predict_utterance, speaker_accuracy, train_fold, EpochRecord, HeadKind, HeadSpec, HeadTask, LayerSpec,
    NetworkParams, NetworkSpec, Sample, Targets, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    CdfAdjust,
    Meanvar,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::CdfAdjust => "cdf_adjust",
            Normalization::Meanvar => "meanvar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldConfig {
    pub strategy: FoldStrategy,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// BLSTM(100), LSTM(40), identity heads.
    Audio,
    /// BLSTM(16), BLSTM(8), tanh heads.
    Video,
}

/// Recurrent stack and regression activation. Input width and heads are
/// filled in from the data and the task list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadKind>,
}

/// One experiment, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub folds: FoldConfig,
    /// Seeds the fold plan; fold `i` trains with `seed + i`, replacing
    /// `train.seed`.
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub normalization: Normalization,
    pub tasks: Vec<Task>,
    /// Adds a speaker softmax head trained against `train.adversarial_lambda`.
    #[serde(default)]
    pub adversarial: bool,
}

impl ExperimentConfig {
    /// Parses JSON, naming the path of the first offending field.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::Config(format!("{origin}: at `{}`: {}", e.path(), e.inner()))
        })?;
        config
            .validate()
            .map_err(|e| Error::Config(format!("{origin}: {}", e.message())))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.folds.k < 2 {
            return bad(format!("folds.k: need at least 2 folds, got {}", self.folds.k));
        }
        if self.tasks.is_empty() {
            return bad("tasks: at least one task is required".into());
        }
        let unique: BTreeSet<_> = self.tasks.iter().collect();
        if unique.len() != self.tasks.len() {
            return bad("tasks: duplicate task".into());
        }
        match (&self.network.preset, &self.network.layers) {
            (Some(_), Some(_)) => return bad("network: give either `preset` or `layers`, not both".into()),
            (None, None) => return bad("network: one of `preset` or `layers` is required".into()),
            (None, Some(layers)) if layers.is_empty() => {
                return bad("network.layers: at least one layer is required".into())
            }
            (None, Some(layers)) => {
                if let Some(i) = layers.iter().position(|l| l.size == 0) {
                    return bad(format!("network.layers[{i}].size must be positive"));
                }
            }
            _ => {}
        }
        if self.network.head == Some(HeadKind::Softmax) {
            return bad("network.head: regression heads are identity or tanh".into());
        }
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train.{}", e.message())))?;
        if self.adversarial && self.train.adversarial_lambda <= 0.0 {
            return bad("train.adversarial_lambda must be positive when adversarial is set".into());
        }
        if !self.adversarial && self.train.adversarial_lambda != 0.0 {
            return bad("train.adversarial_lambda is set but adversarial is false".into());
        }
        if let Some(t) = self.train.primary_task {
            if !self.tasks.contains(&t) {
                return bad(format!("train.primary_task `{t}` is not in tasks"));
            }
        }
        Ok(())
    }

    /// Network for `input_dim` features; the speaker head, when
    /// adversarial, has one class per speaker.
    pub fn network_spec(&self, input_dim: usize, speakers: usize) -> Result<NetworkSpec> {
        let speakers = self.adversarial.then_some(speakers);
        let mut spec = match self.network.preset {
            Some(Preset::Audio) => NetworkSpec::audio(input_dim, &self.tasks),
            Some(Preset::Video) => NetworkSpec::video(input_dim, &self.tasks, speakers),
            None => NetworkSpec {
                input_dim,
                layers: self.network.layers.clone().unwrap_or_default(),
                heads: Vec::new(),
            },
        };
        if self.network.preset != Some(Preset::Video) {
            spec.heads = self
                .tasks
                .iter()
                .map(|&t| HeadSpec { kind: HeadKind::Identity, width: 1, task: t.into() })
                .collect();
            if let Some(k) = speakers {
                spec.heads.push(HeadSpec { kind: HeadKind::Softmax, width: k, task: HeadTask::Speaker });
            }
        }
        if let Some(kind) = self.network.head {
            for h in spec.heads.iter_mut().filter(|h| h.task != HeadTask::Speaker) {
                h.kind = kind;
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Training settings for fold `fold`.
    pub fn fold_train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(fold as u64),
            ..self.train.clone()
        }
    }
}

/// A manifest with one feature sequence per record.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub feature_names: Vec<String>,
    features: Vec<Array2<f64>>,
    speakers: Vec<String>,
}

impl Corpus {
    /// `features` is aligned with `manifest.records()`.
    pub fn new(manifest: DatasetManifest, feature_names: Vec<String>, features: Vec<Array2<f64>>) -> Result<Self> {
        if features.len() != manifest.len() {
            return Err(Error::Dimension(format!(
                "{} feature sequences for {} records",
                features.len(),
                manifest.len()
            )));
        }
        for (r, f) in manifest.records().iter().zip(&features) {
            if f.ncols() != feature_names.len() {
                return Err(Error::Dimension(format!(
                    "utterance `{}` has {} features, expected {}",
                    r.utterance_id,
                    f.ncols(),
                    feature_names.len()
                )));
            }
            if f.nrows() == 0 {
                return Err(Error::TooShort(format!("utterance `{}` has no feature windows", r.utterance_id)));
            }
        }
        let speakers = manifest.speakers();
        Ok(Self {
            manifest,
            feature_names,
            features,
            speakers,
        })
    }

    /// Reads each record's feature CSV, resolving relative paths against
    /// `dir`.
    pub fn load(manifest: DatasetManifest, dir: &Path) -> Result<Self> {
        let tables = manifest
            .records()
            .par_iter()
            .map(|r| Table::load(&dir.join(&r.feature_path)))
            .collect::<Result<Vec<_>>>()?;
        let names = tables.first().map(|t| t.names.clone()).unwrap_or_default();
        for (r, t) in manifest.records().iter().zip(&tables) {
            if t.names != names {
                return Err(Error::Dimension(format!(
                    "feature columns of `{}` differ from those of `{}`",
                    r.feature_path,
                    manifest.records()[0].feature_path
                )));
            }
        }
        let features = tables.into_iter().map(|t| t.values).collect();
        Self::new(manifest, names, features)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Sorted speaker ids; a speaker's class index is its position here.
    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn features(&self, index: usize) -> &Array2<f64> {
        &self.features[index]
    }

    pub fn sample(&self, index: usize) -> Sample<'_> {
        let r = &self.manifest.records()[index];
        Sample {
            inputs: self.features[index].view(),
            targets: Targets {
                arousal: Some(r.arousal),
                valence: Some(r.valence),
                speaker: self.speakers.binary_search(&r.speaker_id).ok(),
            },
        }
    }

    pub fn samples(&self, indices: &[usize]) -> Vec<Sample<'_>> {
        indices.iter().map(|&i| self.sample(i)).collect()
    }

    /// Label moments per task over all records.
    pub fn train_stats(&self, tasks: &[Task]) -> Result<TrainStats> {
        tasks
            .iter()
            .map(|&t| {
                let labels: Vec<f64> = self.manifest.records().iter().map(|r| r.label(t)).collect();
                Ok((t, MomentStats::of(&labels)?))
            })
            .collect()
    }
}

/// Applies partition-level normalization to every feature column of the
/// corpus.
pub fn normalize_corpus(corpus: &Corpus, mode: Normalization) -> Result<Corpus> {
    let sequences: Vec<(String, Array2<f64>)> = corpus
        .manifest
        .records()
        .iter()
        .zip(&corpus.features)
        .map(|(r, f)| (r.utterance_id.clone(), f.clone()))
        .collect();
    let table = PartitionFeatureTable::from_sequences(corpus.manifest.partition, corpus.feature_names.clone(), &sequences)?;
    let adjusted = match mode {
        Normalization::CdfAdjust => cdf_adjust(&table),
        Normalization::Meanvar => meanvar_standardize(&table).0,
    };
    let features = adjusted.to_sequences().into_iter().map(|(_, f)| f).collect();
    Corpus::new(corpus.manifest.clone(), corpus.feature_names.clone(), features)
}

/// Label moments of the training manifest per task.
pub type TrainStats = BTreeMap<Task, MomentStats>;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEntry {
    pub value: f64,
    pub n_models: usize,
    /// Ids of the contributing models; empty when read back from CSV.
    pub sources: Vec<String>,
}

/// Utterance-level predictions per task.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    entries: BTreeMap<Task, BTreeMap<String, PredictionEntry>>,
}

pub const PREDICTION_HEADER: &str = "utterance_id,task,prediction,n_models";

impl PredictionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, utterance_id: &str, task: Task, entry: PredictionEntry) -> Result<()> {
        if !entry.value.is_finite() {
            return Err(Error::degenerate(format!("non-finite {task} prediction for `{utterance_id}`")));
        }
        let slot = self.entries.entry(task).or_default();
        if slot.contains_key(utterance_id) {
            return Err(Error::Validation(format!(
                "duplicate {task} prediction for `{utterance_id}`"
            )));
        }
        slot.insert(utterance_id.to_string(), entry);
        Ok(())
    }

    pub fn get(&self, utterance_id: &str, task: Task) -> Option<&PredictionEntry> {
        self.entries.get(&task)?.get(utterance_id)
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.entries.keys().copied().collect()
    }

    /// Sorted utterance ids predicted for `task`.
    pub fn ids(&self, task: Task) -> Vec<&str> {
        self.entries
            .get(&task)
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn entries(&self, task: Task) -> impl Iterator<Item = (&str, &PredictionEntry)> {
        self.entries
            .get(&task)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), v)))
    }

    pub fn len(&self, task: Task) -> usize {
        self.entries.get(&task).map_or(0, BTreeMap::len)
    }

    /// Rows ordered by task, then utterance id.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{PREDICTION_HEADER}\n");
        for (task, m) in &self.entries {
            for (id, e) in m {
                let _ = writeln!(out, "{id},{task},{},{}", fmt_f64(e.value), e.n_models);
            }
        }
        out
    }

    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == PREDICTION_HEADER => {}
            _ => return Err(err(1, format!("expected header `{PREDICTION_HEADER}`"))),
        }
        let mut set = Self::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(i + 1, format!("expected 4 fields, found {}", fields.len())));
            }
            let task: Task = fields[1].parse().map_err(|e: Error| err(i + 1, e.to_string()))?;
            let value: f64 = fields[2]
                .parse()
                .map_err(|_| err(i + 1, format!("bad prediction `{}`", fields[2])))?;
            let n_models: usize = fields[3]
                .parse()
                .map_err(|_| err(i + 1, format!("bad n_models `{}`", fields[3])))?;
            set.insert(fields[0], task, PredictionEntry { value, n_models, sources: Vec::new() })
                .map_err(|e| err(i + 1, e.to_string()))?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub fold: usize,
    pub params: NetworkParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Speaker-head accuracy on the fold's training utterances, when the
    /// network has a speaker head.
    pub train_speaker_accuracy: Option<f64>,
    /// Speaker-head accuracy on the held-out fold.
    pub val_speaker_accuracy: Option<f64>,
}

impl FoldModel {
    pub fn id(&self) -> String {
        format!("fold_{}", self.fold)
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub spec: NetworkSpec,
    pub models: Vec<FoldModel>,
    pub oof: PredictionSet,
    pub train_stats: TrainStats,
}

impl CvOutcome {
    /// Speaker-head accuracy averaged over folds: `(train, held_out)`.
    pub fn speaker_accuracy(&self) -> Option<(f64, f64)> {
        let mut train = 0.0;
        let mut val = 0.0;
        for m in &self.models {
            train += m.train_speaker_accuracy?;
            val += m.val_speaker_accuracy?;
        }
        let k = self.models.len() as f64;
        Some((train / k, val / k))
    }
}

/// A trained fold model and its held-out predictions by utterance index.
type FoldResult = (FoldModel, Vec<(usize, BTreeMap<Task, f64>)>);

/// Trains one model per fold, each validated (and early-stopped) on its
/// held-out fold, and collects the held-out predictions. Folds train in
/// parallel; results do not depend on the thread count.
pub fn run_cv(corpus: &Corpus, plan: &FoldPlan, config: &ExperimentConfig) -> Result<CvOutcome> {
    config.validate()?;
    plan.validate(&corpus.manifest)?;
    let spec = config.network_spec(corpus.input_dim(), corpus.speakers().len())?;
    let records = corpus.manifest.records();
    let fold_members: Vec<Vec<usize>> = (0..plan.k)
        .map(|f| {
            (0..records.len())
                .filter(|&i| plan.fold_of(&records[i].utterance_id) == Some(f))
                .collect()
        })
        .collect();

    let results: Vec<Result<FoldResult>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let held = &fold_members[fold];
            let train_idx: Vec<usize> = (0..records.len())
                .filter(|&i| plan.fold_of(&records[i].utterance_id) != Some(fold))
                .collect();
            let train = corpus.samples(&train_idx);
            let val = corpus.samples(held);
            let outcome = train_fold(&train, &val, &spec, &config.fold_train_config(fold))
                .map_err(|e| Error::Fold { fold, source: Box::new(e) })?;
            let preds = held
                .iter()
                .map(|&i| Ok((i, predict_utterance(&outcome.params, corpus.features(i).view())?)))
                .collect::<Result<Vec<_>>>()?;
            let (train_speaker_accuracy, val_speaker_accuracy) = match spec.speaker_head() {
                Some(_) => (
                    Some(speaker_accuracy(&outcome.params, &train)?),
                    Some(speaker_accuracy(&outcome.params, &val)?),
                ),
                None => (None, None),
            };
            Ok((
                FoldModel {
                    fold,
                    params: outcome.params,
                    history: outcome.history,
                    best_epoch: outcome.best_epoch,
                    train_speaker_accuracy,
                    val_speaker_accuracy,
                },
                preds,
            ))
        })
        .collect();

    let mut models = Vec::with_capacity(plan.k);
    let mut oof = PredictionSet::new();
    for result in results {
        let (model, preds) = result?;
        for (i, by_task) in preds {
            for (task, value) in by_task {
                oof.insert(
                    &records[i].utterance_id,
                    task,
                    PredictionEntry { value, n_models: 1, sources: vec![model.id()] },
                )?;
            }
        }
        models.push(model);
    }
    Ok(CvOutcome {
        spec,
        train_stats: corpus.train_stats(&config.tasks)?,
        models,
        oof,
    })
}

/// Averages the utterance-level predictions of all models. Models are
/// summed in id order, so the result does not depend on their order.
pub fn predict_ensemble(models: &[(String, NetworkParams)], corpus: &Corpus) -> Result<PredictionSet> {
    let Some((_, first)) = models.first() else {
        return Err(Error::Validation("ensemble needs at least one model".into()));
    };
    if let Some((id, _)) = models.iter().find(|(_, m)| m.spec != first.spec) {
        return Err(Error::Validation(format!("model `{id}` has a different network spec")));
    }
    if first.spec.input_dim != corpus.input_dim() {
        return Err(Error::Dimension(format!(
            "models expect {} features, data has {}",
            first.spec.input_dim,
            corpus.input_dim()
        )));
    }
    let mut ordered: Vec<&(String, NetworkParams)> = models.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0));
    let sources: Vec<String> = ordered.iter().map(|(id, _)| id.clone()).collect();
    let tasks = first.spec.regression_tasks();

    let per_utt = (0..corpus.len())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; tasks.len()];
            for (_, m) in &ordered {
                let p = predict_utterance(m, corpus.features(i).view())?;
                for (s, t) in sums.iter_mut().zip(&tasks) {
                    *s += p[t];
                }
            }
            Ok(sums)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut set = PredictionSet::new();
    for (r, sums) in corpus.manifest.records().iter().zip(per_utt) {
        for (&task, sum) in tasks.iter().zip(sums) {
            set.insert(
                &r.utterance_id,
                task,
                PredictionEntry {
                    value: sum / ordered.len() as f64,
                    n_models: ordered.len(),
                    sources: sources.clone(),
                },
            )?;
        }
    }
    Ok(set)
}

/// Rescales each task's predictions to the training label moments.
pub fn rescale_set(preds: &PredictionSet, train_stats: &TrainStats) -> Result<PredictionSet> {
    let mut out = PredictionSet::new();
    for task in preds.tasks() {
        let stats = train_stats
            .get(&task)
            .ok_or_else(|| Error::Validation(format!("no training statistics for {task}")))?;
        let (ids, entries): (Vec<&str>, Vec<&PredictionEntry>) = preds.entries(task).unzip();
        let values: Vec<f64> = entries.iter().map(|e| e.value).collect();
        let scaled = scale_predictions(&values, stats)?;
        for ((id, e), v) in ids.iter().zip(entries).zip(scaled) {
            out.insert(id, task, PredictionEntry { value: v, ..e.clone() })?;
        }
    }
    Ok(out)
}

fn id_mismatch(what: &str, a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> Error {
    let diff: Vec<&str> = a.symmetric_difference(b).copied().collect();
    let shown: Vec<&str> = diff.iter().take(20).copied().collect();
    let more = if diff.len() > shown.len() {
        format!(" (and {} more)", diff.len() - shown.len())
    } else {
        String::new()
    };
    Error::Validation(format!(
        "{what}: {} utterance ids differ: {}{more}",
        diff.len(),
        shown.join(", ")
    ))
}

/// Unweighted per-utterance average of two prediction sets for `task`.
pub fn fuse(a: &PredictionSet, b: &PredictionSet, task: Task) -> Result<PredictionSet> {
    let ia: BTreeSet<&str> = a.ids(task).into_iter().collect();
    let ib: BTreeSet<&str> = b.ids(task).into_iter().collect();
    if ia.is_empty() {
        return Err(Error::Validation(format!("no {task} predictions to fuse")));
    }
    if ia != ib {
        return Err(id_mismatch("fusion", &ia, &ib));
    }
    let mut out = PredictionSet::new();
    for (id, ea) in a.entries(task) {
        let eb = b.get(id, task).expect("same ids");
        let mut sources = ea.sources.clone();
        sources.extend(eb.sources.iter().cloned());
        out.insert(
            id,
            task,
            PredictionEntry {
                value: (ea.value + eb.value) / 2.0,
                n_models: ea.n_models + eb.n_models,
                sources,
            },
        )?;
    }
    Ok(out)
}

/// Merges train and dev, re-folds the union with the configured strategy
/// and `k`, and trains one model per fold.
pub fn final_protocol(train: &Corpus, dev: &Corpus, k: usize, config: &ExperimentConfig) -> Result<CvOutcome> {
    if train.feature_names != dev.feature_names {
        return Err(Error::Dimension("train and dev feature columns differ".into()));
    }
    let mut records = train.manifest.records().to_vec();
    records.extend(dev.manifest.records().iter().cloned());
    let manifest = DatasetManifest::new(Partition::Train, records)?;
    let mut features: Vec<Array2<f64>> = (0..train.len()).map(|i| train.features(i).clone()).collect();
    features.extend((0..dev.len()).map(|i| dev.features(i).clone()));
    let merged = Corpus::new(manifest, train.feature_names.clone(), features)?;
    let plan = make_folds(&merged.manifest, config.folds.strategy, k, config.seed)?;
    run_cv(&merged, &plan, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub task: Task,
    pub n: usize,
    pub cc: f64,
    pub ccc: f64,
    /// Rescaled to the training label moments.
    pub scaled_ccc: f64,
    /// Rescaled to the moments of the evaluated references themselves.
    pub scaled_ccc_self: f64,
}

/// CC, CCC and scaled CCC of every task in `preds` against the manifest
/// labels. Every predicted utterance must appear in `gold`.
pub fn report(
    approach: &str,
    preds: &PredictionSet,
    gold: &DatasetManifest,
    train_stats: &TrainStats,
) -> Result<Vec<ReportRow>> {
    let tasks = preds.tasks();
    if tasks.is_empty() {
        return Err(Error::Validation("no predictions to evaluate".into()));
    }
    let mut rows = Vec::new();
    for task in tasks {
        let ids: BTreeSet<&str> = preds.ids(task).into_iter().collect();
        let known: BTreeSet<&str> = gold.records().iter().map(|r| r.utterance_id.as_str()).collect();
        let missing: BTreeSet<&str> = ids.difference(&known).copied().collect();
        if !missing.is_empty() {
            return Err(id_mismatch("evaluation", &missing, &BTreeSet::new()));
        }
        let (pred, reference): (Vec<f64>, Vec<f64>) = preds
            .entries(task)
            .map(|(id, e)| (e.value, gold.get(id).expect("checked").label(task)))
            .unzip();
        let stats = train_stats
            .get(&task)
            .ok_or_else(|| Error::Validation(format!("no training statistics for {task}")))?;
        let r = evaluate_report(&pred, &reference, stats)?;
        let own = evaluate_report(&pred, &reference, &MomentStats::of(&reference)?)?;
        rows.push(ReportRow {
            approach: approach.to_string(),
            task,
            n: r.n,
            cc: r.cc,
            ccc: r.ccc,
            scaled_ccc: r.scaled_ccc,
            scaled_ccc_self: own.scaled_ccc,
        });
    }
    Ok(rows)
}

/// Aligned plain-text table of report rows.
pub fn report_text(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.approach.len()).max().unwrap_or(0).max("approach".len());
    let mut out = format!(
        "{:<width$}  {:<8}  {:>6}  {:>8}  {:>8}  {:>10}  {:>15}\n",
        "approach", "task", "n", "cc", "ccc", "scaled_ccc", "scaled_ccc_self"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:<8}  {:>6}  {:>8.4}  {:>8.4}  {:>10.4}  {:>15.4}",
            r.approach,
            r.task.name(),
            r.n,
            r.cc,
            r.ccc,
            r.scaled_ccc,
            r.scaled_ccc_self
        );
    }
    out
}

/// Writes the training statistics as JSON.
pub fn write_train_stats(path: &Path, stats: &TrainStats) -> Result<()> {
    crate::io::write_json(path, stats)
}

pub fn read_train_stats(path: &Path) -> Result<TrainStats> {
    crate::io::read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(v: f64) -> PredictionEntry {
        PredictionEntry { value: v, n_models: 1, sources: vec!["m".into()] }
    }

    fn set(values: &[(&str, f64)]) -> PredictionSet {
        let mut s = PredictionSet::new();
        for &(id, v) in values {
            s.insert(id, Task::Valence, entry(v)).unwrap();
        }
        s
    }

    #[test]
    fn fuse_examples() {
        let a = set(&[("u1", 0.1), ("u2", -0.2)]);
        let b = set(&[("u1", 0.5), ("u2", -0.2)]);
        let f = fuse(&a, &b, Task::Valence).unwrap();
        assert!((f.get("u1", Task::Valence).unwrap().value - 0.3).abs() < 1e-15);
        assert_eq!(f.get("u1", Task::Valence).unwrap().n_models, 2);
        let same = fuse(&a, &a, Task::Valence).unwrap();
        assert_eq!(same.get("u2", Task::Valence).unwrap().value, -0.2);
        let c = set(&[("u1", 0.1), ("u3", 0.0)]);
        let msg = fuse(&a, &c, Task::Valence).unwrap_err().to_string();
        assert!(msg.contains("u2") && msg.contains("u3"), "{msg}");
    }

    #[test]
    fn rescale_examples() {
        let s = set(&[("a", 0.0), ("b", 2.0)]);
        let stats = TrainStats::from([(Task::Valence, MomentStats { mean: 0.0, variance: 1.0, count: 2 })]);
        let r = rescale_set(&s, &stats).unwrap();
        assert_eq!(r.get("a", Task::Valence).unwrap().value, -1.0);
        assert_eq!(r.get("b", Task::Valence).unwrap().value, 1.0);
        assert!(rescale_set(&set(&[("a", 1.0), ("b", 1.0)]), &stats).is_err());
    }

    #[test]
    fn prediction_csv_round_trip() {
        let mut s = set(&[("u2", 0.25), ("u1", -1.0 / 3.0)]);
        s.insert("u1", Task::Arousal, entry(0.5)).unwrap();
        let text = s.to_csv();
        assert!(text.starts_with("utterance_id,task,prediction,n_models\nu1,arousal,0.5,1\n"), "{text}");
        let back = PredictionSet::parse_csv(&text, "x").unwrap();
        assert_eq!(back.get("u1", Task::Valence).unwrap().value, -1.0 / 3.0);
        assert_eq!(back.to_csv(), text);
        assert!(PredictionSet::parse_csv("utterance_id,task,prediction,n_models\nu1,valence,0.1,1\nu1,valence,0.2,1\n", "x").is_err());
        assert!(s.insert("u9", Task::Valence, entry(f64::NAN)).is_err());
    }

    fn config_json(extra: &str) -> String {
        format!(
            r#"{{"folds":{{"strategy":"random","k":6}},"network":{{"preset":"audio"}},
               "train":{{"learning_rate":0.01,"max_epochs":10{extra}}},
               "normalization":"cdf_adjust","tasks":["arousal"]}}"#
        )
    }

    #[test]
    fn config_errors_name_the_field() {
        ExperimentConfig::from_json(&config_json(""), "c.json").unwrap();
        let e = ExperimentConfig::from_json(&config_json(r#","patience":"x""#), "c.json").unwrap_err();
        assert!(e.to_string().contains("train.patience"), "{e}");
        let e = ExperimentConfig::from_json(&config_json(r#","learning_rate":-1"#), "c.json");
        assert!(e.is_err());
        let e = ExperimentConfig::from_json(&config_json(",\"patience\":0"), "c.json").unwrap_err();
        assert!(e.to_string().contains("train.patience"), "{e}");
        let e = ExperimentConfig::from_json(&config_json(",\"adversarial_lambda\":0.5"), "c.json").unwrap_err();
        assert!(e.to_string().contains("adversarial"), "{e}");
    }

    #[test]
    fn network_specs_from_config() {
        let mut c = ExperimentConfig::from_json(&config_json(""), "c").unwrap();
        let s = c.network_spec(1170, 10).unwrap();
        assert_eq!(s, NetworkSpec::audio(1170, &[Task::Arousal]));
        c.network = NetworkConfig { preset: Some(Preset::Video), layers: None, head: None };
        c.adversarial = true;
        c.train.adversarial_lambda = 0.3;
        c.tasks = vec![Task::Valence];
        assert_eq!(c.network_spec(8, 74).unwrap(), NetworkSpec::video(8, &[Task::Valence], Some(74)));
        assert_eq!(c.fold_train_config(3).seed, 3);
    }
}
