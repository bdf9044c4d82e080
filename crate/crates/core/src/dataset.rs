//! Utterance manifests, label remapping and cross-validation fold plans.
//!
//! A manifest is a CSV file with the header
//! `utterance_id,video_id,speaker_id,arousal,valence,feature_path,arousal_range`.
//! `arousal_range` is `unit` when the arousal column is on `[0, 1]` (it is
//! remapped to `[-1, 1]` on load) or `signed` when it is already on `[-1, 1]`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 7] = [
    "utterance_id",
    "video_id",
    "speaker_id",
    "arousal",
    "valence",
    "feature_path",
    "arousal_range",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "test" => Ok(Partition::Test),
            other => Err(Error::Validation(format!("unknown partition `{other}`"))),
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        })
    }
}

/// Affect dimension predicted by a regression head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Arousal,
    Valence,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Arousal => "arousal",
            Task::Valence => "valence",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arousal" => Ok(Task::Arousal),
            "valence" => Ok(Task::Valence),
            other => Err(Error::Validation(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub video_id: String,
    pub speaker_id: String,
    /// Always on `[-1, 1]`.
    pub arousal: f64,
    pub valence: f64,
    pub feature_path: String,
}

impl UtteranceRecord {
    pub fn label(&self, task: Task) -> f64 {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub partition: Partition,
    records: Vec<UtteranceRecord>,
}

/// Maps an arousal rating on `[0, 1]` onto `[-1, 1]`.
pub fn map_arousal(raw: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(Error::Range {
            value: raw,
            range: "[0, 1]",
        });
    }
    Ok(2.0 * raw - 1.0)
}

fn check_signed(value: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(Error::Range {
            value,
            range: "[-1, 1]",
        });
    }
    Ok(value)
}

impl DatasetManifest {
    /// Validates the manifest invariants: non-empty, unique ids, distinct
    /// feature paths and labels on `[-1, 1]`.
    pub fn new(partition: Partition, records: Vec<UtteranceRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation("manifest has no records".into()));
        }
        let mut ids = HashSet::new();
        let mut paths = HashSet::new();
        for r in &records {
            if !ids.insert(r.utterance_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate utterance_id `{}`",
                    r.utterance_id
                )));
            }
            if !paths.insert(r.feature_path.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate feature_path `{}`",
                    r.feature_path
                )));
            }
            check_signed(r.arousal)?;
            check_signed(r.valence)?;
        }
        Ok(Self { partition, records })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.utterance_id == utterance_id)
    }

    /// Distinct speaker ids in sorted order.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.speaker_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Keeps only the records selected by `keep`, in their original order.
    pub fn subset(&self, mut keep: impl FnMut(&UtteranceRecord) -> bool) -> Result<Self> {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::new(self.partition, records)
    }

    /// Writes the manifest with `arousal_range = signed`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(MANIFEST_HEADER).map_err(csv_err(path))?;
            for r in &self.records {
                w.write_record([
                    r.utterance_id.as_str(),
                    r.video_id.as_str(),
                    r.speaker_id.as_str(),
                    &fmt_f64(r.arousal),
                    &fmt_f64(r.valence),
                    r.feature_path.as_str(),
                    "signed",
                ])
                .map_err(csv_err(path))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        crate::io::write_atomic(path, &buf)
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Parse {
        path: path.display().to_string(),
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        message: e.to_string(),
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v:?}")
}

/// Loads a manifest CSV, remapping `unit` arousal columns to `[-1, 1]`.
pub fn load_manifest(path: &Path, partition: Partition) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string(), partition)
}

pub fn parse_manifest(text: &str, origin: &str, partition: Partition) -> Result<DatasetManifest> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_owned(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let got: Vec<&str> = header.iter().collect();
    if got != MANIFEST_HEADER {
        return Err(parse_err(
            1,
            format!("expected header `{}`", MANIFEST_HEADER.join(",")),
        ));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let number = |idx: usize| -> Result<f64> {
            row[idx].parse::<f64>().map_err(|_| {
                parse_err(
                    line,
                    format!("column `{}`: not a number: `{}`", MANIFEST_HEADER[idx], &row[idx]),
                )
            })
        };
        let raw_arousal = number(3)?;
        let valence = number(4)?;
        let at_line = |e: Error| parse_err(line, e.to_string());
        let arousal = match &row[6] {
            "unit" => map_arousal(raw_arousal).map_err(at_line)?,
            "signed" => check_signed(raw_arousal).map_err(at_line)?,
            other => {
                return Err(parse_err(
                    line,
                    format!("arousal_range must be `unit` or `signed`, got `{other}`"),
                ))
            }
        };
        check_signed(valence).map_err(at_line)?;
        let utterance_id = row[0].to_owned();
        if !seen.insert(utterance_id.clone()) {
            return Err(parse_err(
                line,
                format!("duplicate utterance_id `{utterance_id}`"),
            ));
        }
        records.push(UtteranceRecord {
            utterance_id,
            video_id: row[1].to_owned(),
            speaker_id: row[2].to_owned(),
            arousal,
            valence,
            feature_path: row[5].to_owned(),
        });
    }
    DatasetManifest::new(partition, records)
}

/// Assignment of every utterance of a manifest to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub speaker_disjoint: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldStrategy {
    Random,
    Speaker,
}

impl FromStr for FoldStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(FoldStrategy::Random),
            "speaker" => Ok(FoldStrategy::Speaker),
            other => Err(Error::Validation(format!("unknown fold strategy `{other}`"))),
        }
    }
}

pub fn make_folds(
    manifest: &DatasetManifest,
    strategy: FoldStrategy,
    k: usize,
    seed: u64,
) -> Result<FoldPlan> {
    match strategy {
        FoldStrategy::Random => make_random_folds(manifest, k, seed),
        FoldStrategy::Speaker => make_speaker_folds(manifest, k, seed),
    }
}

/// Seeded uniform shuffle followed by round-robin assignment.
pub fn make_random_folds(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if manifest.len() < k {
        return Err(Error::Config(format!(
            "{k} folds requested for {} records",
            manifest.len()
        )));
    }
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let assignment = order
        .iter()
        .enumerate()
        .map(|(pos, &idx)| (manifest.records[idx].utterance_id.clone(), pos % k))
        .collect();
    Ok(FoldPlan {
        k,
        assignment,
        speaker_disjoint: false,
        seed,
    })
}

/// Greedy speaker balancing: speakers sorted by utterance count (descending,
/// ties by id) are placed one at a time into the fold with the fewest
/// utterances so far (ties to the lowest fold index).
///
/// The result does not depend on `seed`; it is recorded for provenance only.
pub fn make_speaker_folds(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in manifest.records() {
        *counts.entry(r.speaker_id.as_str()).or_default() += 1;
    }
    if counts.len() < k {
        return Err(Error::Config(format!(
            "{k} speaker-disjoint folds requested but only {} speakers",
            counts.len()
        )));
    }
    let mut speakers: Vec<(&str, usize)> = counts.into_iter().collect();
    speakers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut fold_sizes = vec![0usize; k];
    let mut speaker_fold: BTreeMap<&str, usize> = BTreeMap::new();
    for (speaker, n) in speakers {
        let target = (0..k).min_by_key(|&f| (fold_sizes[f], f)).unwrap();
        fold_sizes[target] += n;
        speaker_fold.insert(speaker, target);
    }
    let assignment = manifest
        .records()
        .iter()
        .map(|r| (r.utterance_id.clone(), speaker_fold[r.speaker_id.as_str()]))
        .collect();
    Ok(FoldPlan {
        k,
        assignment,
        speaker_disjoint: true,
        seed,
    })
}

impl FoldPlan {
    pub fn fold_of(&self, utterance_id: &str) -> Option<usize> {
        self.assignment.get(utterance_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Checks the plan covers exactly this manifest with non-empty folds, and
    /// that speaker sets are disjoint when the plan claims so.
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<()> {
        if self.assignment.len() != manifest.len() {
            return Err(Error::Validation(format!(
                "fold plan covers {} utterances, manifest has {}",
                self.assignment.len(),
                manifest.len()
            )));
        }
        let mut speaker_folds: BTreeMap<&str, usize> = BTreeMap::new();
        for r in manifest.records() {
            let fold = self.fold_of(&r.utterance_id).ok_or_else(|| {
                Error::Validation(format!("utterance `{}` missing from fold plan", r.utterance_id))
            })?;
            if fold >= self.k {
                return Err(Error::Validation(format!(
                    "utterance `{}` assigned to fold {fold} >= k = {}",
                    r.utterance_id, self.k
                )));
            }
            if self.speaker_disjoint {
                let prev = *speaker_folds.entry(r.speaker_id.as_str()).or_insert(fold);
                if prev != fold {
                    return Err(Error::Validation(format!(
                        "speaker `{}` appears in folds {prev} and {fold}",
                        r.speaker_id
                    )));
                }
            }
        }
        if let Some(empty) = self.fold_sizes().iter().position(|&n| n == 0) {
            return Err(Error::Validation(format!("fold {empty} is empty")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# k={} seed={} speaker_disjoint={}\nutterance_id,fold\n",
            self.k, self.seed, self.speaker_disjoint
        );
        for (id, fold) in &self.assignment {
            out.push_str(&format!("{id},{fold}\n"));
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_owned(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| err(1, "empty fold plan".into()))?;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| err(1, "missing `# k=.. seed=.. speaker_disjoint=..` comment".into()))?;
        let (mut k, mut seed, mut disjoint) = (None, None, None);
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("k", v)) => k = v.parse::<usize>().ok(),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("speaker_disjoint", v)) => disjoint = v.parse::<bool>().ok(),
                _ => return Err(err(1, format!("unexpected header field `{kv}`"))),
            }
        }
        let (Some(k), Some(seed), Some(speaker_disjoint)) = (k, seed, disjoint) else {
            return Err(err(1, "header must define k, seed and speaker_disjoint".into()));
        };
        match lines.next() {
            Some((_, "utterance_id,fold")) => {}
            _ => return Err(err(2, "expected `utterance_id,fold` header".into())),
        }
        let mut assignment = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (id, fold) = line
                .rsplit_once(',')
                .ok_or_else(|| err(i + 1, format!("malformed row `{line}`")))?;
            let fold: usize = fold
                .trim()
                .parse()
                .map_err(|_| err(i + 1, format!("bad fold index `{fold}`")))?;
            if fold >= k {
                return Err(err(i + 1, format!("fold {fold} out of range for k = {k}")));
            }
            if assignment.insert(id.trim().to_owned(), fold).is_some() {
                return Err(err(i + 1, format!("utterance `{id}` listed twice")));
            }
        }
        Ok(Self {
            k,
            assignment,
            speaker_disjoint,
            seed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }
}
