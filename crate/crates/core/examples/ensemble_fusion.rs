//! Fold ensemble on a held-out partition, rescaling to training moments and
//! late fusion of two feature streams.
//!
//! ```text
//! cargo run --release --example ensemble_fusion
//! ```

use ccsq::dataset::{make_folds, DatasetManifest, Partition, Task};
use ccsq::pipeline::{
    fuse, normalize_corpus, predict_ensemble, report, report_text, rescale_set, run_cv, Corpus, ExperimentConfig,
    Normalization,
};
use ccsq::synth::{confounded_corpus, ConfoundedCorpusConfig};

/// Keeps the listed feature columns and the utterances selected by `keep`.
fn view(corpus: &Corpus, columns: &[usize], keep: impl Fn(usize) -> bool, partition: Partition) -> ccsq::Result<Corpus> {
    let idx: Vec<usize> = (0..corpus.len()).filter(|&i| keep(i)).collect();
    let records = idx.iter().map(|&i| corpus.manifest.records()[i].clone()).collect();
    let names = columns.iter().map(|&j| corpus.feature_names[j].clone()).collect();
    let features = idx.iter().map(|&i| corpus.features(i).select(ndarray::Axis(1), columns)).collect();
    Corpus::new(DatasetManifest::new(partition, records)?, names, features)
}

fn main() -> ccsq::Result<()> {
    let full = normalize_corpus(&confounded_corpus(&ConfoundedCorpusConfig::default())?, Normalization::Meanvar)?;
    let config = ExperimentConfig::from_json(
        r#"{"folds":{"strategy":"speaker","k":4},"seed":3,"network":{"preset":"video"},
            "train":{"learning_rate":0.01,"max_epochs":30},"normalization":"meanvar","tasks":["valence"]}"#,
        "example",
    )?;
    let is_dev = |i: usize| i.is_multiple_of(5);
    let streams = [("content", vec![0, 1, 2]), ("trait", vec![2, 3])];
    let mut dev_sets = Vec::new();
    let mut rows = Vec::new();
    for (name, columns) in &streams {
        let train = view(&full, columns, |i| !is_dev(i), Partition::Train)?;
        let dev = view(&full, columns, is_dev, Partition::Dev)?;
        let plan = make_folds(&train.manifest, config.folds.strategy, config.folds.k, config.seed)?;
        let cv = run_cv(&train, &plan, &config)?;
        let models: Vec<_> = cv.models.iter().map(|m| (m.id(), m.params.clone())).collect();
        let preds = rescale_set(&predict_ensemble(&models, &dev)?, &cv.train_stats)?;
        rows.extend(report(name, &preds, &dev.manifest, &cv.train_stats)?);
        dev_sets.push((preds, dev.manifest, cv.train_stats));
    }
    let fused = fuse(&dev_sets[0].0, &dev_sets[1].0, Task::Valence)?;
    rows.extend(report("fused", &fused, &dev_sets[0].1, &dev_sets[0].2)?);
    print!("{}", report_text(&rows));
    Ok(())
}
