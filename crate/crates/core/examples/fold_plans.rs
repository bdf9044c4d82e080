//! Random and speaker-disjoint fold plans over the same manifest, and how
//! many speakers each plan shares between training and held-out data.
//!
//! ```text
//! cargo run --example fold_plans -- [k]
//! ```

use std::collections::BTreeSet;

use ccsq::dataset::{make_folds, FoldStrategy};
use ccsq::synth::{confounded_corpus, ConfoundedCorpusConfig};

fn main() -> ccsq::Result<()> {
    let k: usize = std::env::args().nth(1).map_or(5, |v| v.parse().expect("fold count"));
    let corpus = confounded_corpus(&ConfoundedCorpusConfig::default())?;
    let manifest = &corpus.manifest;
    for strategy in [FoldStrategy::Random, FoldStrategy::Speaker] {
        let plan = make_folds(manifest, strategy, k, 0)?;
        let mut shared = 0;
        for fold in 0..k {
            let speakers = |inside: bool| -> BTreeSet<&str> {
                manifest
                    .records()
                    .iter()
                    .filter(|r| (plan.fold_of(&r.utterance_id) == Some(fold)) == inside)
                    .map(|r| r.speaker_id.as_str())
                    .collect()
            };
            shared += speakers(true).intersection(&speakers(false)).count();
        }
        println!(
            "{strategy:?}: fold sizes {:?}, speakers seen in both train and held-out (summed over folds): {shared}",
            plan.fold_sizes()
        );
    }
    Ok(())
}
