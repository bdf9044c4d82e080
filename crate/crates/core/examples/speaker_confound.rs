//! Random versus speaker-disjoint cross-validation on a corpus whose labels
//! carry a per-speaker offset, and the effect of an adversarial speaker
//! head on the disjoint protocol.
//!
//! ```text
//! cargo run --release --example speaker_confound -- [seeds=5] [lambda=2]
//! ```

use ccsq::dataset::{make_folds, FoldStrategy};
use ccsq::pipeline::{normalize_corpus, report, run_cv, ExperimentConfig, Normalization};
use ccsq::synth::{confounded_corpus, ConfoundedCorpusConfig};

fn main() -> ccsq::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(5, |v| v.parse().expect("seed count"));
    let lambda: f64 = args.next().map_or(2.0, |v| v.parse().expect("adversarial weight"));
    let mut means = [0.0; 3];
    println!("{:>4} {:>8} {:>8} {:>8} {:>10} {:>10}", "seed", "random", "disjoint", "adv", "spk_train", "spk_held");
    for seed in 0..seeds {
        let raw = confounded_corpus(&ConfoundedCorpusConfig { seed, ..Default::default() })?;
        let corpus = normalize_corpus(&raw, Normalization::Meanvar)?;
        let base = ExperimentConfig::from_json(
            &format!(
                r#"{{"folds":{{"strategy":"random","k":6}},"seed":{seed},"network":{{"preset":"video"}},
                   "train":{{"learning_rate":0.01,"max_epochs":80}},"normalization":"meanvar",
                   "tasks":["valence"]}}"#
            ),
            "example",
        )?;
        let mut scores = [0.0; 3];
        let mut accuracy = (0.0, 0.0);
        let arms = [(FoldStrategy::Random, 0.0), (FoldStrategy::Speaker, 0.0), (FoldStrategy::Speaker, lambda)];
        for (i, (strategy, lambda)) in arms.into_iter().enumerate() {
            let mut config = base.clone();
            config.folds.strategy = strategy;
            config.adversarial = lambda > 0.0;
            config.train.adversarial_lambda = lambda;
            let plan = make_folds(&corpus.manifest, strategy, config.folds.k, seed)?;
            let outcome = run_cv(&corpus, &plan, &config)?;
            scores[i] = report("oof", &outcome.oof, &corpus.manifest, &outcome.train_stats)?[0].ccc;
            if let Some(acc) = outcome.speaker_accuracy() {
                accuracy = acc;
            }
        }
        for (m, s) in means.iter_mut().zip(scores) {
            *m += s / seeds as f64;
        }
        println!(
            "{seed:>4} {:>8.4} {:>8.4} {:>8.4} {:>10.3} {:>10.3}",
            scores[0], scores[1], scores[2], accuracy.0, accuracy.1
        );
    }
    println!("mean {:>8.4} {:>8.4} {:>8.4}", means[0], means[1], means[2]);
    println!("gap recovered by the adversary: {:.0}%", 100.0 * (means[2] - means[1]) / (means[0] - means[1]));
    Ok(())
}
