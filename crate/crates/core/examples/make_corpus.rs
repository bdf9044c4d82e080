//! Writes a synthetic voice corpus (train and dev WAVs plus manifests).
//!
//! ```text
//! cargo run --example make_corpus -- <out_dir> [train_utterances] [dev_utterances]
//! ```

use std::path::PathBuf;

use ccsq::dataset::Partition;
use ccsq::synth::{write_speech_corpus, SpeechCorpusConfig};

fn main() -> ccsq::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_corpus".into()));
    let train_n: usize = args.next().map_or(300, |v| v.parse().expect("train utterance count"));
    let dev_n: usize = args.next().map_or(100, |v| v.parse().expect("dev utterance count"));

    let train = SpeechCorpusConfig { utterances: train_n, seed: 1, id_prefix: "train".into(), ..Default::default() };
    let dev = SpeechCorpusConfig { utterances: dev_n, seed: 2, id_prefix: "dev".into(), ..Default::default() };
    let m = write_speech_corpus(&out.join("train"), &train, Partition::Train)?;
    println!("train: {} utterances, {} speakers", m.len(), m.speakers().len());
    let m = write_speech_corpus(&out.join("dev"), &dev, Partition::Dev)?;
    println!("dev: {} utterances, {} speakers", m.len(), m.speakers().len());
    Ok(())
}
