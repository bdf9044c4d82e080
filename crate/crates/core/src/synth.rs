//! Seeded synthetic corpora for demonstrations and end-to-end tests.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{DatasetManifest, Partition, UtteranceRecord};
use crate::error::Result;
use crate::features::write_wav_pcm16;
use crate::io::write_atomic;
use crate::pipeline::Corpus;

/// Harmonic voice-like signals whose loudness, pitch and brightness follow
/// arousal and whose breathiness follows valence. Speakers differ in pitch,
/// timbre and gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechCorpusConfig {
    pub utterances: usize,
    pub speakers: usize,
    pub sample_rate: u32,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for SpeechCorpusConfig {
    fn default() -> Self {
        Self {
            utterances: 300,
            speakers: 20,
            sample_rate: 16_000,
            min_seconds: 4.0,
            max_seconds: 6.0,
            seed: 0,
            id_prefix: "utt".into(),
        }
    }
}

struct Voice {
    f0: f64,
    rolloff: f64,
    gain: f64,
}

pub struct SynthUtterance {
    pub record: UtteranceRecord,
    pub samples: Vec<f64>,
}

fn voice_signal(voice: &Voice, arousal: f64, valence: f64, seconds: f64, rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    let f0 = voice.f0 * (1.0 + 0.2 * arousal);
    let level = 0.08 * voice.gain * 10f64.powf(0.5 * arousal);
    let tilt = (0.25 * arousal).exp();
    let breath = 0.35 * (1.0 - valence) / 2.0;
    let phase0: f64 = rng.gen_range(0.0..2.0 * PI);
    let syllable_rate = rng.gen_range(3.0..5.0);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let harmonics: Vec<f64> = (0..10)
        .map(|k| (voice.rolloff * tilt).powi(k).min(1.0))
        .collect();
    let norm: f64 = harmonics.iter().map(|a| a * a).sum::<f64>().sqrt();
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let nyquist = rate as f64 / 2.0;
            let voiced: f64 = harmonics
                .iter()
                .enumerate()
                .filter(|(k, _)| f0 * (*k as f64 + 1.0) < nyquist)
                .map(|(k, a)| a * (2.0 * PI * f0 * (k as f64 + 1.0) * t + phase0 * k as f64).sin())
                .sum::<f64>()
                / norm;
            let envelope = 0.6 + 0.4 * (2.0 * PI * syllable_rate * t).sin();
            let sample = level * envelope * ((1.0 - breath) * voiced + breath * noise.sample(rng));
            sample.clamp(-0.99, 0.99)
        })
        .collect()
}

/// Generates the utterances of a voice-like corpus with arousal and valence
/// labels on `[-0.9, 0.9]`. Feature paths are `<id>.csv`.
pub fn speech_corpus(config: &SpeechCorpusConfig) -> Vec<SynthUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let voices: Vec<Voice> = (0..config.speakers)
        .map(|_| Voice {
            f0: rng.gen_range(100.0..240.0),
            rolloff: rng.gen_range(0.45..0.75),
            gain: rng.gen_range(0.8..1.25),
        })
        .collect();
    (0..config.utterances)
        .map(|u| {
            let s = u % config.speakers;
            let arousal = rng.gen_range(-0.9..0.9);
            let valence = rng.gen_range(-0.9..0.9);
            let seconds = rng.gen_range(config.min_seconds..=config.max_seconds);
            let samples = voice_signal(&voices[s], arousal, valence, seconds, config.sample_rate, &mut rng);
            let id = format!("{}{:04}", config.id_prefix, u);
            SynthUtterance {
                record: UtteranceRecord {
                    utterance_id: id.clone(),
                    video_id: format!("{}_vid{:03}", config.id_prefix, u / 5),
                    speaker_id: format!("{}spk{:02}", config.id_prefix, s),
                    arousal,
                    valence,
                    feature_path: format!("{id}.csv"),
                },
                samples,
            }
        })
        .collect()
}

/// Writes `wav/<id>.wav`, `wav_list.txt` and `manifest.csv` under `dir`
/// and returns the manifest.
pub fn write_speech_corpus(dir: &Path, config: &SpeechCorpusConfig, partition: Partition) -> Result<DatasetManifest> {
    let utterances = speech_corpus(config);
    let mut list = String::new();
    for u in &utterances {
        let path = dir.join("wav").join(format!("{}.wav", u.record.utterance_id));
        write_wav_pcm16(&path, &u.samples, config.sample_rate)?;
        list.push_str(&format!("{}\n", path.display()));
    }
    write_atomic(&dir.join("wav_list.txt"), list.as_bytes())?;
    let manifest = DatasetManifest::new(partition, utterances.into_iter().map(|u| u.record).collect())?;
    manifest.write(&dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Feature-sequence corpus in which the label carries a per-speaker
/// offset.
///
/// Each utterance has a content level `c` and belongs to a speaker with
/// offset `o`; the label is `c + o`. Features per window are noisy views of
/// `c`, a noisy speaker-trait channel carrying `o`, and a clean speaker
/// identity embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundedCorpusConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub content_dims: usize,
    pub identity_dims: usize,
    pub min_windows: usize,
    pub max_windows: usize,
    pub content_noise: f64,
    pub trait_noise: f64,
    pub offset_std: f64,
    pub seed: u64,
}

impl Default for ConfoundedCorpusConfig {
    fn default() -> Self {
        Self {
            speakers: 16,
            utterances_per_speaker: 20,
            content_dims: 3,
            identity_dims: 2,
            min_windows: 4,
            max_windows: 8,
            content_noise: 0.4,
            trait_noise: 0.6,
            offset_std: 0.15,
            seed: 0,
        }
    }
}

pub fn confounded_corpus(config: &ConfoundedCorpusConfig) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let offsets: Vec<f64> = (0..config.speakers)
        .map(|_| config.offset_std * std_normal.sample(&mut rng))
        .collect();
    let identities: Vec<Vec<f64>> = (0..config.speakers)
        .map(|_| (0..config.identity_dims).map(|_| std_normal.sample(&mut rng)).collect())
        .collect();
    let width = config.content_dims + 1 + config.identity_dims;
    let mut names: Vec<String> = (0..config.content_dims).map(|i| format!("content{i}")).collect();
    names.push("trait".into());
    names.extend((0..config.identity_dims).map(|i| format!("identity{i}")));

    let mut records = Vec::new();
    let mut features = Vec::new();
    for u in 0..config.utterances_per_speaker {
        for s in 0..config.speakers {
            let c = rng.gen_range(-0.5..0.5);
            let label = (c + offsets[s]).clamp(-1.0, 1.0);
            let windows = rng.gen_range(config.min_windows..=config.max_windows);
            let seq = Array2::from_shape_fn((windows, width), |(_, j)| {
                let z = std_normal.sample(&mut rng);
                if j < config.content_dims {
                    c + config.content_noise * z
                } else if j == config.content_dims {
                    offsets[s] + config.trait_noise * z
                } else {
                    identities[s][j - config.content_dims - 1] + 0.05 * z
                }
            });
            let id = format!("s{s:02}u{u:03}");
            records.push(UtteranceRecord {
                utterance_id: id.clone(),
                video_id: format!("s{s:02}v{:02}", u / 4),
                speaker_id: format!("spk{s:02}"),
                arousal: label,
                valence: label,
                feature_path: format!("{id}.csv"),
            });
            features.push(seq);
        }
    }
    Corpus::new(DatasetManifest::new(Partition::Train, records)?, names, features)
}
