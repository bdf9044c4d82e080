//! Trains a recurrent CCC regressor on sequences whose label is the mean of
//! a noisy input channel, printing the per-epoch history.
//!
//! ```text
//! cargo run --release --example train_regressor
//! ```

use ccsq::dataset::Task;
use ccsq::seqnet::{history_csv, train_fold, NetworkSpec, Sample, Targets, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sequences(n: usize, rng: &mut ChaCha8Rng) -> Vec<(Array2<f64>, Targets)> {
    (0..n)
        .map(|_| {
            let level: f64 = rng.gen_range(-0.8..0.8);
            let steps = rng.gen_range(4..10);
            let x = Array2::from_shape_fn((steps, 3), |(_, j)| {
                if j == 0 {
                    level + rng.gen_range(-0.3..0.3)
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            });
            (x, Targets { arousal: Some(level), valence: None, speaker: None })
        })
        .collect()
}

fn as_samples(v: &[(Array2<f64>, Targets)]) -> Vec<Sample<'_>> {
    v.iter().map(|(x, t)| Sample { inputs: x.view(), targets: *t }).collect()
}

fn main() -> ccsq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let train = sequences(120, &mut rng);
    let val = sequences(40, &mut rng);
    let spec = NetworkSpec::video(3, &[Task::Arousal], None);
    let config = TrainConfig { learning_rate: 0.01, max_epochs: 40, patience: 10, ..Default::default() };
    let outcome = train_fold(&as_samples(&train), &as_samples(&val), &spec, &config)?;
    print!("{}", history_csv(&outcome.history));
    println!(
        "best epoch {} with validation CCC {:.4}",
        outcome.best_epoch,
        outcome.history[outcome.best_epoch - 1].val_ccc
    );
    Ok(())
}
