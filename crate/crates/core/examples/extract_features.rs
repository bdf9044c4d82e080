//! Frame-level descriptors and windowed functionals of a WAV file, or of a
//! generated tone sweep when no file is given.
//!
//! ```text
//! cargo run --example extract_features -- [input.wav]
//! ```

use std::f64::consts::PI;

use ccsq::features::{extract_lld, functional_sequence, read_wav, DEFAULT_STEP_S, DEFAULT_WINDOW_S};

fn main() -> ccsq::Result<()> {
    let (samples, rate) = match std::env::args().nth(1) {
        Some(path) => read_wav(path.as_ref())?,
        None => {
            let rate = 16_000u32;
            let sweep = (0..4 * rate)
                .map(|i| {
                    let t = i as f64 / rate as f64;
                    let f0 = 120.0 + 40.0 * t;
                    0.3 * (2.0 * PI * f0 * t).sin() + 0.1 * (4.0 * PI * f0 * t).sin()
                })
                .collect();
            (sweep, rate)
        }
    };
    let lld = extract_lld(&samples, rate)?;
    println!(
        "{:.2} s at {rate} Hz -> {} frames x {} descriptors",
        samples.len() as f64 / rate as f64,
        lld.frames(),
        lld.descriptors()
    );
    for (j, name) in lld.descriptor_names().iter().enumerate().take(6) {
        let col = lld.values().column(j).to_vec();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        println!("  {name:<24} mean {mean:>12.4}");
    }
    let seq = functional_sequence(&lld, DEFAULT_WINDOW_S, DEFAULT_STEP_S)?;
    println!("{} windows x {} functionals", seq.windows(), seq.width());
    println!("first columns: {}", seq.feature_names[..3].join(", "));
    Ok(())
}
