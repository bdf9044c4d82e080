//! Window means of per-frame embeddings at a video frame rate, aligned to
//! the acoustic functional windows.
//!
//! ```text
//! cargo run --example pool_embeddings
//! ```

use ccsq::features::{pool_embeddings, DEFAULT_STEP_S, DEFAULT_WINDOW_S};
use ndarray::Array2;

fn main() -> ccsq::Result<()> {
    let frame_rate = 25.0;
    let frames = Array2::from_shape_fn((250, 4), |(t, j)| (t as f64 / frame_rate * (j + 1) as f64).sin());
    let names: Vec<String> = (0..4).map(|j| format!("emb{j}")).collect();
    let pooled = pool_embeddings(frames.view(), &names, frame_rate, DEFAULT_WINDOW_S, DEFAULT_STEP_S)?;
    println!("{} frames at {frame_rate} fps -> {} windows", frames.nrows(), pooled.windows());
    for (w, row) in pooled.vectors.rows().into_iter().enumerate() {
        println!("window {w}: {:.3?}", row.to_vec());
    }
    Ok(())
}
