//! CC versus CCC: how offset and scale errors are penalized, and what
//! rescaling to reference moments recovers.
//!
//! ```text
//! cargo run --example concordance
//! ```

use ccsq::metrics::{ccc, ccc_loss_grad, pearson_cc, scale_predictions, MomentStats};

type Distortion = fn(f64) -> f64;

fn main() -> ccsq::Result<()> {
    let reference: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 0.6).collect();
    let cases: [(&str, Distortion); 4] = [
        ("exact", |r| r),
        ("offset +0.3", |r| r + 0.3),
        ("half scale", |r| 0.5 * r),
        ("noisy", |r| r + 0.3 * (r * 91.0).cos()),
    ];
    let stats = MomentStats::of(&reference)?;
    println!("{:<12} {:>8} {:>8} {:>10}", "prediction", "cc", "ccc", "scaled_ccc");
    for (name, f) in cases {
        let pred: Vec<f64> = reference.iter().map(|&r| f(r)).collect();
        let scaled = scale_predictions(&pred, &stats)?;
        println!(
            "{name:<12} {:>8.4} {:>8.4} {:>10.4}",
            pearson_cc(&pred, &reference)?,
            ccc(&pred, &reference)?,
            ccc(&scaled, &reference)?
        );
    }

    let pred: Vec<f64> = reference.iter().map(|r| 0.5 * r + 0.1).collect();
    let (loss, grad) = ccc_loss_grad(&pred, &reference)?;
    println!("\nloss 1 - CCC = {loss:.4}; first gradient entries {:.4?}", &grad[..4]);
    Ok(())
}
