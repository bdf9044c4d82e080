//! Rank Gaussianization against mean/variance standardization on a skewed
//! feature with an outlier.
//!
//! ```text
//! cargo run --example gaussianize
//! ```

use ccsq::dataset::Partition;
use ccsq::normalize::{cdf_adjust, meanvar_standardize, PartitionFeatureTable};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quantiles(v: &[f64]) -> [f64; 5] {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| s[((s.len() - 1) as f64 * q).round() as usize])
}

fn main() -> ccsq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 1000;
    let rows = Array2::from_shape_fn((n, 1), |(i, _)| {
        if i == 0 {
            500.0
        } else {
            (rng.gen_range(0.0f64..1.0) * 3.0).exp()
        }
    });
    let index = (0..n).map(|i| (format!("utt{}", i / 10), i % 10)).collect();
    let table = PartitionFeatureTable::new(Partition::Train, vec!["energy".into()], rows, index)?;

    let gauss = cdf_adjust(&table);
    let (standard, stats) = meanvar_standardize(&table);
    println!("raw mean {:.3}, std {:.3}", stats.mean[0], stats.variance[0].sqrt());
    println!("{:<10} {:>8} {:>8} {:>8} {:>8} {:>8}", "", "min", "q25", "median", "q75", "max");
    for (name, t) in [("raw", &table), ("meanvar", &standard), ("cdf", &gauss)] {
        let q = quantiles(&t.rows.column(0).to_vec());
        println!("{name:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", q[0], q[1], q[2], q[3], q[4]);
    }
    Ok(())
}
