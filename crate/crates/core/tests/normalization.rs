use ccsq::dataset::Partition;
use ccsq::features::extract_lld;
use ccsq::normalize::{cdf_adjust, probit, PartitionFeatureTable};
use ndarray::Array2;
use proptest::prelude::*;

/// Columns on a 0.01 grid so that ties occur and the transforms below stay
/// strictly increasing in floating point.
fn table_strategy() -> impl Strategy<Value = PartitionFeatureTable> {
    (2usize..200, 1usize..6).prop_flat_map(|(n, f)| {
        prop::collection::vec(-300i32..300, n * f).prop_map(move |cells| {
            let rows = Array2::from_shape_vec((n, f), cells.into_iter().map(|c| c as f64 * 0.01).collect()).unwrap();
            let names = (0..f).map(|j| format!("f{j}")).collect();
            let index = (0..n).map(|i| (format!("u{}", i / 4), i % 4)).collect();
            PartitionFeatureTable::new(Partition::Train, names, rows, index).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn ranks_and_ties_are_preserved(t in table_strategy()) {
        let out = cdf_adjust(&t);
        let n = t.rows.nrows();
        for j in 0..t.rows.ncols() {
            for a in 0..n {
                for b in 0..n {
                    let (x, z) = (t.rows.column(j), out.rows.column(j));
                    prop_assert_eq!(x[a].total_cmp(&x[b]), z[a].total_cmp(&z[b]));
                }
            }
        }
    }

    #[test]
    fn invariant_under_increasing_transforms(t in table_strategy()) {
        let out = cdf_adjust(&t);
        let transforms: [fn(f64) -> f64; 3] = [f64::exp, |x| x.powi(3), |x| 2.5 * x + 7.0];
        for f in transforms {
            let mut moved = t.clone();
            moved.rows.mapv_inplace(f);
            prop_assert_eq!(&cdf_adjust(&moved).rows, &out.rows);
        }
    }

    #[test]
    fn centred_bounded_and_idempotent(t in table_strategy()) {
        let out = cdf_adjust(&t);
        let n = t.rows.nrows() as f64;
        let bound = probit(1.0 - 0.5 / n).unwrap() + 1e-12;
        for col in out.rows.columns() {
            let mean = col.sum() / n;
            prop_assert!(mean.abs() <= 3.0 / n.sqrt());
            prop_assert!(col.iter().all(|z| z.abs() <= bound));
        }
        let twice = cdf_adjust(&out);
        for (a, b) in twice.rows.iter().zip(out.rows.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn probit_is_odd_about_one_half(k in 1u32..(1 << 19)) {
        // Dyadic p keeps 1 - p exact.
        let p = k as f64 / (1u32 << 20) as f64;
        prop_assert!((probit(p).unwrap() + probit(1.0 - p).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn extract_lld_is_finite_and_deterministic(
        samples in prop::collection::vec(-1.0f64..1.0, 960..4000),
        gain in prop::sample::select(vec![0.0, 1e-9, 1.0, 1e6]),
    ) {
        let x: Vec<f64> = samples.iter().map(|s| s * gain).collect();
        let a = extract_lld(&x, 16_000).unwrap();
        let b = extract_lld(&x, 16_000).unwrap();
        prop_assert!(a.values().iter().all(|v| v.is_finite()));
        prop_assert_eq!(a, b);
    }
}
