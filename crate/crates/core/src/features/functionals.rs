use crate::error::{Error, Result};

pub const FUNCTIONAL_NAMES: [&str; 9] = [
    "mean",
    "stddev",
    "linregc1",
    "linregerrQ",
    "quadregc1",
    "quadregerrQ",
    "pctlrange0-1",
    "percentile6.0",
    "percentile94.0",
];

/// Linear-interpolation percentile at position `p * (n - 1)` of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// The nine summary statistics of one trajectory segment, in order: mean,
/// population std, linear-fit slope and its mean squared residual,
/// quadratic-fit leading coefficient and its mean squared residual,
/// P99 - P1, P6 and P94.
///
/// Fits use polynomials orthogonal over `tau = 0..t-1`, so the quadratic
/// term vanishes for two-point segments.
pub fn functionals_window(segment: &[f64]) -> Result<[f64; 9]> {
    let t = segment.len();
    if t < 2 {
        return Err(Error::TooShort(format!(
            "functionals need at least 2 values, got {t}"
        )));
    }
    let n = t as f64;
    let mean = segment.iter().sum::<f64>() / n;
    let var = segment.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;

    // Orthogonal basis over tau: P1 = tau - m, P2 = (tau - m)^2 - v.
    let tau_mean = (n - 1.0) / 2.0;
    let tau_var = (n * n - 1.0) / 12.0;
    let (mut yp1, mut p1p1, mut yp2, mut p2p2) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in segment.iter().enumerate() {
        let p1 = i as f64 - tau_mean;
        let p2 = p1 * p1 - tau_var;
        yp1 += y * p1;
        p1p1 += p1 * p1;
        yp2 += y * p2;
        p2p2 += p2 * p2;
    }
    let slope = yp1 / p1p1;
    let quad_a = if p2p2 > 1e-12 * p1p1 * p1p1.max(1.0) { yp2 / p2p2 } else { 0.0 };
    let (mut lin_err, mut quad_err) = (0.0, 0.0);
    for (i, &y) in segment.iter().enumerate() {
        let p1 = i as f64 - tau_mean;
        let p2 = p1 * p1 - tau_var;
        let lin = y - mean - slope * p1;
        let quad = lin - quad_a * p2;
        lin_err += lin * lin;
        quad_err += quad * quad;
    }

    let mut sorted = segment.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok([
        mean,
        var.sqrt(),
        slope,
        lin_err / n,
        quad_a,
        quad_err / n,
        percentile(&sorted, 0.99) - percentile(&sorted, 0.01),
        percentile(&sorted, 0.06),
        percentile(&sorted, 0.94),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn exact_line() {
        let f = functionals_window(&[1.0, 3.0, 5.0]).unwrap();
        assert!(close(f[0], 3.0, 1e-15));
        assert!(close(f[1], (8.0f64 / 3.0).sqrt(), 1e-15));
        assert!(close(f[2], 2.0, 1e-15));
        assert!(f[3].abs() < 1e-15);
        assert!(f[4].abs() < 1e-15);
        assert!(f[5].abs() < 1e-15);
        // sorted [1,3,5]: P1 at 0.02 -> 1.04, P99 at 1.98 -> 4.96
        assert!(close(f[6], 3.92, 1e-12));
        assert!(close(f[7], 1.24, 1e-12));
        assert!(close(f[8], 4.76, 1e-12));
    }

    #[test]
    fn exact_parabola() {
        let f = functionals_window(&[0.0, 1.0, 4.0]).unwrap();
        assert!(close(f[4], 1.0, 1e-14));
        assert!(f[5].abs() < 1e-15);
    }

    #[test]
    fn integer_percentiles() {
        let seg: Vec<f64> = (0..=100).map(f64::from).collect();
        let f = functionals_window(&seg).unwrap();
        assert!(close(f[7], 6.0, 1e-12));
        assert!(close(f[8], 94.0, 1e-12));
        assert!(close(f[6], 98.0, 1e-12));
    }

    #[test]
    fn two_points_and_too_short() {
        let f = functionals_window(&[1.0, 2.0]).unwrap();
        assert_eq!(f[2], 1.0);
        assert_eq!(f[4], 0.0);
        assert!(f[5].abs() < 1e-15);
        assert!(matches!(functionals_window(&[1.0]), Err(Error::TooShort(_))));
    }

    /// Independent check of the fits: build and solve the normal equations
    /// in the monomial basis with Gaussian elimination.
    fn normal_equations(y: &[f64], degree: usize) -> (Vec<f64>, f64) {
        let k = degree + 1;
        let mut a = vec![vec![0.0; k + 1]; k];
        for (i, &yi) in y.iter().enumerate() {
            let tau = i as f64;
            for r in 0..k {
                for c in 0..k {
                    a[r][c] += tau.powi((r + c) as i32);
                }
                a[r][k] += yi * tau.powi(r as i32);
            }
        }
        for col in 0..k {
            let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..k {
                if r != col {
                    let factor = a[r][col] / a[col][col];
                    for c in col..=k {
                        a[r][c] -= factor * a[col][c];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..k).map(|r| a[r][k] / a[r][r]).collect();
        let mse = y
            .iter()
            .enumerate()
            .map(|(i, &yi)| {
                let fit: f64 = coef.iter().enumerate().map(|(p, c)| c * (i as f64).powi(p as i32)).sum();
                (yi - fit).powi(2)
            })
            .sum::<f64>()
            / y.len() as f64;
        (coef, mse)
    }

    proptest! {
        #[test]
        fn constant_segment(c in -100.0f64..100.0, t in 2usize..50) {
            let f = functionals_window(&vec![c; t]).unwrap();
            let expect = [c, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, c, c];
            for (a, b) in f.iter().zip(expect) {
                prop_assert!((a - b).abs() < 1e-10 * (1.0 + c.abs()));
            }
        }

        #[test]
        fn shift_equivariance(seg in prop::collection::vec(-10.0f64..10.0, 2..60), b in -50.0f64..50.0) {
            let f = functionals_window(&seg).unwrap();
            let shifted: Vec<f64> = seg.iter().map(|v| v + b).collect();
            let g = functionals_window(&shifted).unwrap();
            for i in 0..9 {
                let expect = if matches!(i, 0 | 7 | 8) { f[i] + b } else { f[i] };
                prop_assert!((g[i] - expect).abs() < 1e-10 * (1.0 + b.abs()), "functional {i}: {} vs {}", g[i], expect);
            }
        }

        #[test]
        fn scale_equivariance(seg in prop::collection::vec(-10.0f64..10.0, 2..60), a in 0.01f64..100.0) {
            let f = functionals_window(&seg).unwrap();
            let scaled: Vec<f64> = seg.iter().map(|v| v * a).collect();
            let g = functionals_window(&scaled).unwrap();
            for i in 0..9 {
                let factor = if matches!(i, 3 | 5) { a * a } else { a };
                let expect = f[i] * factor;
                let scale = f.iter().map(|v| v.abs()).fold(1e-300, f64::max) * factor;
                prop_assert!((g[i] - expect).abs() <= 1e-8 * scale, "functional {i}: {} vs {}", g[i], expect);
            }
        }

        #[test]
        fn regressions_match_normal_equations(seg in prop::collection::vec(-5.0f64..5.0, 3..40)) {
            let f = functionals_window(&seg).unwrap();
            let (lin, lin_mse) = normal_equations(&seg, 1);
            let (quad, quad_mse) = normal_equations(&seg, 2);
            let tol = |x: f64| 1e-8 * (1.0 + x.abs());
            prop_assert!((f[2] - lin[1]).abs() < tol(lin[1]));
            prop_assert!((f[3] - lin_mse).abs() < tol(lin_mse));
            prop_assert!((f[4] - quad[2]).abs() < tol(quad[2]));
            prop_assert!((f[5] - quad_mse).abs() < tol(quad_mse));
        }
    }
}
