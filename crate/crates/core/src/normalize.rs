//! Per-partition feature normalization.
//!
//! `cdf_adjust` maps every feature column onto the standard normal through
//! its ranks: `probit((rank - 0.5) / N)` with tied values sharing their
//! average rank. The output has no outliers by construction; its extremes
//! are `±probit(1 - 0.5 / N)`. `meanvar_standardize` is the z-score baseline.

use ndarray::{s, Array2, ArrayView1, Axis};

use crate::dataset::{fmt_f64, Partition};
use crate::error::{Error, Result};

/// Standard deviations below this are treated as constant features.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16), accurate
/// to about 1e-16 relative.
pub fn probit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Range {
            value: p,
            range: "(0, 1)",
        });
    }
    Ok(probit_unchecked(p))
}

#[allow(clippy::excessive_precision)]
fn probit_unchecked(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.3871328727963666080e0,
        1.3314166789178437745e+2,
        1.9715909503065514427e+3,
        1.3731693765509461125e+4,
        4.5921953931549871457e+4,
        6.7265770927008700853e+4,
        3.3430575583588128105e+4,
        2.5090809287301226727e+3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.2313330701600911252e+1,
        6.8718700749205790830e+2,
        5.3941960214247511077e+3,
        2.1213794301586595867e+4,
        3.9307895800092710610e+4,
        2.8729085735721942674e+4,
        5.2264952788528545610e+3,
    ];
    const C: [f64; 8] = [
        1.42343711074968357734e0,
        4.63033784615654529590e0,
        5.76949722146069140550e0,
        3.64784832476320460504e0,
        1.27045825245236838258e0,
        2.41780725177450611770e-1,
        2.27238449892691845833e-2,
        7.74545014278341407640e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.05319162663775882187e0,
        1.67638483018380384940e0,
        6.89767334985100004550e-1,
        1.48103976427480074590e-1,
        1.51986665636164571966e-2,
        5.47593808499534494600e-4,
        1.05075007164441684324e-9,
    ];
    const E: [f64; 8] = [
        6.65790464350110377720e0,
        5.46378491116411436990e0,
        1.78482653991729133580e0,
        2.96560571828504891230e-1,
        2.65321895265761230930e-2,
        1.24266094738807843860e-3,
        2.71155556874348757815e-5,
        2.01033439929228813265e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.99832206555887937690e-1,
        1.36929880922735805310e-1,
        1.48753612908506148525e-2,
        7.86869131145613259100e-4,
        1.84631831751005468180e-5,
        1.42151175831644588870e-7,
        2.04426310338993978564e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// All windows of all utterances of one partition, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFeatureTable {
    pub partition: Partition,
    pub feature_names: Vec<String>,
    pub rows: Array2<f64>,
    /// `(utterance_id, window index)` of each row.
    pub index: Vec<(String, usize)>,
}

impl PartitionFeatureTable {
    pub fn new(
        partition: Partition,
        feature_names: Vec<String>,
        rows: Array2<f64>,
        index: Vec<(String, usize)>,
    ) -> Result<Self> {
        if rows.nrows() < 2 {
            return Err(Error::TooShort(format!(
                "partition table needs at least 2 rows, got {}",
                rows.nrows()
            )));
        }
        if rows.ncols() != feature_names.len() || rows.nrows() != index.len() {
            return Err(Error::Dimension(format!(
                "table {}x{} with {} names and {} index entries",
                rows.nrows(),
                rows.ncols(),
                feature_names.len(),
                index.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(Self {
            partition,
            feature_names,
            rows,
            index,
        })
    }

    /// Stacks per-utterance sequences (all with the same width).
    pub fn from_sequences(
        partition: Partition,
        feature_names: Vec<String>,
        sequences: &[(String, Array2<f64>)],
    ) -> Result<Self> {
        let width = feature_names.len();
        let mut views = Vec::with_capacity(sequences.len());
        let mut index = Vec::new();
        for (id, seq) in sequences {
            if seq.ncols() != width {
                return Err(Error::Dimension(format!(
                    "utterance `{id}` has {} features, expected {width}",
                    seq.ncols()
                )));
            }
            views.push(seq.view());
            index.extend((0..seq.nrows()).map(|w| (id.clone(), w)));
        }
        let rows = if views.is_empty() {
            Array2::zeros((0, width))
        } else {
            ndarray::concatenate(Axis(0), &views).expect("widths checked")
        };
        Self::new(partition, feature_names, rows, index)
    }

    /// Splits back into per-utterance sequences in first-appearance order.
    pub fn to_sequences(&self) -> Vec<(String, Array2<f64>)> {
        let mut out: Vec<(String, Array2<f64>)> = Vec::new();
        let mut start = 0;
        while start < self.index.len() {
            let id = &self.index[start].0;
            let mut end = start;
            while end < self.index.len() && &self.index[end].0 == id {
                end += 1;
            }
            out.push((id.clone(), self.rows.slice(s![start..end, ..]).to_owned()));
            start = end;
        }
        out
    }

    fn with_rows(&self, rows: Array2<f64>) -> Self {
        Self {
            partition: self.partition,
            feature_names: self.feature_names.clone(),
            rows,
            index: self.index.clone(),
        }
    }
}

/// 1-based ranks with ties assigned their average rank.
fn average_ranks(column: ArrayView1<'_, f64>) -> Vec<f64> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && column[order[end]] == column[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Rank-based Gaussianization of every feature column, using only this
/// table's own values.
pub fn cdf_adjust(table: &PartitionFeatureTable) -> PartitionFeatureTable {
    let n = table.rows.nrows() as f64;
    let mut out = Array2::zeros(table.rows.dim());
    for (j, column) in table.rows.axis_iter(Axis(1)).enumerate() {
        for (i, r) in average_ranks(column).into_iter().enumerate() {
            out[[i, j]] = probit_unchecked((r - 0.5) / n);
        }
    }
    table.with_rows(out)
}

/// Sorted copies of a reference partition's columns, for applying its
/// empirical CDF to other partitions (the non-transductive variant of
/// [`cdf_adjust`]).
#[derive(Debug, Clone)]
pub struct CdfReference {
    sorted: Vec<Vec<f64>>,
}

impl CdfReference {
    pub fn fit(table: &PartitionFeatureTable) -> Self {
        let sorted = table
            .rows
            .axis_iter(Axis(1))
            .map(|c| {
                let mut v = c.to_vec();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        Self { sorted }
    }

    /// Each value gets the average rank it would have among the reference
    /// values. Applied to the reference table itself this equals
    /// [`cdf_adjust`].
    pub fn apply(&self, table: &PartitionFeatureTable) -> Result<PartitionFeatureTable> {
        if table.rows.ncols() != self.sorted.len() {
            return Err(Error::Dimension(format!(
                "table has {} features, reference has {}",
                table.rows.ncols(),
                self.sorted.len()
            )));
        }
        let mut out = Array2::zeros(table.rows.dim());
        for (j, sorted) in self.sorted.iter().enumerate() {
            let n = sorted.len() as f64;
            for (i, &v) in table.rows.column(j).iter().enumerate() {
                let below = sorted.partition_point(|&x| x < v);
                let equal = sorted[below..].partition_point(|&x| x <= v);
                let rank = below as f64 + (equal as f64 + 1.0) / 2.0;
                let p = ((rank - 0.5) / n).clamp(0.5 / n, 1.0 - 0.5 / n);
                out[[i, j]] = probit_unchecked(p);
            }
        }
        Ok(table.with_rows(out))
    }
}

/// Per-feature population mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub features: Vec<String>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl NormStats {
    pub fn fit(table: &PartitionFeatureTable) -> Self {
        let n = table.rows.nrows() as f64;
        let mut mean = Vec::with_capacity(table.rows.ncols());
        let mut variance = Vec::with_capacity(table.rows.ncols());
        for column in table.rows.axis_iter(Axis(1)) {
            let m = column.sum() / n;
            mean.push(m);
            variance.push(column.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n);
        }
        Self {
            features: table.feature_names.clone(),
            mean,
            variance,
        }
    }

    /// Indices of features whose standard deviation is below
    /// [`DEGENERATE_STD`]; they standardize to zero.
    pub fn degenerate_features(&self) -> Vec<usize> {
        self.variance
            .iter()
            .enumerate()
            .filter(|(_, v)| v.sqrt() < DEGENERATE_STD)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mean,variance\n");
        for ((f, m), v) in self.features.iter().zip(&self.mean).zip(&self.variance) {
            out.push_str(&format!("{f},{},{}\n", fmt_f64(*m), fmt_f64(*v)));
        }
        out
    }

    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_owned(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "feature,mean,variance")) => {}
            _ => return Err(err(1, "expected header `feature,mean,variance`".into())),
        }
        let mut stats = NormStats {
            features: Vec::new(),
            mean: Vec::new(),
            variance: Vec::new(),
        };
        for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let mut parts = line.rsplitn(3, ',');
            let (Some(var), Some(mean), Some(name)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(i + 1, format!("malformed row `{line}`")));
            };
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err(i + 1, format!("not a number: `{s}`")));
            let var = num(var)?;
            if var.is_nan() || var < 0.0 {
                return Err(err(i + 1, format!("negative variance {var}")));
            }
            stats.features.push(name.to_owned());
            stats.mean.push(num(mean)?);
            stats.variance.push(var);
        }
        Ok(stats)
    }
}

/// `(x - mean) / std` per feature; degenerate features map to zero.
pub fn apply_stats(table: &PartitionFeatureTable, stats: &NormStats) -> Result<PartitionFeatureTable> {
    if stats.mean.len() != table.rows.ncols() {
        return Err(Error::Dimension(format!(
            "table has {} features, stats have {}",
            table.rows.ncols(),
            stats.mean.len()
        )));
    }
    let mut out = table.rows.clone();
    for (j, mut column) in out.axis_iter_mut(Axis(1)).enumerate() {
        let sd = stats.variance[j].sqrt();
        if sd < DEGENERATE_STD {
            column.fill(0.0);
        } else {
            let m = stats.mean[j];
            column.mapv_inplace(|v| (v - m) / sd);
        }
    }
    Ok(table.with_rows(out))
}

/// Z-scores every feature with the table's own statistics.
pub fn meanvar_standardize(table: &PartitionFeatureTable) -> (PartitionFeatureTable, NormStats) {
    let stats = NormStats::fit(table);
    let out = apply_stats(table, &stats).expect("stats fitted on this table");
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(rows: Array2<f64>) -> PartitionFeatureTable {
        let names = (0..rows.ncols()).map(|j| format!("f{j}")).collect();
        let index = (0..rows.nrows()).map(|i| ("u".to_string(), i)).collect();
        PartitionFeatureTable::new(Partition::Train, names, rows, index).unwrap()
    }

    #[test]
    fn probit_examples() {
        assert_eq!(probit(0.5).unwrap(), 0.0);
        assert!((probit(1.0 / 6.0).unwrap() + 0.967_421_566_101_701).abs() < 1e-12);
        assert!((probit(5.0 / 6.0).unwrap() - 0.967_421_566_101_701).abs() < 1e-12);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(probit(bad), Err(Error::Range { .. })));
        }
    }

    #[test]
    fn cdf_adjust_examples() {
        let out = cdf_adjust(&table(array![[5.0], [2.0], [9.0]]));
        let q = 0.967_421_566_101_701;
        assert!(out.rows[[0, 0]].abs() < 1e-15);
        assert!((out.rows[[1, 0]] + q).abs() < 1e-12);
        assert!((out.rows[[2, 0]] - q).abs() < 1e-12);

        let out = cdf_adjust(&table(Array2::from_elem((5, 1), 3.3)));
        assert!(out.rows.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ties_share_average_rank() {
        let ranks = average_ranks(array![1.0, 2.0, 2.0, 0.0].view());
        assert_eq!(ranks, vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn reference_cdf_matches_in_sample() {
        let t = table(array![[3.0, 1.0], [1.0, 1.0], [2.0, 4.0], [2.0, 0.5]]);
        let direct = cdf_adjust(&t);
        let via_ref = CdfReference::fit(&t).apply(&t).unwrap();
        for (a, b) in direct.rows.iter().zip(via_ref.rows.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let other = table(array![[100.0, -5.0], [2.5, 1.0]]);
        let out = CdfReference::fit(&t).apply(&other).unwrap();
        assert!((out.rows[[0, 0]] - probit(1.0 - 0.125).unwrap()).abs() < 1e-15);
        assert!((out.rows[[1, 0]] - probit(0.75).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn meanvar_examples() {
        let (out, stats) = meanvar_standardize(&table(array![[0.0, 7.0], [2.0, 7.0]]));
        assert_eq!(out.rows.column(0).to_vec(), vec![-1.0, 1.0]);
        assert_eq!(out.rows.column(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(stats.degenerate_features(), vec![1]);
    }

    #[test]
    fn apply_stats_examples() {
        let t = table(array![[0.5, -2.0], [1.5, 3.0]]);
        let unit = NormStats {
            features: t.feature_names.clone(),
            mean: vec![0.0, 0.0],
            variance: vec![1.0, 1.0],
        };
        assert_eq!(apply_stats(&t, &unit).unwrap().rows, t.rows);
        let (z, stats) = meanvar_standardize(&t);
        assert_eq!(apply_stats(&t, &stats).unwrap(), z);
        let narrow = table(array![[1.0], [2.0]]);
        assert!(matches!(apply_stats(&narrow, &stats), Err(Error::Dimension(_))));
    }

    #[test]
    fn stats_csv_roundtrip() {
        let (_, stats) = meanvar_standardize(&table(array![[0.1, 7.0], [2.0, 7.5], [3.0, -1.0]]));
        let back = NormStats::parse_csv(&stats.to_csv(), "s").unwrap();
        assert_eq!(stats, back);
    }

    #[test]
    fn sequences_roundtrip() {
        let seqs = vec![
            ("a".to_string(), array![[1.0, 2.0], [3.0, 4.0]]),
            ("b".to_string(), array![[5.0, 6.0]]),
        ];
        let t = PartitionFeatureTable::from_sequences(
            Partition::Dev,
            vec!["x".into(), "y".into()],
            &seqs,
        )
        .unwrap();
        assert_eq!(t.index[2], ("b".to_string(), 0));
        assert_eq!(t.to_sequences(), seqs);
        let bad = vec![("c".to_string(), array![[1.0]])];
        assert!(PartitionFeatureTable::from_sequences(Partition::Dev, vec!["x".into(), "y".into()], &bad).is_err());
    }
}
