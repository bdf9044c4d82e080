//! Agreement metrics: Pearson CC, Lin's concordance correlation coefficient,
//! moment rescaling, the `1 - CCC` loss with its analytic gradient, and
//! categorical cross-entropy.
//!
//! All moments are population moments (divide by `n`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean, population variance and count of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

impl MomentStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::degenerate("moments of an empty series"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            variance,
            count: values.len(),
        })
    }
}

/// Predictions and references of equal length (at least two).
#[derive(Debug, Clone, Copy)]
pub struct PairedSeries<'a> {
    pub predictions: &'a [f64],
    pub references: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
struct JointMoments {
    n: f64,
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

impl<'a> PairedSeries<'a> {
    pub fn new(predictions: &'a [f64], references: &'a [f64]) -> Result<Self> {
        if predictions.len() != references.len() {
            return Err(Error::Dimension(format!(
                "{} predictions vs {} references",
                predictions.len(),
                references.len()
            )));
        }
        if predictions.len() < 2 {
            return Err(Error::degenerate(format!(
                "need at least 2 paired values, got {}",
                predictions.len()
            )));
        }
        if predictions.iter().chain(references).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite value in paired series".into()));
        }
        Ok(Self {
            predictions,
            references,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    fn moments(&self) -> JointMoments {
        let n = self.len() as f64;
        let mean_x = self.predictions.iter().sum::<f64>() / n;
        let mean_y = self.references.iter().sum::<f64>() / n;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (&x, &y) in self.predictions.iter().zip(self.references) {
            let (dx, dy) = (x - mean_x, y - mean_y);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        JointMoments {
            n,
            mean_x,
            mean_y,
            var_x: sxx / n,
            var_y: syy / n,
            cov: sxy / n,
        }
    }

    pub fn pearson_cc(&self) -> Result<f64> {
        let m = self.moments();
        if m.var_x <= 0.0 || m.var_y <= 0.0 {
            return Err(Error::degenerate("CC undefined for a constant series"));
        }
        Ok((m.cov / (m.var_x * m.var_y).sqrt()).clamp(-1.0, 1.0))
    }

    pub fn ccc(&self) -> Result<f64> {
        let m = self.moments();
        let denom = m.var_x + m.var_y + (m.mean_x - m.mean_y).powi(2);
        if denom <= 0.0 {
            return Err(Error::degenerate(
                "CCC undefined: both series constant and equal",
            ));
        }
        Ok(2.0 * m.cov / denom)
    }
}

pub fn pearson_cc(predictions: &[f64], references: &[f64]) -> Result<f64> {
    PairedSeries::new(predictions, references)?.pearson_cc()
}

pub fn ccc(predictions: &[f64], references: &[f64]) -> Result<f64> {
    PairedSeries::new(predictions, references)?.ccc()
}

/// Affinely maps `pred` onto the mean and variance of `target`.
pub fn scale_predictions(pred: &[f64], target: &MomentStats) -> Result<Vec<f64>> {
    let own = MomentStats::of(pred)?;
    if own.variance <= 0.0 {
        return Err(Error::degenerate("cannot rescale constant predictions"));
    }
    if target.variance <= 0.0 {
        return Err(Error::degenerate("target variance must be positive"));
    }
    let gain = (target.variance / own.variance).sqrt();
    Ok(pred
        .iter()
        .map(|p| (p - own.mean) * gain + target.mean)
        .collect())
}

/// `1 - CCC(pred, reference)` and its gradient with respect to `pred`.
///
/// With `N = 2 cov`, `D = var_x + var_y + (mx - my)^2`:
/// `dN/dx_j = 2 (y_j - my) / n` and `dD/dx_j = 2 (x_j - mx) / n + 2 (mx - my) / n`.
pub fn ccc_loss_grad(pred: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    let series = PairedSeries::new(pred, reference)?;
    let m = series.moments();
    let numer = 2.0 * m.cov;
    let denom = m.var_x + m.var_y + (m.mean_x - m.mean_y).powi(2);
    if denom <= 0.0 {
        return Err(Error::degenerate(
            "CCC undefined: both series constant and equal",
        ));
    }
    let ccc = numer / denom;
    let mean_gap = m.mean_x - m.mean_y;
    let inv_d2 = 1.0 / (denom * denom);
    let grad = pred
        .iter()
        .zip(reference)
        .map(|(&x, &y)| {
            let dn = 2.0 * (y - m.mean_y) / m.n;
            let dd = 2.0 * (x - m.mean_x) / m.n + 2.0 * mean_gap / m.n;
            -(dn * denom - numer * dd) * inv_d2
        })
        .collect();
    Ok((1.0 - ccc, grad))
}

pub const CE_PROB_FLOOR: f64 = 1e-12;

/// `-ln(probs[label])`, with the probability floored at `1e-12`.
pub fn categorical_cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::Validation(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Validation(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(-probs[label].max(CE_PROB_FLOOR).ln())
}

/// One evaluation row: CC, CCC and CCC after rescaling to `train_stats`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cc: f64,
    pub ccc: f64,
    pub scaled_ccc: f64,
    pub n: usize,
}

pub fn evaluate_report(
    pred: &[f64],
    reference: &[f64],
    train_stats: &MomentStats,
) -> Result<EvalReport> {
    let series = PairedSeries::new(pred, reference)?;
    let cc = series.pearson_cc()?;
    let ccc = series.ccc()?;
    let scaled = scale_predictions(pred, train_stats)?;
    let scaled_ccc = self::ccc(&scaled, reference)?;
    Ok(EvalReport {
        cc,
        ccc,
        scaled_ccc,
        n: pred.len(),
    })
}
