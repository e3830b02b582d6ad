//! Accuracy and squared Pearson correlation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fraction of exact matches.
pub fn accuracy(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty set".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Squared Pearson correlation. `degenerate` is set, and the value is 0, when
/// either side has zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2 {
    pub value: f64,
    pub degenerate: bool,
}

/// Squared correlation coefficient, not the coefficient of determination:
/// a biased but perfectly correlated predictor scores 1.
pub fn pearson_r2(preds: &[f64], truths: &[f64]) -> Result<R2> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.len() < 2 {
        return Err(Error::InvalidInput("r2 needs at least 2 points".into()));
    }
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let mt = truths.iter().sum::<f64>() / n;
    let (mut spp, mut stt, mut spt) = (0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        let (dp, dt) = (p - mp, t - mt);
        spp += dp * dp;
        stt += dt * dt;
        spt += dp * dt;
    }
    if !(spp > 0.0 && stt > 0.0) || !(spp.is_finite() && stt.is_finite()) {
        return Ok(R2 {
            value: 0.0,
            degenerate: true,
        });
    }
    let r = spt / (spp.sqrt() * stt.sqrt());
    Ok(R2 {
        value: (r * r).clamp(0.0, 1.0),
        degenerate: false,
    })
}
