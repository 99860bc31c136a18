use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Truth entries with `|truth| <= MAPE_EPS` are left out of MAPE.
pub const MAPE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent; `None` when every valid truth entry is (near) zero.
    pub mape: Option<f64>,
    /// Not clamped, may be negative; `None` when the truth is constant.
    pub r2: Option<f64>,
    pub count: usize,
}

/// Metrics over the entries where `valid` is nonzero.
pub fn metrics(estimates: &Matrix, truth: &Matrix, valid: &Matrix) -> Result<Metrics> {
    if estimates.shape() != truth.shape() || truth.shape() != valid.shape() {
        return Err(Error::dim(
            "metrics",
            "estimates, truth and mask shapes differ",
        ));
    }
    let pairs: Vec<(f64, f64)> = estimates
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .zip(valid.as_slice())
        .filter(|(_, &v)| v != 0.0)
        .map(|((&e, &t), _)| (e, t))
        .collect();
    metrics_from_pairs(&pairs)
}

/// Metrics over `(estimate, truth)` pairs.
pub fn metrics_from_pairs(pairs: &[(f64, f64)]) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::param("no valid entries to score"));
    }
    let n = pairs.len() as f64;
    let sse: f64 = pairs.iter().map(|(e, t)| (e - t).powi(2)).sum();
    let sae: f64 = pairs.iter().map(|(e, t)| (e - t).abs()).sum();
    let truth_mean = pairs.iter().map(|(_, t)| t).sum::<f64>() / n;
    let sst: f64 = pairs.iter().map(|(_, t)| (t - truth_mean).powi(2)).sum();

    let ape: Vec<f64> = pairs
        .iter()
        .filter(|(_, t)| t.abs() > MAPE_EPS)
        .map(|(e, t)| ((e - t) / t).abs())
        .collect();
    let mape = (!ape.is_empty()).then(|| 100.0 * ape.iter().sum::<f64>() / ape.len() as f64);

    Ok(Metrics {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        mape,
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
        count: pairs.len(),
    })
}
