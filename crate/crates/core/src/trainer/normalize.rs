use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::sampler::SignalMatrix;

/// Z-score statistics over observed training entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::param(format!(
                "invalid normalization stats mean={mean} std={std}"
            )));
        }
        Ok(Self { mean, std })
    }

    /// Population mean and standard deviation of the observed entries.
    pub fn fit(x: &SignalMatrix) -> Result<Self> {
        let observed: Vec<f64> = x
            .values()
            .iter()
            .zip(x.observed())
            .filter_map(|(&v, &o)| o.then_some(v))
            .collect();
        if observed.is_empty() {
            return Err(Error::param("no observed entries to normalize"));
        }
        let n = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n;
        let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::param("signal has zero variance"));
        }
        Self::new(mean, var.sqrt())
    }

    pub fn apply(&self, x: &SignalMatrix) -> SignalMatrix {
        let values = x
            .values()
            .iter()
            .zip(x.observed())
            .map(|(&v, &o)| if o { (v - self.mean) / self.std } else { 0.0 })
            .collect();
        SignalMatrix::new(x.sensors(), x.steps(), values, x.observed().to_vec())
            .expect("affine map of finite values is finite")
    }

    pub fn apply_matrix(&self, m: &Matrix) -> Result<Matrix> {
        m.map("normalize", |v| (v - self.mean) / self.std)
    }

    pub fn denormalize(&self, m: &Matrix) -> Result<Matrix> {
        m.map("denormalize", |v| v * self.std + self.mean)
    }
}

/// Fit statistics on `x` and return the normalized signals with them.
pub fn normalize(x: &SignalMatrix) -> Result<(SignalMatrix, NormStats)> {
    let stats = NormStats::fit(x)?;
    Ok((stats.apply(x), stats))
}

pub fn denormalize(m: &Matrix, stats: &NormStats) -> Result<Matrix> {
    stats.denormalize(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signals() -> SignalMatrix {
        let values = vec![1.0, 4.0, -2.0, 7.5, 0.25, 3.0];
        let observed = vec![true, true, false, true, true, true];
        SignalMatrix::new(2, 3, values, observed).unwrap()
    }

    #[test]
    fn normalized_moments() {
        let (z, _) = normalize(&signals()).unwrap();
        let obs: Vec<f64> = z
            .values()
            .iter()
            .zip(z.observed())
            .filter_map(|(&v, &o)| o.then_some(v))
            .collect();
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / obs.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn round_trip() {
        let x = signals();
        let (z, stats) = normalize(&x).unwrap();
        let zm = Matrix::from_vec(2, 3, z.values().to_vec()).unwrap();
        let back = denormalize(&zm, &stats).unwrap();
        for i in 0..2 {
            for t in 0..3 {
                if x.is_observed(i, t) {
                    assert!((back.get(i, t) - x.value(i, t)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn constant_signal_rejected() {
        let x = SignalMatrix::new(1, 3, vec![2.0; 3], vec![true; 3]).unwrap();
        assert!(normalize(&x).is_err());
        let none = SignalMatrix::new(1, 2, vec![0.0; 2], vec![false; 2]).unwrap();
        assert!(normalize(&none).is_err());
    }
}
