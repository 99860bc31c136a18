//! Random subgraph training samples.
//!
//! Each sample picks `n_observed + n_masked` sensors uniformly without
//! replacement and a random length-`window` time slice. The first
//! `n_observed` picked sensors keep their readings in the model input; the
//! rest are masked out and must be reconstructed.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::numerics::Matrix;

/// `n × p` readings with per-entry missingness.
///
/// Missing entries hold `0.0` so that downstream arithmetic stays finite.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl SignalMatrix {
    pub fn new(n: usize, p: usize, mut values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::dim("SignalMatrix", format!("empty shape {n}x{p}")));
        }
        if values.len() != n * p || observed.len() != n * p {
            return Err(Error::dim(
                "SignalMatrix",
                "buffer length does not match n*p",
            ));
        }
        for (v, &o) in values.iter_mut().zip(&observed) {
            if !o {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite {
                    op: "SignalMatrix::new",
                });
            }
        }
        Ok(Self {
            n,
            p,
            values,
            observed,
        })
    }

    /// Fully observed signals.
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            n: m.rows(),
            p: m.cols(),
            values: m.as_slice().to_vec(),
            observed: vec![true; m.rows() * m.cols()],
        }
    }

    pub fn sensors(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.p
    }

    pub fn value(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.p + t]
    }

    pub fn is_observed(&self, i: usize, t: usize) -> bool {
        self.observed[i * self.p + t]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Sub-signal over sensors `rows` (in order) and time steps `cols`.
    pub fn select(&self, rows: &[usize], cols: Range<usize>) -> Result<SignalMatrix> {
        if rows.iter().any(|&i| i >= self.n) || cols.end > self.p || cols.is_empty() {
            return Err(Error::dim("SignalMatrix::select", "selection out of range"));
        }
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        let mut observed = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let base = i * self.p;
            values.extend_from_slice(&self.values[base + cols.start..base + cols.end]);
            observed.extend_from_slice(&self.observed[base + cols.start..base + cols.end]);
        }
        SignalMatrix::new(rows.len(), cols.len(), values, observed)
    }

    pub fn time_slice(&self, cols: Range<usize>) -> Result<SignalMatrix> {
        let all: Vec<usize> = (0..self.n).collect();
        self.select(&all, cols)
    }

    /// Values and 0/1 observation flags over `rows` and `[start, start + len)`.
    pub fn window(&self, rows: &[usize], start: usize, len: usize) -> Result<(Matrix, Matrix)> {
        if start + len > self.p || rows.iter().any(|&i| i >= self.n) {
            return Err(Error::dim("SignalMatrix::window", "window out of range"));
        }
        let values = Matrix::from_fn(rows.len(), len, |r, c| self.value(rows[r], start + c))?;
        let flags = Matrix::from_fn(rows.len(), len, |r, c| {
            f64::from(u8::from(self.is_observed(rows[r], start + c)))
        })?;
        Ok((values, flags))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Window length `h` in time steps.
    pub window: usize,
    pub samples_per_iter: usize,
    pub iterations: usize,
    pub n_observed: usize,
    pub n_masked: usize,
    /// Draw `n_observed`/`n_masked` afresh for every sample instead of using
    /// the fixed counts above.
    pub random_counts: bool,
    pub seed: u64,
}

impl SamplerConfig {
    /// Defaults for a network of `n` training sensors: three quarters
    /// observed, the rest masked.
    pub fn for_sensors(n: usize) -> Self {
        let (n_observed, n_masked) = default_counts(n);
        Self {
            window: 24,
            samples_per_iter: 4,
            iterations: 750,
            n_observed,
            n_masked,
            random_counts: false,
            seed: 0,
        }
    }

    pub fn validate(&self, signals: &SignalMatrix) -> Result<()> {
        let n = signals.sensors();
        if self.window == 0 || self.samples_per_iter == 0 {
            return Err(Error::param("window and samples_per_iter must be >= 1"));
        }
        if signals.steps() <= self.window {
            return Err(Error::param(format!(
                "need more than {} time steps, have {}",
                self.window,
                signals.steps()
            )));
        }
        if self.random_counts {
            if n < 2 {
                return Err(Error::param("random node counts need at least 2 sensors"));
            }
        } else if self.n_observed == 0 || self.n_masked == 0 || self.n_observed + self.n_masked > n
        {
            return Err(Error::param(format!(
                "invalid node counts n_o={} n_m={} for n={n}",
                self.n_observed, self.n_masked
            )));
        }
        Ok(())
    }
}

/// `(round(0.75 n), n - round(0.75 n))`, each at least one when `n >= 2`.
pub fn default_counts(n: usize) -> (usize, usize) {
    let n_o = ((0.75 * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    (n_o, n.saturating_sub(n_o))
}

/// One training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphSample {
    /// Ground truth, `(n_o + n_m) × h`; zero where the source is missing.
    pub signals: Matrix,
    /// 1 where the reading is fed to the model.
    pub mask: Matrix,
    /// 1 where ground truth exists and counts toward the loss.
    pub valid: Matrix,
    pub adjacency: AdjacencyMatrix,
    pub node_indices: Vec<usize>,
    /// Zero-based first column of the window.
    pub window_start: usize,
    pub n_observed: usize,
    pub n_masked: usize,
}

impl SubgraphSample {
    pub fn masked_input(&self) -> Matrix {
        self.signals
            .hadamard(&self.mask)
            .expect("signals and mask share a shape")
    }
}

pub fn draw_sample<R: Rng + ?Sized>(
    signals: &SignalMatrix,
    adjacency: &AdjacencyMatrix,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SubgraphSample> {
    cfg.validate(signals)?;
    let n = signals.sensors();
    if adjacency.len() != n {
        return Err(Error::dim(
            "draw_sample",
            format!("adjacency has {} nodes, signals have {n}", adjacency.len()),
        ));
    }
    let (n_o, n_m) = if cfg.random_counts {
        let n_o = rng.random_range(1..n);
        (n_o, rng.random_range(1..=n - n_o))
    } else {
        (cfg.n_observed, cfg.n_masked)
    };

    let mut pool: Vec<usize> = (0..n).collect();
    let (picked, _) = pool.partial_shuffle(rng, n_o + n_m);
    let node_indices = picked.to_vec();

    let h = cfg.window;
    let start = rng.random_range(0..signals.steps() - h);
    let (values, valid) = signals.window(&node_indices, start, h)?;
    let mask = Matrix::from_fn(
        n_o + n_m,
        h,
        |r, c| if r < n_o { valid.get(r, c) } else { 0.0 },
    )?;

    Ok(SubgraphSample {
        signals: values,
        mask,
        valid,
        adjacency: adjacency.submatrix(&node_indices)?,
        node_indices,
        window_start: start,
        n_observed: n_o,
        n_masked: n_m,
    })
}

pub fn draw_batch<R: Rng + ?Sized>(
    signals: &SignalMatrix,
    adjacency: &AdjacencyMatrix,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<SubgraphSample>> {
    (0..cfg.samples_per_iter)
        .map(|_| draw_sample(signals, adjacency, cfg, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::binary_adjacency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ramp(n: usize, p: usize) -> SignalMatrix {
        let m = Matrix::from_fn(n, p, |i, t| (i * 1000 + t) as f64).unwrap();
        SignalMatrix::from_matrix(&m)
    }

    fn ring(n: usize) -> AdjacencyMatrix {
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        binary_adjacency(&pairs, n).unwrap()
    }

    fn cfg(n_o: usize, n_m: usize, h: usize) -> SamplerConfig {
        SamplerConfig {
            window: h,
            samples_per_iter: 4,
            iterations: 1,
            n_observed: n_o,
            n_masked: n_m,
            random_counts: false,
            seed: 0,
        }
    }

    #[test]
    fn mask_rows_follow_counts() {
        let x = ramp(8, 50);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let s = draw_sample(&x, &ring(8), &cfg(2, 2, 5), &mut rng).unwrap();
        let row_sums = s.mask.row_sums();
        assert_eq!(row_sums, vec![5.0, 5.0, 0.0, 0.0]);
        assert_eq!(s.valid, Matrix::filled(4, 5, 1.0));
    }

    #[test]
    fn window_and_submatrix_align() {
        let x = ramp(8, 50);
        let w = ring(8);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..50 {
            let s = draw_sample(&x, &w, &cfg(3, 2, 5), &mut rng).unwrap();
            assert!(s.window_start < 50 - 5);
            for (r, &i) in s.node_indices.iter().enumerate() {
                for c in 0..5 {
                    assert_eq!(s.signals.get(r, c), x.value(i, s.window_start + c));
                }
                for (q, &j) in s.node_indices.iter().enumerate() {
                    assert_eq!(s.adjacency.weights().get(r, q), w.weights().get(i, j));
                }
            }
            let mut sorted = s.node_indices.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 5);
        }
    }

    #[test]
    fn exhaustive_draw_is_permutation() {
        let x = ramp(6, 20);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let s = draw_sample(&x, &ring(6), &cfg(4, 2, 3), &mut rng).unwrap();
        let mut idx = s.node_indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_draws_repeat() {
        let x = ramp(8, 40);
        let a = draw_batch(
            &x,
            &ring(8),
            &cfg(3, 3, 4),
            &mut ChaCha20Rng::seed_from_u64(5),
        )
        .unwrap();
        let b = draw_batch(
            &x,
            &ring(8),
            &cfg(3, 3, 4),
            &mut ChaCha20Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
        let mut one = cfg(3, 3, 4);
        one.samples_per_iter = 1;
        let c = draw_batch(&x, &ring(8), &one, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn source_missing_entries_are_masked_and_invalid() {
        let n = 4;
        let p = 6;
        let mut observed = vec![true; n * p];
        for t in 0..p {
            observed[t] = t % 2 == 0; // sensor 0 misses odd steps
        }
        let x = SignalMatrix::new(n, p, vec![1.0; n * p], observed).unwrap();
        let mut c = cfg(4, 0, 2);
        c.n_masked = 0;
        assert!(c.validate(&x).is_err());
        c = cfg(3, 1, 2);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for _ in 0..20 {
            let s = draw_sample(&x, &ring(n), &c, &mut rng).unwrap();
            for (r, &i) in s.node_indices.iter().enumerate() {
                for col in 0..2 {
                    let obs = x.is_observed(i, s.window_start + col);
                    assert_eq!(s.valid.get(r, col) == 1.0, obs);
                    if !obs {
                        assert_eq!(s.mask.get(r, col), 0.0);
                        assert_eq!(s.masked_input().get(r, col), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn random_counts_respect_bounds() {
        let x = ramp(7, 30);
        let mut c = cfg(1, 1, 3);
        c.random_counts = true;
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = draw_sample(&x, &ring(7), &c, &mut rng).unwrap();
            assert!(s.n_observed >= 1 && s.n_masked >= 1);
            assert!(s.n_observed + s.n_masked <= 7);
            assert_eq!(s.node_indices.len(), s.n_observed + s.n_masked);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let x = ramp(5, 10);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(draw_sample(&x, &ring(5), &cfg(4, 2, 3), &mut rng).is_err());
        assert!(draw_sample(&x, &ring(5), &cfg(2, 2, 10), &mut rng).is_err());
        assert!(draw_sample(&x, &ring(6), &cfg(2, 2, 3), &mut rng).is_err());
    }

    #[test]
    fn default_counts_split() {
        assert_eq!(default_counts(8), (6, 2));
        assert_eq!(default_counts(30), (23, 7));
        assert_eq!(default_counts(2), (1, 1));
    }
}
