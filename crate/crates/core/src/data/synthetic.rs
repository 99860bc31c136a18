//! Smooth traveling-wave fields sampled at random sensor locations.
//!
//! Generation order, all from one `ChaCha20Rng::seed_from_u64(seed)`:
//! 1. for each sensor, `x` then `y`, each `rng.random::<f64>()` in `[0, 1)`;
//! 2. if `noise > 0`, for each sensor (row-major over time) one
//!    `Normal(0, noise)` draw from `rand_distr`.
//!
//! value(i, t) = offset + Σ_m a_m sin(ω_m t + k_m · pos_i + φ_m) + noise

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CoordinateKind, Dataset, Geometry, Metadata};
use crate::error::{Error, Result};
use crate::sampler::SignalMatrix;

pub const SYNTHETIC_RNG: &str =
    "ChaCha20Rng (rand_chacha 0.9, seed_from_u64); normals via rand_distr 0.5 Normal";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    /// Radians per time step.
    pub omega: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub offset: f64,
    pub waves: Vec<Wave>,
}

impl Default for FieldParams {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            offset: 0.0,
            waves: vec![
                Wave {
                    amplitude: 1.0,
                    omega: 2.0 * PI / 96.0,
                    kx: 6.0,
                    ky: 2.0,
                    phase: 0.0,
                },
                Wave {
                    amplitude: 0.6,
                    omega: 2.0 * PI / 48.0,
                    kx: -3.0,
                    ky: 5.0,
                    phase: 1.0,
                },
                Wave {
                    amplitude: 0.4,
                    omega: 2.0 * PI / 24.0,
                    kx: 4.0,
                    ky: -4.0,
                    phase: 2.5,
                },
            ],
        }
    }
}

impl FieldParams {
    /// Noise-free field value at `pos` and time `t`.
    pub fn value(&self, pos: (f64, f64), t: f64) -> f64 {
        self.offset
            + self
                .waves
                .iter()
                .map(|w| w.amplitude * (w.omega * t + w.kx * pos.0 + w.ky * pos.1 + w.phase).sin())
                .sum::<f64>()
    }
}

pub fn gen_synthetic(
    n: usize,
    p: usize,
    field: &FieldParams,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::param(format!(
            "synthetic network needs n >= 4, got {n}"
        )));
    }
    if p < 2 {
        return Err(Error::param(format!(
            "synthetic series needs p >= 2, got {p}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::param("noise must be a finite non-negative number"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let normal = Normal::new(0.0, noise).map_err(|e| Error::param(e.to_string()))?;
    let mut values = Vec::with_capacity(n * p);
    for &pos in &points {
        for t in 0..p {
            let eps = if noise > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            values.push(field.value(pos, t as f64) + eps);
        }
    }
    let signals = SignalMatrix::new(n, p, values, vec![true; n * p])?;
    let metadata = Metadata {
        name: format!("synthetic-n{n}-p{p}-seed{seed}"),
        extra: vec![
            ("generator".into(), "traveling-wave field".into()),
            ("rng".into(), SYNTHETIC_RNG.into()),
            ("seed".into(), seed.to_string()),
            ("noise".into(), format!("{noise}")),
            (
                "field".into(),
                serde_json::to_string(field).expect("field params serialize"),
            ),
        ],
    };
    Dataset::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        signals,
        Geometry::Coordinates {
            kind: CoordinateKind::Planar,
            points,
        },
        metadata,
    )
}
