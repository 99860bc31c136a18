//! Datasets, the train/test protocol, and synthetic sensor fields.

mod csvio;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    binary_adjacency, gaussian_adjacency, threshold_adjacency, AdjacencyMatrix, DistanceMatrix,
};
use crate::sampler::SignalMatrix;

pub(crate) use csvio::write_file;
pub use csvio::{load_csv, save_csv, CsvOptions};
pub use synthetic::{gen_synthetic, FieldParams, Wave, SYNTHETIC_RNG};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateKind {
    /// Euclidean distance.
    Planar,
    /// `(lon, lat)` in degrees, haversine distance in kilometres.
    LonLat,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Coordinates {
        kind: CoordinateKind,
        points: Vec<(f64, f64)>,
    },
    Distances(DistanceMatrix),
    Neighbors(Vec<(usize, usize)>),
}

impl Geometry {
    pub fn distances(&self) -> Option<DistanceMatrix> {
        match self {
            Geometry::Coordinates { kind, points } => Some(match kind {
                CoordinateKind::Planar => DistanceMatrix::euclidean(points).ok()?,
                CoordinateKind::LonLat => DistanceMatrix::haversine(points).ok()?,
            }),
            Geometry::Distances(d) => Some(d.clone()),
            Geometry::Neighbors(_) => None,
        }
    }

    pub fn sensor_count(&self) -> Option<usize> {
        match self {
            Geometry::Coordinates { points, .. } => Some(points.len()),
            Geometry::Distances(d) => Some(d.len()),
            Geometry::Neighbors(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub name: String,
    /// Free-form `key: value` pairs kept in file comment headers.
    pub extra: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sensor_ids: Vec<String>,
    pub signals: SignalMatrix,
    pub geometry: Geometry,
    pub metadata: Metadata,
}

/// How edge weights are derived from the geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AdjacencySpec {
    /// Gaussian kernel; `sigma` defaults to the std of pairwise distances.
    Gaussian { sigma: Option<f64> },
    /// Neighbor list, or distance at most `threshold` (default: median distance).
    Binary { threshold: Option<f64> },
}

/// Adjacency with the kernel width actually used, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltAdjacency {
    pub adjacency: AdjacencyMatrix,
    pub sigma: Option<f64>,
    pub threshold: Option<f64>,
}

impl Dataset {
    pub fn new(
        sensor_ids: Vec<String>,
        signals: SignalMatrix,
        geometry: Geometry,
        metadata: Metadata,
    ) -> Result<Self> {
        let n = signals.sensors();
        if sensor_ids.len() != n {
            return Err(Error::param("sensor id count differs from signal rows"));
        }
        match &geometry {
            Geometry::Neighbors(pairs) => {
                if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
                    return Err(Error::param("neighbor index out of range"));
                }
            }
            g => {
                if g.sensor_count() != Some(n) {
                    return Err(Error::param(
                        "geometry sensor count differs from signal rows",
                    ));
                }
            }
        }
        Ok(Self {
            sensor_ids,
            signals,
            geometry,
            metadata,
        })
    }

    pub fn sensors(&self) -> usize {
        self.signals.sensors()
    }

    pub fn adjacency(&self, spec: AdjacencySpec) -> Result<BuiltAdjacency> {
        let need_distances = || {
            self.geometry
                .distances()
                .ok_or_else(|| Error::param("this adjacency needs distances or coordinates"))
        };
        match (spec, &self.geometry) {
            (AdjacencySpec::Binary { .. }, Geometry::Neighbors(pairs)) => Ok(BuiltAdjacency {
                adjacency: binary_adjacency(pairs, self.sensors())?,
                sigma: None,
                threshold: None,
            }),
            (AdjacencySpec::Binary { threshold }, _) => {
                let d = need_distances()?;
                let t = match threshold {
                    Some(t) => t,
                    None => d.median_distance()?,
                };
                Ok(BuiltAdjacency {
                    adjacency: threshold_adjacency(&d, t)?,
                    sigma: None,
                    threshold: Some(t),
                })
            }
            (AdjacencySpec::Gaussian { sigma }, _) => {
                let d = need_distances()?;
                let s = match sigma {
                    Some(s) => s,
                    None => d.default_sigma()?,
                };
                Ok(BuiltAdjacency {
                    adjacency: gaussian_adjacency(&d, s)?,
                    sigma: Some(s),
                    threshold: None,
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub unsampled_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            unsampled_fraction: 0.25,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    /// Observed sensors over the training period, rows in `observed` order.
    pub train: SignalMatrix,
    /// All sensors over the test period, rows in dataset order.
    pub test: SignalMatrix,
    pub observed: Vec<usize>,
    pub unsampled: Vec<usize>,
    pub train_steps: usize,
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    for (name, f) in [
        ("train", spec.train_fraction),
        ("unsampled", spec.unsampled_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::param(format!(
                "{name} fraction must lie in (0, 1), got {f}"
            )));
        }
    }
    let n = ds.sensors();
    let k = (spec.unsampled_fraction * n as f64).round() as usize;
    if k == 0 || n < k + 2 {
        return Err(Error::param(format!(
            "{n} sensors cannot hold {k} unsampled plus two observed sensors"
        )));
    }
    let p = ds.signals.steps();
    let train_steps = (spec.train_fraction * p as f64).floor() as usize;
    if train_steps == 0 || train_steps >= p {
        return Err(Error::param(format!(
            "time split leaves an empty side ({train_steps} of {p})"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut unsampled = order[..k].to_vec();
    unsampled.sort_unstable();
    let observed: Vec<usize> = (0..n)
        .filter(|i| unsampled.binary_search(i).is_err())
        .collect();

    Ok(Split {
        train: ds.signals.select(&observed, 0..train_steps)?,
        test: ds.signals.time_slice(train_steps..p)?,
        observed,
        unsampled,
        train_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn dataset(n: usize, p: usize) -> Dataset {
        let m = Matrix::from_fn(n, p, |i, t| (i * 100 + t) as f64).unwrap();
        let points = (0..n).map(|i| (i as f64, 0.0)).collect();
        Dataset::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            SignalMatrix::from_matrix(&m),
            Geometry::Coordinates {
                kind: CoordinateKind::Planar,
                points,
            },
            Metadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn split_counts_and_disjointness() {
        let ds = dataset(8, 20);
        let spec = SplitSpec::default();
        let s = split(&ds, &spec).unwrap();
        assert_eq!(s.unsampled.len(), 2);
        assert_eq!(s.observed.len(), 6);
        let mut all: Vec<usize> = s.observed.iter().chain(&s.unsampled).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        assert_eq!(s.train_steps, 14);
        assert_eq!(s.train.steps(), 14);
        assert_eq!(s.test.steps(), 6);
        assert_eq!(split(&ds, &spec).unwrap(), s);
    }

    #[test]
    fn split_never_leaks_unsampled_rows() {
        let ds = dataset(12, 10);
        for seed in 0..20 {
            let s = split(
                &ds,
                &SplitSpec {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            for (row, &i) in s.observed.iter().enumerate() {
                assert!(!s.unsampled.contains(&i));
                assert_eq!(s.train.value(row, 0), (i * 100) as f64);
            }
        }
    }

    #[test]
    fn split_rejects_tiny_networks() {
        let ds = dataset(2, 10);
        assert!(split(&ds, &SplitSpec::default()).is_err());
        let ds = dataset(8, 10);
        assert!(split(
            &ds,
            &SplitSpec {
                train_fraction: 1.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn adjacency_from_geometry() {
        let ds = dataset(4, 5);
        let g = ds
            .adjacency(AdjacencySpec::Gaussian { sigma: Some(1.0) })
            .unwrap();
        assert_eq!(g.sigma, Some(1.0));
        assert!((g.adjacency.weights().get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        let b = ds
            .adjacency(AdjacencySpec::Binary { threshold: None })
            .unwrap();
        // distances 1,1,1,2,2,3 each twice; lower median is 1
        assert_eq!(b.threshold, Some(1.0));
        assert_eq!(b.adjacency.weights().get(0, 1), 1.0);
        assert_eq!(b.adjacency.weights().get(0, 2), 0.0);

        let mut nb = ds.clone();
        nb.geometry = Geometry::Neighbors(vec![(0, 3)]);
        assert!(nb
            .adjacency(AdjacencySpec::Gaussian { sigma: None })
            .is_err());
        let w = nb
            .adjacency(AdjacencySpec::Binary { threshold: None })
            .unwrap();
        assert_eq!(w.adjacency.weights().get(3, 0), 1.0);
    }
}
