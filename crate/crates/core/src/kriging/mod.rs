//! Inference at unsampled and virtual sensors, plus evaluation.
//!
//! Row convention for every request: observed sensors first, virtual
//! sensors after them. Virtual rows enter the model as zeros.

mod knn;
mod metrics;
pub mod output;

use serde::{Deserialize, Serialize};

use crate::data::{AdjacencySpec, CoordinateKind, Geometry};
use crate::error::{Error, Result};
use crate::graph::{
    gaussian_adjacency, haversine_km, transitions, AdjacencyMatrix, DistanceMatrix,
};
use crate::model::{forward_with_filters, DiffusionFilters, ModelParams};
use crate::numerics::Matrix;
use crate::sampler::SignalMatrix;
use crate::trainer::NormStats;

pub use knn::knn_baseline;
pub use metrics::{metrics, metrics_from_pairs, Metrics, MAPE_EPS};

#[derive(Clone, Debug)]
pub struct KrigingRequest {
    /// `n_s × h` readings of the observed sensors (raw units).
    pub observed: Matrix,
    /// 1 where `observed` holds a real reading.
    pub observed_mask: Matrix,
    pub virtual_count: usize,
    /// `(n_s + n_u)` square, observed sensors first.
    pub adjacency: AdjacencyMatrix,
    pub window_start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrigingResult {
    /// `n_u` rows of `h` estimates; empty when there are no virtual sensors.
    pub virtual_estimates: Vec<Vec<f64>>,
    /// Model reconstruction of the observed sensors.
    pub observed_reconstruction: Matrix,
}

impl KrigingResult {
    pub fn virtual_matrix(&self) -> Option<Matrix> {
        (!self.virtual_estimates.is_empty()).then(|| {
            Matrix::from_rows(&self.virtual_estimates)
                .expect("estimates are finite and rectangular")
        })
    }
}

/// A trained model bound to one sensor layout; reusable across windows.
pub struct Kriger<'a> {
    params: &'a ModelParams,
    stats: NormStats,
    filters: DiffusionFilters,
    n_observed: usize,
    n_virtual: usize,
}

impl<'a> Kriger<'a> {
    pub fn new(
        params: &'a ModelParams,
        stats: NormStats,
        adjacency: &AdjacencyMatrix,
        n_observed: usize,
    ) -> Result<Self> {
        let n = adjacency.len();
        if n_observed == 0 || n_observed > n {
            return Err(Error::param(format!(
                "{n_observed} observed sensors for a {n}-node graph"
            )));
        }
        Ok(Self {
            params,
            stats,
            filters: DiffusionFilters::new(&transitions(adjacency), params.order())?,
            n_observed,
            n_virtual: n - n_observed,
        })
    }

    pub fn krige(&self, observed: &Matrix, observed_mask: &Matrix) -> Result<KrigingResult> {
        let h = self.params.window();
        if observed.cols() != h {
            return Err(Error::param(format!(
                "window length {} does not match the model's {h}",
                observed.cols()
            )));
        }
        if observed.shape() != (self.n_observed, h) || observed_mask.shape() != observed.shape() {
            return Err(Error::dim(
                "krige",
                format!("expected {}x{h} observed signals and mask", self.n_observed),
            ));
        }
        let mut input = self.stats.apply_matrix(observed)?.hadamard(observed_mask)?;
        if self.n_virtual > 0 {
            input = input.vstack(&Matrix::zeros(self.n_virtual, h))?;
        }
        let out = forward_with_filters(self.params, &input, &self.filters)?.output;
        let out = self.stats.denormalize(&out)?;
        let rows: Vec<usize> = (0..self.n_observed).collect();
        let all: Vec<usize> = (0..h).collect();
        Ok(KrigingResult {
            virtual_estimates: (self.n_observed..self.n_observed + self.n_virtual)
                .map(|i| out.row(i).to_vec())
                .collect(),
            observed_reconstruction: out.submatrix(&rows, &all)?,
        })
    }
}

pub fn krige(
    params: &ModelParams,
    req: &KrigingRequest,
    stats: &NormStats,
) -> Result<KrigingResult> {
    let n_s = req.observed.rows();
    if req.adjacency.len() != n_s + req.virtual_count {
        return Err(Error::dim(
            "krige",
            format!(
                "adjacency has {} nodes, request has {n_s} observed + {} virtual",
                req.adjacency.len(),
                req.virtual_count
            ),
        ));
    }
    Kriger::new(params, *stats, &req.adjacency, n_s)?.krige(&req.observed, &req.observed_mask)
}

/// One evaluation window handed to an [`Estimator`].
pub struct WindowInput<'a> {
    pub start: usize,
    pub observed: &'a Matrix,
    pub observed_mask: &'a Matrix,
    /// Ground truth at the virtual sensors; only oracle estimators may look.
    pub truth: &'a Matrix,
}

pub trait Estimator {
    /// `n_u × h` estimates for the window.
    fn estimate(&self, window: &WindowInput<'_>) -> Result<Matrix>;
}

impl Estimator for Kriger<'_> {
    fn estimate(&self, w: &WindowInput<'_>) -> Result<Matrix> {
        self.krige(w.observed, w.observed_mask)?
            .virtual_matrix()
            .ok_or_else(|| Error::param("no virtual sensors to estimate"))
    }
}

pub struct KnnEstimator {
    /// `[virtual][observed]` distances.
    pub distances: Vec<Vec<f64>>,
    pub k: usize,
}

impl KnnEstimator {
    pub fn new(d: &DistanceMatrix, observed: &[usize], virtual_idx: &[usize], k: usize) -> Self {
        Self {
            distances: virtual_idx
                .iter()
                .map(|&v| observed.iter().map(|&s| d.get(v, s)).collect())
                .collect(),
            k,
        }
    }
}

impl Estimator for KnnEstimator {
    fn estimate(&self, w: &WindowInput<'_>) -> Result<Matrix> {
        knn_baseline(w.observed, w.observed_mask, &self.distances, self.k)
    }
}

/// Predicts one constant everywhere, e.g. the training mean.
pub struct ConstantEstimator(pub f64);

impl Estimator for ConstantEstimator {
    fn estimate(&self, w: &WindowInput<'_>) -> Result<Matrix> {
        Ok(Matrix::filled(w.truth.rows(), w.truth.cols(), self.0))
    }
}

/// Returns the ground truth; a self-test of the evaluation pipeline.
pub struct OracleEstimator;

impl Estimator for OracleEstimator {
    fn estimate(&self, w: &WindowInput<'_>) -> Result<Matrix> {
        Ok(w.truth.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    /// First step of the window, relative to the evaluated period.
    pub start: usize,
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Pooled over every valid entry of every window.
    pub overall: Metrics,
    pub windows: Vec<WindowMetrics>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub virtual_indices: Vec<usize>,
    /// `n_u × (windows · h)` estimates, truth, and truth validity.
    pub estimates: Matrix,
    pub truth: Matrix,
    pub valid: Matrix,
}

/// Observed indices (complement of `virtual_idx`), validating the latter.
pub fn observed_complement(n: usize, virtual_idx: &[usize]) -> Result<Vec<usize>> {
    let mut sorted = virtual_idx.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != virtual_idx.len() || sorted.iter().any(|&v| v >= n) {
        return Err(Error::param(
            "virtual indices must be distinct and in range",
        ));
    }
    if sorted.is_empty() || sorted.len() == n {
        return Err(Error::param(
            "need at least one virtual and one observed sensor",
        ));
    }
    Ok((0..n)
        .filter(|i| sorted.binary_search(i).is_err())
        .collect())
}

/// Score `estimator` on non-overlapping windows `[0,h), [h,2h), ...` of
/// `signals`; a trailing partial window is dropped.
pub fn sliding_eval_with(
    estimator: &dyn Estimator,
    signals: &SignalMatrix,
    virtual_idx: &[usize],
    h: usize,
) -> Result<Evaluation> {
    let observed_idx = observed_complement(signals.sensors(), virtual_idx)?;
    let p = signals.steps();
    if h == 0 || p < h {
        return Err(Error::param(format!(
            "evaluation period of {p} steps is shorter than the window {h}"
        )));
    }
    let windows = p / h;
    let n_u = virtual_idx.len();
    let mut est_all = vec![0.0; n_u * windows * h];
    let mut truth_all = vec![0.0; n_u * windows * h];
    let mut valid_all = vec![0.0; n_u * windows * h];
    let mut per_window = Vec::with_capacity(windows);
    let mut pooled = Vec::new();

    for w in 0..windows {
        let start = w * h;
        let (obs, obs_mask) = signals.window(&observed_idx, start, h)?;
        let (truth, valid) = signals.window(virtual_idx, start, h)?;
        let est = estimator.estimate(&WindowInput {
            start,
            observed: &obs,
            observed_mask: &obs_mask,
            truth: &truth,
        })?;
        if est.shape() != truth.shape() {
            return Err(Error::dim(
                "sliding_eval",
                "estimator returned the wrong shape",
            ));
        }
        let mut pairs = Vec::with_capacity(n_u * h);
        for v in 0..n_u {
            for c in 0..h {
                let col = v * windows * h + start + c;
                est_all[col] = est.get(v, c);
                truth_all[col] = truth.get(v, c);
                valid_all[col] = valid.get(v, c);
                if valid.get(v, c) != 0.0 {
                    pairs.push((est.get(v, c), truth.get(v, c)));
                }
            }
        }
        per_window.push(WindowMetrics {
            start,
            metrics: metrics_from_pairs(&pairs).ok(),
        });
        pooled.extend(pairs);
    }

    let cols = windows * h;
    Ok(Evaluation {
        report: MetricsReport {
            overall: metrics_from_pairs(&pooled)?,
            windows: per_window,
        },
        virtual_indices: virtual_idx.to_vec(),
        estimates: Matrix::from_vec(n_u, cols, est_all)?,
        truth: Matrix::from_vec(n_u, cols, truth_all)?,
        valid: Matrix::from_vec(n_u, cols, valid_all)?,
    })
}

/// Evaluate a trained model: `signals` covers all sensors over the test
/// period, `adjacency` is the full graph in the same sensor order.
pub fn sliding_eval(
    params: &ModelParams,
    signals: &SignalMatrix,
    adjacency: &AdjacencyMatrix,
    virtual_idx: &[usize],
    stats: &NormStats,
) -> Result<Evaluation> {
    if adjacency.len() != signals.sensors() {
        return Err(Error::dim(
            "sliding_eval",
            "adjacency and signals disagree on sensor count",
        ));
    }
    let observed_idx = observed_complement(signals.sensors(), virtual_idx)?;
    let order: Vec<usize> = observed_idx.iter().chain(virtual_idx).copied().collect();
    let kriger = Kriger::new(
        params,
        *stats,
        &adjacency.submatrix(&order)?,
        observed_idx.len(),
    )?;
    sliding_eval_with(&kriger, signals, virtual_idx, params.window())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spacing {
    /// `count` points evenly spaced strictly between the endpoints.
    Even,
    /// Points every `step` coordinate units from the first endpoint.
    Step(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub count: usize,
    pub spacing: Spacing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualLine {
    pub points: Vec<(f64, f64)>,
    pub estimates: Vec<Vec<f64>>,
}

/// Krige `line.count` virtual sensors placed on the segment between two
/// observed sensors. `geometry` covers exactly the rows of `observed`.
#[allow(clippy::too_many_arguments)]
pub fn virtual_line(
    params: &ModelParams,
    stats: &NormStats,
    observed: &Matrix,
    observed_mask: &Matrix,
    geometry: &Geometry,
    adjacency: AdjacencySpec,
    line: &LineSpec,
) -> Result<VirtualLine> {
    let AdjacencySpec::Gaussian { sigma } = adjacency else {
        return Err(Error::param(
            "virtual sensors need a distance-based (gaussian) adjacency",
        ));
    };
    let Geometry::Coordinates { kind, points } = geometry else {
        return Err(Error::param("virtual sensors need sensor coordinates"));
    };
    let n_s = observed.rows();
    if points.len() != n_s {
        return Err(Error::dim(
            "virtual_line",
            "geometry and signals disagree on sensor count",
        ));
    }
    if line.from >= n_s || line.to >= n_s || line.from == line.to {
        return Err(Error::param(
            "line endpoints must be two distinct observed sensors",
        ));
    }
    if line.count == 0 {
        return Ok(VirtualLine {
            points: Vec::new(),
            estimates: Vec::new(),
        });
    }
    let (a, b) = (points[line.from], points[line.to]);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let virtual_points: Vec<(f64, f64)> = (1..=line.count)
        .map(|i| {
            let frac = match line.spacing {
                Spacing::Even => i as f64 / (line.count + 1) as f64,
                Spacing::Step(step) => step * i as f64 / dx.hypot(dy),
            };
            (a.0 + frac * dx, a.1 + frac * dy)
        })
        .collect();

    let metric = |p: (f64, f64), q: (f64, f64)| match kind {
        CoordinateKind::Planar => (p.0 - q.0).hypot(p.1 - q.1),
        CoordinateKind::LonLat => haversine_km(p, q),
    };
    let sigma = match sigma {
        Some(s) => s,
        None => {
            let d = Matrix::from_fn(n_s, n_s, |i, j| {
                if i == j {
                    0.0
                } else {
                    metric(points[i], points[j])
                }
            })?;
            DistanceMatrix::new(d)?.default_sigma()?
        }
    };
    let all: Vec<(f64, f64)> = points.iter().chain(&virtual_points).copied().collect();
    let n = all.len();
    let d = Matrix::from_fn(
        n,
        n,
        |i, j| if i == j { 0.0 } else { metric(all[i], all[j]) },
    )?;
    let adjacency = gaussian_adjacency(&DistanceMatrix::new(d)?, sigma)?;
    let result = Kriger::new(params, *stats, &adjacency, n_s)?.krige(observed, observed_mask)?;
    Ok(VirtualLine {
        points: virtual_points,
        estimates: result.virtual_estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AdjacencyKind;
    use crate::model::init_params;
    use crate::numerics::Activation;

    fn stats() -> NormStats {
        NormStats::new(0.5, 2.0).unwrap()
    }

    fn full_adjacency(n: usize) -> AdjacencyMatrix {
        let w =
            Matrix::from_fn(n, n, |i, j| (-((i as f64 - j as f64) / 2.0).powi(2)).exp()).unwrap();
        AdjacencyMatrix::new(w, AdjacencyKind::Gaussian).unwrap()
    }

    #[test]
    fn no_virtual_sensors() {
        let p = init_params(1, 3, 2, Activation::Relu, 0).unwrap();
        let req = KrigingRequest {
            observed: Matrix::filled(2, 3, 1.0),
            observed_mask: Matrix::filled(2, 3, 1.0),
            virtual_count: 0,
            adjacency: full_adjacency(2),
            window_start: 0,
        };
        let r = krige(&p, &req, &stats()).unwrap();
        assert!(r.virtual_estimates.is_empty());
        assert_eq!(r.observed_reconstruction.shape(), (2, 3));
    }

    #[test]
    fn window_mismatch_is_parameter_error() {
        let p = init_params(1, 3, 2, Activation::Relu, 0).unwrap();
        let req = KrigingRequest {
            observed: Matrix::filled(2, 4, 1.0),
            observed_mask: Matrix::filled(2, 4, 1.0),
            virtual_count: 1,
            adjacency: full_adjacency(3),
            window_start: 0,
        };
        assert!(matches!(
            krige(&p, &req, &stats()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn missing_readings_do_not_leak_into_input() {
        let p = init_params(2, 3, 4, Activation::Relu, 1).unwrap();
        let obs = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let mut mask = Matrix::filled(2, 3, 1.0);
        mask.data_mut()[1] = 0.0;
        let mut altered = obs.clone();
        altered.data_mut()[1] = 1e6;
        let k = Kriger::new(&p, stats(), &full_adjacency(3), 2).unwrap();
        assert_eq!(
            k.krige(&obs, &mask).unwrap(),
            k.krige(&altered, &mask).unwrap()
        );
    }

    #[test]
    fn oracle_scores_perfectly_and_tiling_drops_partial() {
        let n = 5;
        let m = Matrix::from_fn(n, 25, |i, t| (i as f64) + (t as f64 * 0.3).sin()).unwrap();
        let s = SignalMatrix::from_matrix(&m);
        let e = sliding_eval_with(&OracleEstimator, &s, &[1, 3], 10).unwrap();
        assert_eq!(e.report.windows.len(), 2);
        assert_eq!(e.report.overall.rmse, 0.0);
        assert_eq!(e.report.overall.mae, 0.0);
        assert_eq!(e.report.overall.r2, Some(1.0));
        assert_eq!(e.estimates.shape(), (2, 20));
        assert!(sliding_eval_with(&OracleEstimator, &s, &[1], 30).is_err());
        assert!(sliding_eval_with(&OracleEstimator, &s, &[1, 1], 5).is_err());
        assert!(sliding_eval_with(&OracleEstimator, &s, &[], 5).is_err());
    }

    #[test]
    fn virtual_line_requires_coordinates_and_gaussian() {
        let p = init_params(1, 2, 2, Activation::Relu, 0).unwrap();
        let obs = Matrix::filled(2, 2, 1.0);
        let geo = Geometry::Coordinates {
            kind: CoordinateKind::Planar,
            points: vec![(0.0, 0.0), (1.0, 0.0)],
        };
        let line = LineSpec {
            from: 0,
            to: 1,
            count: 3,
            spacing: Spacing::Even,
        };
        let g = AdjacencySpec::Gaussian { sigma: Some(0.5) };
        let r = virtual_line(&p, &stats(), &obs, &obs, &geo, g, &line).unwrap();
        assert_eq!(r.points, vec![(0.25, 0.0), (0.5, 0.0), (0.75, 0.0)]);
        assert_eq!(r.estimates.len(), 3);

        let none = LineSpec { count: 0, ..line };
        assert!(virtual_line(&p, &stats(), &obs, &obs, &geo, g, &none)
            .unwrap()
            .estimates
            .is_empty());

        let bin = AdjacencySpec::Binary { threshold: None };
        assert!(virtual_line(&p, &stats(), &obs, &obs, &geo, bin, &line).is_err());
        let nb = Geometry::Neighbors(vec![(0, 1)]);
        assert!(virtual_line(&p, &stats(), &obs, &obs, &nb, g, &line).is_err());

        let stepped = LineSpec {
            spacing: Spacing::Step(0.1),
            count: 2,
            ..line
        };
        let r = virtual_line(&p, &stats(), &obs, &obs, &geo, g, &stepped).unwrap();
        assert!((r.points[1].0 - 0.2).abs() < 1e-15);
    }
}
