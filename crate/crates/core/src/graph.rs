//! Adjacency construction, transition matrices and Chebyshev filters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Pairwise sensor distances. May be asymmetric (e.g. travel distance).
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    dist: Matrix,
    symmetric: bool,
}

impl DistanceMatrix {
    pub fn new(dist: Matrix) -> Result<Self> {
        if !dist.is_square() {
            return Err(Error::dim(
                "DistanceMatrix",
                "distance matrix must be square",
            ));
        }
        let n = dist.rows();
        for i in 0..n {
            if dist.get(i, i) != 0.0 {
                return Err(Error::param(format!(
                    "distance diagonal entry {i} is not zero"
                )));
            }
            for j in 0..n {
                if dist.get(i, j) < 0.0 {
                    return Err(Error::param(format!("negative distance at ({i}, {j})")));
                }
            }
        }
        let symmetric = (0..n).all(|i| (0..i).all(|j| dist.get(i, j) == dist.get(j, i)));
        Ok(Self { dist, symmetric })
    }

    /// Euclidean distances between planar points.
    pub fn euclidean(points: &[(f64, f64)]) -> Result<Self> {
        Self::from_metric(points, |a, b| {
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
    }

    /// Great-circle distances in kilometres between `(lon, lat)` points in degrees.
    pub fn haversine(points: &[(f64, f64)]) -> Result<Self> {
        Self::from_metric(points, haversine_km)
    }

    fn from_metric(
        points: &[(f64, f64)],
        f: impl Fn((f64, f64), (f64, f64)) -> f64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("no points"));
        }
        let dist = Matrix::from_fn(points.len(), points.len(), |i, j| {
            if i == j {
                0.0
            } else {
                f(points[i], points[j])
            }
        })?;
        Self::new(dist)
    }

    pub fn len(&self) -> usize {
        self.dist.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.dist
    }

    fn off_diagonal(&self) -> Vec<f64> {
        let n = self.len();
        let mut v = Vec::with_capacity(n * n.saturating_sub(1));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    v.push(self.dist.get(i, j));
                }
            }
        }
        v
    }

    /// Population standard deviation of the off-diagonal distances; the
    /// default Gaussian kernel width.
    pub fn default_sigma(&self) -> Result<f64> {
        let v = self.off_diagonal();
        if v.is_empty() {
            return Err(Error::param("kernel width needs at least two sensors"));
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let sd = var.sqrt();
        if sd > 0.0 {
            Ok(sd)
        } else {
            Err(Error::param(
                "all pairwise distances are equal; set sigma explicitly",
            ))
        }
    }

    /// Median of the off-diagonal distances (lower median for even counts).
    pub fn median_distance(&self) -> Result<f64> {
        let mut v = self.off_diagonal();
        if v.is_empty() {
            return Err(Error::param("median distance needs at least two sensors"));
        }
        v.sort_by(f64::total_cmp);
        Ok(v[(v.len() - 1) / 2])
    }
}

pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    const EARTH_RADIUS_KM: f64 = 6371.0088;
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyKind {
    Gaussian,
    Binary,
}

/// Edge weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    weights: Matrix,
    kind: AdjacencyKind,
}

impl AdjacencyMatrix {
    pub fn new(weights: Matrix, kind: AdjacencyKind) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::dim("AdjacencyMatrix", "adjacency must be square"));
        }
        for &w in weights.as_slice() {
            let ok = match kind {
                AdjacencyKind::Gaussian => (0.0..=1.0).contains(&w),
                AdjacencyKind::Binary => w == 0.0 || w == 1.0,
            };
            if !ok {
                return Err(Error::param(format!(
                    "adjacency weight {w} invalid for {kind:?}"
                )));
            }
        }
        Ok(Self { weights, kind })
    }

    pub fn len(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn kind(&self) -> AdjacencyKind {
        self.kind
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Induced adjacency among `idx`, in that order.
    pub fn submatrix(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            weights: self.weights.principal_submatrix(idx)?,
            kind: self.kind,
        })
    }
}

/// `W_ij = exp(-(d_ij / sigma)^2)`; dense, diagonal 1.
pub fn gaussian_adjacency(d: &DistanceMatrix, sigma: f64) -> Result<AdjacencyMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let n = d.len();
    let w = Matrix::from_fn(n, n, |i, j| (-(d.get(i, j) / sigma).powi(2)).exp())?;
    AdjacencyMatrix::new(w, AdjacencyKind::Gaussian)
}

/// Undirected 0/1 adjacency from neighbour pairs; diagonal 0.
pub fn binary_adjacency(neighbors: &[(usize, usize)], n: usize) -> Result<AdjacencyMatrix> {
    if n == 0 {
        return Err(Error::param("binary adjacency needs n >= 1"));
    }
    let mut data = vec![0.0; n * n];
    for &(i, j) in neighbors {
        if i >= n || j >= n {
            return Err(Error::param(format!(
                "neighbor pair ({i}, {j}) out of range for n={n}"
            )));
        }
        if i != j {
            data[i * n + j] = 1.0;
            data[j * n + i] = 1.0;
        }
    }
    AdjacencyMatrix::new(Matrix::from_vec(n, n, data)?, AdjacencyKind::Binary)
}

/// Binary adjacency linking every pair with `d_ij <= threshold`, off-diagonal.
pub fn threshold_adjacency(d: &DistanceMatrix, threshold: f64) -> Result<AdjacencyMatrix> {
    let n = d.len();
    let w = Matrix::from_fn(n, n, |i, j| {
        if i != j && d.get(i, j) <= threshold {
            1.0
        } else {
            0.0
        }
    })?;
    AdjacencyMatrix::new(w, AdjacencyKind::Binary)
}

/// Forward (`W / rowsum(W)`) and backward (`Wᵀ / rowsum(Wᵀ)`) transition matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPair {
    pub forward: Matrix,
    pub backward: Matrix,
}

impl TransitionPair {
    pub fn len(&self) -> usize {
        self.forward.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Rows with zero weight sum (isolated nodes) become all-zero rows.
pub fn transitions(w: &AdjacencyMatrix) -> TransitionPair {
    transitions_of(w.weights()).expect("adjacency weights are square and nonnegative")
}

/// Transition pair for arbitrary nonnegative square weights.
pub fn transitions_of(weights: &Matrix) -> Result<TransitionPair> {
    if !weights.is_square() {
        return Err(Error::dim("transitions", "weights must be square"));
    }
    if weights.as_slice().iter().any(|&w| w < 0.0) {
        return Err(Error::param("transition weights must be nonnegative"));
    }
    Ok(TransitionPair {
        forward: row_normalize(weights),
        backward: row_normalize(&weights.transpose()),
    })
}

fn row_normalize(m: &Matrix) -> Matrix {
    let sums = m.row_sums();
    Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        if sums[i] > 0.0 {
            m.get(i, j) / sums[i]
        } else {
            0.0
        }
    })
    .expect("normalizing finite nonnegative weights stays finite")
}

/// `[T_1(x), ..., T_K(x)]` with `T_0 = I`, `T_1 = x`, `T_k = 2 x T_{k-1} - T_{k-2}`.
pub fn chebyshev(x: &Matrix, order: usize) -> Result<Vec<Matrix>> {
    if !x.is_square() {
        return Err(Error::dim(
            "chebyshev",
            format!("non-square {:?}", x.shape()),
        ));
    }
    if order == 0 {
        return Err(Error::param("chebyshev order must be >= 1"));
    }
    let mut out = Vec::with_capacity(order);
    let mut prev = Matrix::identity(x.rows());
    let mut cur = x.clone();
    out.push(cur.clone());
    for _ in 1..order {
        let next = x.matmul(&cur)?.scale(2.0)?.sub(&prev)?;
        prev = std::mem::replace(&mut cur, next);
        out.push(cur.clone());
    }
    Ok(out)
}
