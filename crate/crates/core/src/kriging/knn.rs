use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Unweighted mean of the `k` spatially nearest observed sensors, per time
/// step.
///
/// `distances[v][s]` is the distance from virtual sensor `v` to observed
/// sensor `s`. Neighbors missing a reading at some step are skipped there
/// and the next nearest observed reading takes their place. With fewer than
/// `k` sensors, all of them are used. Ties go to the lower index.
pub fn knn_baseline(
    observed: &Matrix,
    observed_mask: &Matrix,
    distances: &[Vec<f64>],
    k: usize,
) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::param("k must be >= 1"));
    }
    if observed.shape() != observed_mask.shape() {
        return Err(Error::dim("knn_baseline", "signal and mask shapes differ"));
    }
    let (n_s, h) = observed.shape();
    if distances.is_empty() {
        return Err(Error::param("no virtual sensors to estimate"));
    }
    if distances.iter().any(|d| d.len() != n_s) {
        return Err(Error::dim(
            "knn_baseline",
            "distance rows must cover every observed sensor",
        ));
    }
    let window_mean = {
        let (sum, count) = (0..n_s * h)
            .filter(|&i| observed_mask.as_slice()[i] != 0.0)
            .fold((0.0, 0usize), |(s, c), i| {
                (s + observed.as_slice()[i], c + 1)
            });
        if count == 0 {
            return Err(Error::param("window has no observed readings"));
        }
        sum / count as f64
    };

    Matrix::from_fn(distances.len(), h, |v, t| {
        let mut order: Vec<usize> = (0..n_s).collect();
        order.sort_by(|&a, &b| distances[v][a].total_cmp(&distances[v][b]));
        let picked: Vec<f64> = order
            .into_iter()
            .filter(|&s| observed_mask.get(s, t) != 0.0)
            .take(k)
            .map(|s| observed.get(s, t))
            .collect();
        if picked.is_empty() {
            window_mean
        } else {
            picked.iter().sum::<f64>() / picked.len() as f64
        }
    })
}
