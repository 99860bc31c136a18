#![allow(dead_code)]

use gnnkrige::data::{gen_synthetic, split, AdjacencySpec, Dataset, FieldParams, Split, SplitSpec};
use gnnkrige::graph::{transitions, AdjacencyKind, AdjacencyMatrix};
use gnnkrige::model::{
    forward_with_filters, init_params, loss_and_gradients, DiffusionFilters, LayerParams,
    ModelParams,
};
use gnnkrige::numerics::{Activation, Matrix};
use gnnkrige::trainer::{train, TrainConfig, TrainReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha20Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi)).unwrap()
}

pub fn with_entry(m: &Matrix, idx: usize, value: f64) -> Matrix {
    let mut data = m.as_slice().to_vec();
    data[idx] = value;
    Matrix::from_vec(m.rows(), m.cols(), data).unwrap()
}

/// Central differences of `f` at `at`, entry by entry.
pub fn fd_gradient(at: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let g: Vec<f64> = (0..at.as_slice().len())
        .map(|i| {
            let x = at.as_slice()[i];
            (f(&with_entry(at, i, x + FD_STEP)) - f(&with_entry(at, i, x - FD_STEP)))
                / (2.0 * FD_STEP)
        })
        .collect();
    Matrix::from_vec(at.rows(), at.cols(), g).unwrap()
}

pub fn max_rel_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

pub fn random_adjacency(rng: &mut ChaCha20Rng, n: usize) -> AdjacencyMatrix {
    let w = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            rng.random_range(0.05..1.0)
        }
    })
    .unwrap();
    AdjacencyMatrix::new(w, AdjacencyKind::Gaussian).unwrap()
}

pub fn permutation(rng: &mut ChaCha20Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Rows of `m` reordered so row `r` of the result is row `perm[r]` of `m`.
pub fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let cols: Vec<usize> = (0..m.cols()).collect();
    m.submatrix(perm, &cols).unwrap()
}

/// Replace one parameter matrix (in `keys()` order) of `params`.
pub fn replace_param(params: &ModelParams, index: usize, value: Matrix) -> ModelParams {
    let k = params.order();
    let mut layers: Vec<LayerParams> = params.layers().to_vec();
    let (layer, rest) = (index / (2 * k), index % (2 * k));
    let bank = if rest < k {
        &mut layers[layer].dir1
    } else {
        &mut layers[layer].dir2
    };
    bank[rest % k] = value;
    ModelParams::new(
        k,
        params.window(),
        params.hidden(),
        params.activation(),
        layers,
    )
    .unwrap()
}

/// Independent metric oracle: plain loops over `(estimate, truth)` pairs.
pub struct NaiveMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub r2: Option<f64>,
}

pub fn naive_metrics(est: &[f64], truth: &[f64], eps: f64) -> NaiveMetrics {
    let n = est.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for i in 0..est.len() {
        sq += (est[i] - truth[i]) * (est[i] - truth[i]);
        abs += (est[i] - truth[i]).abs();
    }
    let mut mean = 0.0;
    for t in truth {
        mean += t;
    }
    mean /= n;
    let mut sst = 0.0;
    for t in truth {
        sst += (t - mean) * (t - mean);
    }
    let mut ape = 0.0;
    let mut kept = 0;
    for i in 0..est.len() {
        if truth[i].abs() > eps {
            ape += ((est[i] - truth[i]) / truth[i]).abs();
            kept += 1;
        }
    }
    NaiveMetrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: if kept > 0 {
            Some(100.0 * ape / kept as f64)
        } else {
            None
        },
        r2: if sst > 0.0 {
            Some(1.0 - sq / sst)
        } else {
            None
        },
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Full three-layer loss on a 5-node, h=4, z=3, K=2 instance.
pub fn model_gradient_error(seed: u64, activation: Activation) -> f64 {
    let mut r = rng(seed);
    let (n, h, z, k) = (5, 4, 3, 2);
    let params = init_params(k, h, z, activation, seed).unwrap();
    let filters = DiffusionFilters::new(&transitions(&random_adjacency(&mut r, n)), k).unwrap();
    let target = uniform(&mut r, n, h, -1.0, 1.0);
    let mask = Matrix::from_fn(n, h, |i, _| if i < 3 { 1.0 } else { 0.0 }).unwrap();
    let input = target.hadamard(&mask).unwrap();
    let valid = Matrix::from_fn(n, h, |i, t| if (i, t) == (4, 1) { 0.0 } else { 1.0 }).unwrap();

    let (_, grads) = loss_and_gradients(&params, &input, &filters, &target, &valid).unwrap();
    let mut worst: f64 = 0.0;
    for (idx, m) in params.matrices().into_iter().enumerate() {
        let numeric = fd_gradient(m, |x| {
            let p = replace_param(&params, idx, x.clone());
            let out = forward_with_filters(&p, &input, &filters).unwrap().output;
            out.sub(&target)
                .unwrap()
                .hadamard(&valid)
                .unwrap()
                .frobenius_sq()
        });
        worst = worst.max(max_rel_error(&grads[idx], &numeric));
    }
    worst
}

/// Reference synthetic experiment: 40 sensors, 2000 steps, noise 0.1,
/// 25% unsampled sensors, 70/30 time split.
pub struct SyntheticRun {
    pub dataset: Dataset,
    pub split: Split,
    /// Adjacency over all sensors, dataset order.
    pub adjacency: AdjacencyMatrix,
    pub report: TrainReport,
}

pub const REF_SENSORS: usize = 40;
pub const REF_STEPS: usize = 2000;
pub const REF_NOISE: f64 = 0.1;

pub fn reference_config(n_train: usize) -> TrainConfig {
    let mut cfg = TrainConfig::for_sensors(n_train);
    cfg.model.order = 2;
    cfg.model.hidden = 32;
    cfg.model.activation = Activation::Sigmoid;
    cfg.sampler.window = 24;
    cfg.sampler.samples_per_iter = 4;
    cfg.sampler.iterations = 750;
    cfg.optimizer.lr = 1e-3;
    cfg
}

pub fn synthetic_run(spec: AdjacencySpec, iterations: usize) -> SyntheticRun {
    let dataset = gen_synthetic(
        REF_SENSORS,
        REF_STEPS,
        &FieldParams::default(),
        REF_NOISE,
        1,
    )
    .unwrap();
    let split = split(
        &dataset,
        &SplitSpec {
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let adjacency = dataset.adjacency(spec).unwrap().adjacency;
    let mut cfg = reference_config(split.observed.len());
    cfg.sampler.iterations = iterations;
    let report = train(
        &split.train,
        &adjacency.submatrix(&split.observed).unwrap(),
        &cfg,
        1,
    )
    .unwrap();
    SyntheticRun {
        dataset,
        split,
        adjacency,
        report,
    }
}
