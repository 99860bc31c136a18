mod common;

use common::*;
use gnnkrige::data::{gen_synthetic, split, FieldParams, SplitSpec};
use gnnkrige::graph::{
    chebyshev, gaussian_adjacency, transitions, transitions_of, AdjacencyKind, AdjacencyMatrix,
    DistanceMatrix,
};
use gnnkrige::model::{forward, init_params};
use gnnkrige::numerics::{Activation, Matrix};
use gnnkrige::sampler::{draw_sample, SamplerConfig, SignalMatrix};
use gnnkrige::trainer::{normalize, NormStats};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut s = 0.0;
        for k in 0..a.cols() {
            s += a.get(i, k) * b.get(k, j);
        }
        s
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5)
            .prop_flat_map(|(m, n, p, q)| (matrix(m, n), matrix(n, p), matrix(p, q)))
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-10);
    }

    #[test]
    fn matmul_matches_triple_loop((a, b) in (matrix(3, 4), matrix(4, 2))) {
        prop_assert!(a.matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);
    }

    #[test]
    fn transitions_are_row_stochastic(
        w in (2usize..8).prop_flat_map(|n| prop::collection::vec(0.01f64..5.0, n * n).prop_map(move |d| (n, d)))
    ) {
        let (n, d) = w;
        let m = Matrix::from_vec(n, n, d).unwrap();
        let t = transitions_of(&m).unwrap();
        for i in 0..n {
            prop_assert!((t.forward.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!((t.backward.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let sym = m.add(&m.transpose()).unwrap();
        let ts = transitions_of(&sym).unwrap();
        prop_assert_eq!(ts.forward, ts.backward);
    }

    #[test]
    fn chebyshev_matches_closed_forms(x in matrix(4, 4)) {
        let t = chebyshev(&x, 3).unwrap();
        let i = Matrix::identity(4);
        let x2 = x.matmul(&x).unwrap();
        let x3 = x2.matmul(&x).unwrap();
        prop_assert_eq!(&t[0], &x);
        prop_assert!(t[1].max_abs_diff(&x2.scale(2.0).unwrap().sub(&i).unwrap()) <= 1e-10);
        prop_assert!(t[2].max_abs_diff(&x3.scale(4.0).unwrap().sub(&x.scale(3.0).unwrap()).unwrap()) <= 1e-10);
    }

    #[test]
    fn gaussian_weight_decreases_with_distance(a in 0.0f64..10.0, b in 0.0f64..10.0, sigma in 0.1f64..5.0) {
        let d = DistanceMatrix::new(Matrix::from_rows(&[vec![0.0, a, b], vec![a, 0.0, 1.0], vec![b, 1.0, 0.0]]).unwrap()).unwrap();
        let w = gaussian_adjacency(&d, sigma).unwrap();
        let (wa, wb) = (w.weights().get(0, 1), w.weights().get(0, 2));
        prop_assert!((0.0..=1.0).contains(&wa) && (0.0..=1.0).contains(&wb));
        if a < b {
            prop_assert!(wa >= wb);
        }
    }

    #[test]
    fn forward_is_permutation_equivariant(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = 6;
        let params = init_params(2, 5, 4, Activation::Relu, seed).unwrap();
        let adj = random_adjacency(&mut r, n);
        let x = uniform(&mut r, n, 5, -1.0, 1.0);
        let perm = permutation(&mut r, n);
        let base = forward(&params, &x, &transitions(&adj)).unwrap().output;
        let permuted = forward(&params, &permute_rows(&x, &perm), &transitions(&adj.submatrix(&perm).unwrap()))
            .unwrap()
            .output;
        prop_assert!(permuted.max_abs_diff(&permute_rows(&base, &perm)) <= 1e-9);
    }

    #[test]
    fn output_is_linear_in_last_layer(seed in 0u64..1000, c in -3.0f64..3.0) {
        let mut r = rng(seed);
        let mut params = init_params(2, 4, 3, Activation::Tanh, seed).unwrap();
        let trans = transitions(&random_adjacency(&mut r, 5));
        let x = uniform(&mut r, 5, 4, -1.0, 1.0);
        let base = forward(&params, &x, &trans).unwrap().output;
        params.scale_layer(2, c).unwrap();
        let scaled = forward(&params, &x, &trans).unwrap().output;
        prop_assert!(scaled.max_abs_diff(&base.scale(c).unwrap()) <= 1e-10);
    }

    #[test]
    fn same_parameters_fit_any_graph_size(n in 1usize..12, seed in 0u64..100) {
        let mut r = rng(seed);
        let params = init_params(2, 3, 4, Activation::Relu, 0).unwrap();
        let w = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 }).unwrap();
        let adj = AdjacencyMatrix::new(w, AdjacencyKind::Gaussian).unwrap();
        let x = uniform(&mut r, n, 3, -1.0, 1.0);
        prop_assert_eq!(forward(&params, &x, &transitions(&adj)).unwrap().output.shape(), (n, 3));
    }

    #[test]
    fn samples_respect_counts_and_missing_data(
        seed in 0u64..10_000,
        n_o in 1usize..6,
        n_m in 1usize..4,
        holes in prop::collection::vec((0usize..9, 0usize..40), 0..20)
    ) {
        let (n, p, h) = (9, 40, 6);
        let mut observed = vec![true; n * p];
        for (i, t) in &holes {
            observed[i * p + t] = false;
        }
        let values: Vec<f64> = (0..n * p).map(|k| k as f64).collect();
        let signals = SignalMatrix::new(n, p, values, observed).unwrap();
        let adj = random_adjacency(&mut rng(seed), n);
        let cfg = SamplerConfig { window: h, n_observed: n_o, n_masked: n_m, ..SamplerConfig::for_sensors(n) };
        let s = draw_sample(&signals, &adj, &cfg, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();

        let mut idx = s.node_indices.clone();
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), n_o + n_m);
        prop_assert!(s.window_start + h <= p);
        for (r, &node) in s.node_indices.iter().enumerate() {
            for c in 0..h {
                let t = s.window_start + c;
                let present = signals.is_observed(node, t);
                prop_assert_eq!(s.signals.get(r, c), if present { signals.value(node, t) } else { 0.0 });
                prop_assert_eq!(s.valid.get(r, c), if present { 1.0 } else { 0.0 });
                let expect_mask = if r < n_o && present { 1.0 } else { 0.0 };
                prop_assert_eq!(s.mask.get(r, c), expect_mask);
            }
        }
        for (a, &i) in s.node_indices.iter().enumerate() {
            for (b, &j) in s.node_indices.iter().enumerate() {
                prop_assert_eq!(s.adjacency.weights().get(a, b), adj.weights().get(i, j));
            }
        }
    }

    #[test]
    fn split_partitions_sensors_without_leaking(n in 6usize..30, seed in 0u64..1000) {
        let ds = gen_synthetic(n, 40, &FieldParams::default(), 0.0, seed).unwrap();
        let sp = split(&ds, &SplitSpec { seed, ..Default::default() }).unwrap();
        let mut all: Vec<usize> = sp.observed.iter().chain(&sp.unsampled).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(sp.train.sensors(), sp.observed.len());
        prop_assert_eq!(sp.train_steps, 28);
        for (r, &i) in sp.observed.iter().enumerate() {
            for t in 0..sp.train_steps {
                prop_assert_eq!(sp.train.value(r, t), ds.signals.value(i, t));
            }
        }
    }

    #[test]
    fn normalization_round_trips(d in prop::collection::vec(-100.0f64..100.0, 12)) {
        let m = Matrix::from_vec(3, 4, d).unwrap();
        let s = SignalMatrix::from_matrix(&m);
        if let Ok((z, stats)) = normalize(&s) {
            let zm = Matrix::from_vec(3, 4, z.values().to_vec()).unwrap();
            prop_assert!(stats.denormalize(&zm).unwrap().max_abs_diff(&m) <= 1e-10);
            let mean = zm.sum() / 12.0;
            let var = zm.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            prop_assert!(mean.abs() <= 1e-9 && (var.sqrt() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(NormStats::fit(&s).unwrap(), stats);
        }
    }
}

#[test]
fn sampler_node_frequencies_are_binomial() {
    let (n, draws) = (10, 10_000);
    let signals =
        SignalMatrix::from_matrix(&Matrix::from_fn(n, 30, |i, t| (i + t) as f64).unwrap());
    let adj = random_adjacency(&mut rng(0), n);
    let cfg = SamplerConfig {
        window: 5,
        n_observed: 3,
        n_masked: 2,
        ..SamplerConfig::for_sensors(n)
    };
    let mut r = ChaCha20Rng::seed_from_u64(42);
    let mut counts = vec![0usize; n];
    let mut starts = [0usize; 30 - 5];
    for _ in 0..draws {
        let s = draw_sample(&signals, &adj, &cfg, &mut r).unwrap();
        for &i in &s.node_indices {
            counts[i] += 1;
        }
        starts[s.window_start] += 1;
    }
    let p = 5.0 / n as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        let f = c as f64 / draws as f64;
        assert!(
            (f - p).abs() <= 3.0 * se,
            "node {i}: frequency {f}, expected {p} +- {}",
            3.0 * se
        );
    }
    assert!(
        starts.iter().all(|&c| c > 0),
        "every window start is reachable"
    );
}
