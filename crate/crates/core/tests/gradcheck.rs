mod common;

use common::*;
use gnnkrige::numerics::{Activation, Matrix, Tape, Var};

const OP_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;

/// `loss = ‖g(a, b) ⊙ c‖²` for a fixed random `c`, checked against central
/// differences in both `a` and `b`.
fn check_binary(
    seed: u64,
    b_shape: (usize, usize),
    out_shape: (usize, usize),
    g: impl Fn(&mut Tape, Var, Var) -> Var,
) {
    let mut r = rng(seed);
    let a = uniform(&mut r, 3, 4, -1.0, 1.0);
    let b = uniform(&mut r, b_shape.0, b_shape.1, -1.0, 1.0);
    let c = uniform(&mut r, out_shape.0, out_shape.1, -1.0, 1.0);
    let eval = |a: &Matrix, b: &Matrix| -> (f64, Matrix, Matrix) {
        let mut t = Tape::new();
        let (va, vb, vc) = (
            t.parameter(a.clone()),
            t.parameter(b.clone()),
            t.constant(c.clone()),
        );
        let out = g(&mut t, va, vb);
        let weighted = t.hadamard(out, vc).unwrap();
        let loss = t.frobenius_sq(weighted).unwrap();
        let grads = t.backward(loss).unwrap();
        (t.value(loss).get(0, 0), grads.get(va), grads.get(vb))
    };
    let (_, ga, gb) = eval(&a, &b);
    let na = fd_gradient(&a, |x| eval(x, &b).0);
    let nb = fd_gradient(&b, |x| eval(&a, x).0);
    assert!(
        max_rel_error(&ga, &na) <= OP_TOL,
        "d/da: {}",
        max_rel_error(&ga, &na)
    );
    assert!(
        max_rel_error(&gb, &nb) <= OP_TOL,
        "d/db: {}",
        max_rel_error(&gb, &nb)
    );
}

#[test]
fn matmul_gradient() {
    check_binary(1, (4, 2), (3, 2), |t, a, b| t.matmul(a, b).unwrap());
}

#[test]
fn add_gradient() {
    check_binary(2, (3, 4), (3, 4), |t, a, b| t.add(a, b).unwrap());
}

#[test]
fn sub_gradient() {
    check_binary(3, (3, 4), (3, 4), |t, a, b| t.sub(a, b).unwrap());
}

#[test]
fn hadamard_gradient() {
    check_binary(4, (3, 4), (3, 4), |t, a, b| t.hadamard(a, b).unwrap());
}

#[test]
fn activation_gradients() {
    for (i, kind) in [Activation::Relu, Activation::Sigmoid, Activation::Tanh]
        .into_iter()
        .enumerate()
    {
        check_binary(10 + i as u64, (3, 4), (3, 4), move |t, a, b| {
            let s = t.add(a, b).unwrap();
            t.activation(s, kind).unwrap()
        });
    }
}

#[test]
fn frobenius_gradient_is_twice_input() {
    let mut r = rng(5);
    let a = uniform(&mut r, 3, 4, -1.0, 1.0);
    let mut t = Tape::new();
    let v = t.parameter(a.clone());
    let loss = t.frobenius_sq(v).unwrap();
    let g = t.backward(loss).unwrap().get(v);
    let n = fd_gradient(&a, |x| x.frobenius_sq());
    assert!(max_rel_error(&g, &n) <= OP_TOL);
    assert!(g.max_abs_diff(&a.scale(2.0).unwrap()) < 1e-15);
}

#[test]
fn product_then_norm_gradient() {
    let mut r = rng(6);
    let a = uniform(&mut r, 3, 4, -1.0, 1.0);
    let p = uniform(&mut r, 4, 3, -1.0, 1.0);
    let eval = |p: &Matrix| {
        let mut t = Tape::new();
        let (va, vp) = (t.constant(a.clone()), t.parameter(p.clone()));
        let prod = t.matmul(va, vp).unwrap();
        let loss = t.frobenius_sq(prod).unwrap();
        (t.value(loss).get(0, 0), t.backward(loss).unwrap().get(vp))
    };
    let n = fd_gradient(&p, |x| eval(x).0);
    assert!(max_rel_error(&eval(&p).1, &n) <= OP_TOL);
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    for (seed, act) in [
        (1, Activation::Relu),
        (2, Activation::Sigmoid),
        (3, Activation::Tanh),
    ] {
        let e = model_gradient_error(seed, act);
        assert!(e <= MODEL_TOL, "{act:?}: max relative error {e}");
    }
}
