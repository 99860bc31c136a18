//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass as an append-only
//! list of nodes. Parents always precede their children, so the recorded graph
//! is acyclic and `backward` is a single reverse sweep.

use super::matrix::{ElementwiseOp, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::param(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Elementwise(Var, Var, ElementwiseOp),
    Activation(Var, Activation),
    FrobeniusSq(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn parameter(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn elementwise(&mut self, a: Var, b: Var, op: ElementwiseOp) -> Result<Var> {
        let value = self.value(a).elementwise(self.value(b), op)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Elementwise(a, b, op), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseOp::Sub)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseOp::Hadamard)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let value = self.value(a).map("activation", |x| kind.apply(x))?;
        let rg = self.requires(a);
        Ok(self.push(value, Op::Activation(a, kind), rg))
    }

    /// Sum of squared entries as a 1x1 node.
    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).frobenius_sq();
        let value =
            Matrix::from_vec(1, 1, vec![s]).map_err(|_| Error::NonFinite { op: "frobenius_sq" })?;
        let rg = self.requires(a);
        Ok(self.push(value, Op::FrobeniusSq(a), rg))
    }

    /// Propagate d`loss`/d(node) back to every node of the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::dim(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(upstream);
                continue;
            }
            for parent in node.parents() {
                if parent.0 >= i {
                    return Err(Error::Internal(format!(
                        "tape node {i} depends on later node {}",
                        parent.0
                    )));
                }
            }
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.requires(*a) {
                        let g = upstream.matmul(&self.value(*b).transpose())?;
                        accumulate(&mut grads[a.0], g)?;
                    }
                    if self.requires(*b) {
                        let g = self.value(*a).transpose().matmul(&upstream)?;
                        accumulate(&mut grads[b.0], g)?;
                    }
                }
                Op::Elementwise(a, b, op) => {
                    let (ga, gb) = match op {
                        ElementwiseOp::Add => (upstream.clone(), upstream.clone()),
                        ElementwiseOp::Sub => (upstream.clone(), upstream.scale(-1.0)?),
                        ElementwiseOp::Hadamard => (
                            upstream.hadamard(self.value(*b))?,
                            upstream.hadamard(self.value(*a))?,
                        ),
                    };
                    if self.requires(*a) {
                        accumulate(&mut grads[a.0], ga)?;
                    }
                    if self.requires(*b) {
                        accumulate(&mut grads[b.0], gb)?;
                    }
                }
                Op::Activation(a, kind) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let g = Matrix::from_fn(x.rows(), x.cols(), |r, c| {
                        upstream.get(r, c) * kind.derivative(x.get(r, c), y.get(r, c))
                    })?;
                    accumulate(&mut grads[a.0], g)?;
                }
                Op::FrobeniusSq(a) => {
                    let c = 2.0 * upstream.get(0, 0);
                    accumulate(&mut grads[a.0], self.value(*a).scale(c)?)?;
                }
            }
            grads[i] = Some(upstream);
        }

        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            grads,
        })
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }
}

impl Node {
    fn parents(&self) -> Vec<Var> {
        match self.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Elementwise(a, b, _) => vec![a, b],
            Op::Activation(a, _) | Op::FrobeniusSq(a) => vec![a],
        }
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) -> Result<()> {
    match slot {
        Some(acc) => {
            for (x, y) in acc.data_mut().iter_mut().zip(g.as_slice()) {
                *x += y;
            }
            if acc.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { op: "backward" });
            }
        }
        None => *slot = Some(g),
    }
    Ok(())
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    shapes: Vec<(usize, usize)>,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `v`; zero when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}
