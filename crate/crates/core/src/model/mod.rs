//! Three-layer diffusion graph convolution network.
//!
//! ```text
//! H1 = D(H0; layer 0)
//! H2 = act(D(H1; layer 1)) + H1
//! X̂  = D(H2; layer 2)
//! D(H; l) = Σ_k T_k(Wf) H Θ1[l][k] + T_k(Wb) H Θ2[l][k],  k = 1..K
//! ```
//!
//! where `Wf`/`Wb` are the forward/backward transition matrices of the
//! subgraph and `T_k` are Chebyshev polynomials. Parameters only touch the
//! time (`h`) and hidden (`z`) dimensions, so one parameter set applies to
//! graphs of any size.

pub(crate) mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::graph::{chebyshev, TransitionPair};
use crate::numerics::{Activation, Matrix, Tape, Var};

pub use io::{read_params, write_params};

pub const LAYERS: usize = 3;

/// Identifies one `Θ` matrix. `direction` is 1 (paired with the forward
/// transition) or 2 (paired with the backward transition); `k` runs `1..=K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub layer: usize,
    pub direction: usize,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub dir1: Vec<Matrix>,
    pub dir2: Vec<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    order: usize,
    window: usize,
    hidden: usize,
    activation: Activation,
    layers: Vec<LayerParams>,
}

impl ModelParams {
    /// Assemble from explicit layers; shapes are checked.
    pub fn new(
        order: usize,
        window: usize,
        hidden: usize,
        activation: Activation,
        layers: Vec<LayerParams>,
    ) -> Result<Self> {
        if order == 0 || window == 0 || hidden == 0 {
            return Err(Error::param("order, window and hidden width must be >= 1"));
        }
        if layers.len() != LAYERS {
            return Err(Error::param(format!(
                "expected {LAYERS} layers, got {}",
                layers.len()
            )));
        }
        let p = Self {
            order,
            window,
            hidden,
            activation,
            layers,
        };
        for (l, layer) in p.layers.iter().enumerate() {
            let shape = p.layer_shape(l);
            for bank in [&layer.dir1, &layer.dir2] {
                if bank.len() != order {
                    return Err(Error::param(format!(
                        "layer {l}: expected {order} matrices per direction"
                    )));
                }
                if let Some(m) = bank.iter().find(|m| m.shape() != shape) {
                    return Err(Error::dim(
                        "ModelParams::new",
                        format!("layer {l}: expected {shape:?}, got {:?}", m.shape()),
                    ));
                }
            }
        }
        Ok(p)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Shape of every `Θ` in layer `l`: `h×z`, `z×z`, `z×h`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        match l {
            0 => (self.window, self.hidden),
            1 => (self.hidden, self.hidden),
            _ => (self.hidden, self.window),
        }
    }

    /// All parameter keys in canonical order: layer, then direction, then k.
    pub fn keys(&self) -> Vec<ParamKey> {
        let mut keys = Vec::with_capacity(LAYERS * 2 * self.order);
        for layer in 0..LAYERS {
            for direction in 1..=2 {
                for k in 1..=self.order {
                    keys.push(ParamKey {
                        layer,
                        direction,
                        k,
                    });
                }
            }
        }
        keys
    }

    pub fn get(&self, key: ParamKey) -> &Matrix {
        let l = &self.layers[key.layer];
        let bank = if key.direction == 1 { &l.dir1 } else { &l.dir2 };
        &bank[key.k - 1]
    }

    /// Matrices in [`ModelParams::keys`] order.
    pub fn matrices(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| l.dir1.iter().chain(&l.dir2))
            .collect()
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.dir1.iter_mut().chain(l.dir2.iter_mut()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.rows() * m.cols()).sum()
    }

    /// Scale every matrix of one layer by `c`.
    pub fn scale_layer(&mut self, layer: usize, c: f64) -> Result<()> {
        let l = &mut self.layers[layer];
        for m in l.dir1.iter_mut().chain(l.dir2.iter_mut()) {
            *m = m.scale(c)?;
        }
        Ok(())
    }
}

/// Glorot-uniform initialization, deterministic in `seed`.
pub fn init_params(
    order: usize,
    window: usize,
    hidden: usize,
    activation: Activation,
    seed: u64,
) -> Result<ModelParams> {
    if order == 0 || window == 0 || hidden == 0 {
        return Err(Error::param("order, window and hidden width must be >= 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let shapes = [(window, hidden), (hidden, hidden), (hidden, window)];
    let mut layers = Vec::with_capacity(LAYERS);
    for (rows, cols) in shapes {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut bank = || -> Result<Vec<Matrix>> {
            (0..order)
                .map(|_| Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound)))
                .collect()
        };
        let dir1 = bank()?;
        let dir2 = bank()?;
        layers.push(LayerParams { dir1, dir2 });
    }
    ModelParams::new(order, window, hidden, activation, layers)
}

/// Chebyshev filters `T_1..T_K` of both transition matrices.
#[derive(Clone, Debug)]
pub struct DiffusionFilters {
    pub forward: Vec<Matrix>,
    pub backward: Vec<Matrix>,
}

impl DiffusionFilters {
    pub fn new(trans: &TransitionPair, order: usize) -> Result<Self> {
        Ok(Self {
            forward: chebyshev(&trans.forward, order)?,
            backward: chebyshev(&trans.backward, order)?,
        })
    }

    pub fn nodes(&self) -> usize {
        self.forward[0].rows()
    }
}

#[derive(Clone, Debug)]
pub struct ForwardResult {
    pub output: Matrix,
    pub hidden1: Matrix,
    pub hidden2: Matrix,
}

/// Handles to the recorded pieces of one forward pass.
pub struct TapeForward {
    pub params: Vec<Var>,
    pub output: Var,
    pub hidden1: Var,
    pub hidden2: Var,
}

/// One diffusion convolution on a tape.
pub fn dgcn_layer_on_tape(
    tape: &mut Tape,
    input: Var,
    filters_fwd: &[Var],
    filters_bwd: &[Var],
    theta1: &[Var],
    theta2: &[Var],
) -> Result<Var> {
    let k = filters_fwd.len();
    if k == 0 || filters_bwd.len() != k || theta1.len() != k || theta2.len() != k {
        return Err(Error::dim(
            "dgcn_layer",
            "filter and parameter lists must all have length K",
        ));
    }
    let mut acc: Option<Var> = None;
    for i in 0..k {
        for (filter, theta) in [(filters_fwd[i], theta1[i]), (filters_bwd[i], theta2[i])] {
            let propagated = tape.matmul(filter, input)?;
            let term = tape.matmul(propagated, theta)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
    }
    Ok(acc.expect("k >= 1"))
}

/// `Σ_k T_f[k] H Θ1[k] + T_b[k] H Θ2[k]` on plain matrices.
pub fn dgcn_layer(
    input: &Matrix,
    filters_fwd: &[Matrix],
    filters_bwd: &[Matrix],
    theta1: &[Matrix],
    theta2: &[Matrix],
) -> Result<Matrix> {
    let mut tape = Tape::new();
    let h = tape.constant(input.clone());
    let mut consts = |ms: &[Matrix]| {
        ms.iter()
            .map(|m| tape.constant(m.clone()))
            .collect::<Vec<_>>()
    };
    let (f, b, t1, t2) = (
        consts(filters_fwd),
        consts(filters_bwd),
        consts(theta1),
        consts(theta2),
    );
    let out = dgcn_layer_on_tape(&mut tape, h, &f, &b, &t1, &t2)?;
    Ok(tape.value(out).clone())
}

/// Record the full network on `tape`. Parameters become tape parameters
/// (in [`ModelParams::keys`] order) when `trainable`, constants otherwise.
pub fn forward_on_tape(
    tape: &mut Tape,
    params: &ModelParams,
    input: &Matrix,
    filters: &DiffusionFilters,
    trainable: bool,
) -> Result<TapeForward> {
    let n = filters.nodes();
    if input.shape() != (n, params.window) {
        return Err(Error::dim(
            "forward",
            format!(
                "input {:?}, expected ({n}, {})",
                input.shape(),
                params.window
            ),
        ));
    }
    if filters.forward.len() != params.order || filters.backward.len() != params.order {
        return Err(Error::dim(
            "forward",
            "filter order differs from model order",
        ));
    }
    let fwd: Vec<Var> = filters
        .forward
        .iter()
        .map(|m| tape.constant(m.clone()))
        .collect();
    let bwd: Vec<Var> = filters
        .backward
        .iter()
        .map(|m| tape.constant(m.clone()))
        .collect();
    let param_vars: Vec<Var> = params
        .matrices()
        .into_iter()
        .map(|m| {
            if trainable {
                tape.parameter(m.clone())
            } else {
                tape.constant(m.clone())
            }
        })
        .collect();
    let k = params.order;
    let bank = |layer: usize, dir: usize| {
        let start = (layer * 2 + dir) * k;
        &param_vars[start..start + k]
    };

    let h0 = tape.constant(input.clone());
    let h1 = dgcn_layer_on_tape(tape, h0, &fwd, &bwd, bank(0, 0), bank(0, 1))?;
    let pre2 = dgcn_layer_on_tape(tape, h1, &fwd, &bwd, bank(1, 0), bank(1, 1))?;
    let act2 = tape.activation(pre2, params.activation)?;
    let h2 = tape.add(act2, h1)?;
    let out = dgcn_layer_on_tape(tape, h2, &fwd, &bwd, bank(2, 0), bank(2, 1))?;

    Ok(TapeForward {
        params: param_vars,
        output: out,
        hidden1: h1,
        hidden2: h2,
    })
}

pub fn forward(
    params: &ModelParams,
    input: &Matrix,
    trans: &TransitionPair,
) -> Result<ForwardResult> {
    let filters = DiffusionFilters::new(trans, params.order)?;
    forward_with_filters(params, input, &filters)
}

pub fn forward_with_filters(
    params: &ModelParams,
    input: &Matrix,
    filters: &DiffusionFilters,
) -> Result<ForwardResult> {
    let mut tape = Tape::new();
    let f = forward_on_tape(&mut tape, params, input, filters, false)?;
    Ok(ForwardResult {
        output: tape.value(f.output).clone(),
        hidden1: tape.value(f.hidden1).clone(),
        hidden2: tape.value(f.hidden2).clone(),
    })
}

/// Masked squared reconstruction error `Σ valid ⊙ (X̂ − X)²` and its
/// gradient with respect to every parameter (in [`ModelParams::keys`] order).
pub fn loss_and_gradients(
    params: &ModelParams,
    input: &Matrix,
    filters: &DiffusionFilters,
    target: &Matrix,
    valid: &Matrix,
) -> Result<(f64, Vec<Matrix>)> {
    if target.shape() != valid.shape() || target.shape() != input.shape() {
        return Err(Error::dim("loss", "input, target and mask shapes differ"));
    }
    let mut tape = Tape::new();
    let f = forward_on_tape(&mut tape, params, input, filters, true)?;
    let truth = tape.constant(target.clone());
    let mask = tape.constant(valid.clone());
    let diff = tape.sub(f.output, truth)?;
    let masked = tape.hadamard(diff, mask)?;
    let loss = tape.frobenius_sq(masked)?;
    let grads = tape.backward(loss)?;
    let value = tape.value(loss).get(0, 0);
    Ok((value, f.params.iter().map(|&v| grads.get(v)).collect()))
}
