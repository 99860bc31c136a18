use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::param(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted; it freezes the parameters.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!(
                "learning rate must be >= 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param("beta1 and beta2 must lie in [0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::param("eps must be positive"));
        }
        Ok(())
    }
}

/// First-order optimizer state over a fixed list of parameter matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    /// Adam first and second moments; empty for SGD.
    pub moment1: Vec<Matrix>,
    pub moment2: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros =
            || -> Vec<Matrix> { shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect() };
        let (moment1, moment2) = match config.kind {
            OptimizerKind::Adam => (zeros(), zeros()),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Self {
            config,
            step: 0,
            moment1,
            moment2,
        }
    }

    /// Apply one update in place.
    pub fn update(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim(
                "Optimizer::update",
                "parameter/gradient count mismatch",
            ));
        }
        self.step += 1;
        let c = self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    **p = p.sub(&g.scale(c.lr)?)?;
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.moment1[i];
                    let v = &mut self.moment2[i];
                    if m.shape() != g.shape() || p.shape() != g.shape() {
                        return Err(Error::dim("Optimizer::update", "gradient shape mismatch"));
                    }
                    let gs = g.as_slice();
                    for (mi, &gi) in m.data_mut().iter_mut().zip(gs) {
                        *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                    }
                    for (vi, &gi) in v.data_mut().iter_mut().zip(gs) {
                        *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                    }
                    let (ms, vs) = (m.as_slice(), v.as_slice());
                    for (j, x) in p.data_mut().iter_mut().enumerate() {
                        let m_hat = ms[j] / bc1;
                        let v_hat = vs[j] / bc2;
                        *x -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                    }
                    if p.as_slice().iter().any(|x| !x.is_finite()) {
                        return Err(Error::NonFinite { op: "adam" });
                    }
                }
            }
        }
        Ok(())
    }
}
