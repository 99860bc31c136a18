//! Minimizes the summed masked reconstruction error over random subgraphs.

mod checkpoint;
mod normalize;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{transitions, AdjacencyMatrix};
use crate::model::{
    forward_with_filters, init_params, loss_and_gradients, DiffusionFilters, ModelParams,
};
use crate::numerics::{Activation, Matrix};
use crate::sampler::{default_counts, draw_batch, SamplerConfig, SignalMatrix};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use normalize::{denormalize, normalize, NormStats};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

const SAMPLER_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;

/// `Σ valid ⊙ (X̂ − X)²`.
pub fn loss(estimate: &Matrix, truth: &Matrix, valid: &Matrix) -> Result<f64> {
    if estimate.shape() != truth.shape() || truth.shape() != valid.shape() {
        return Err(Error::dim("loss", "estimate, truth and mask shapes differ"));
    }
    Ok(estimate.sub(truth)?.hadamard(valid)?.frobenius_sq())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub order: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            order: 2,
            hidden: 100,
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    /// Fixed statistics; fitted on the training signals when `None`.
    pub normalization: Option<NormStats>,
    /// Trailing fraction of the training period held out for model
    /// selection. Zero disables validation.
    pub validation_fraction: f64,
    pub validation_every: usize,
}

impl TrainConfig {
    /// Defaults for `n` training sensors.
    pub fn for_sensors(n: usize) -> Self {
        Self {
            sampler: SamplerConfig::for_sensors(n),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            normalization: None,
            validation_fraction: 0.0,
            validation_every: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub iteration: usize,
    pub rmse: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub seed: u64,
    pub iteration: usize,
    pub params: ModelParams,
    pub optimizer: Optimizer,
    pub rng: ChaCha20Rng,
    pub losses: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
    pub best: Option<(ValidationPoint, ModelParams)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Pre-step batch loss for every iteration.
    pub losses: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
    pub best_iteration: Option<usize>,
    pub wall_clock_secs: f64,
    pub params: ModelParams,
    pub stats: NormStats,
}

struct ValidationSet {
    signals: SignalMatrix,
    filters: DiffusionFilters,
    masked_rows: Vec<usize>,
}

pub struct Trainer {
    cfg: TrainConfig,
    stats: NormStats,
    fit: SignalMatrix,
    adjacency: AdjacencyMatrix,
    validation: Option<ValidationSet>,
    state: TrainState,
}

impl Trainer {
    /// Fresh run. `signals` must cover only the training period and training
    /// sensors; `seed` drives initialization, sampling and validation.
    pub fn new(
        signals: &SignalMatrix,
        adjacency: &AdjacencyMatrix,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        let stats = match cfg.normalization {
            Some(s) => s,
            None => NormStats::fit(signals)?,
        };
        let m = cfg.model;
        let params = init_params(m.order, cfg.sampler.window, m.hidden, m.activation, seed)?;
        let shapes: Vec<_> = params.matrices().iter().map(|p| p.shape()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLER_STREAM);
        let state = TrainState {
            seed,
            iteration: 0,
            optimizer: Optimizer::new(cfg.optimizer, &shapes),
            params,
            rng,
            losses: Vec::new(),
            validation: Vec::new(),
            best: None,
        };
        Self::with_state(signals, adjacency, cfg, stats, state)
    }

    pub fn resume(
        signals: &SignalMatrix,
        adjacency: &AdjacencyMatrix,
        cfg: &TrainConfig,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        if checkpoint.state.params.window() != cfg.sampler.window
            || checkpoint.state.params.order() != cfg.model.order
            || checkpoint.state.params.hidden() != cfg.model.hidden
        {
            return Err(Error::param(
                "checkpoint model shape differs from configuration",
            ));
        }
        Self::with_state(signals, adjacency, cfg, checkpoint.stats, checkpoint.state)
    }

    fn with_state(
        signals: &SignalMatrix,
        adjacency: &AdjacencyMatrix,
        cfg: &TrainConfig,
        stats: NormStats,
        state: TrainState,
    ) -> Result<Self> {
        cfg.optimizer.validate()?;
        if adjacency.len() != signals.sensors() {
            return Err(Error::dim(
                "train",
                "adjacency and signals disagree on sensor count",
            ));
        }
        if !(0.0..1.0).contains(&cfg.validation_fraction) {
            return Err(Error::param("validation fraction must lie in [0, 1)"));
        }
        let normalized = stats.apply(signals);
        let p = signals.steps();
        let h = cfg.sampler.window;
        let (fit, validation) = if cfg.validation_fraction > 0.0 {
            let held = (cfg.validation_fraction * p as f64).round() as usize;
            if held < h || p - held <= h {
                return Err(Error::param(format!(
                    "validation split of {held} steps leaves no room for windows of {h}"
                )));
            }
            let fit = normalized.time_slice(0..p - held)?;
            let held_out = normalized.time_slice(p - held..p)?;
            let n = signals.sensors();
            let mut rng = ChaCha20Rng::seed_from_u64(state.seed);
            rng.set_stream(VALIDATION_STREAM);
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(&mut rng);
            let (_, n_masked) = default_counts(n);
            let mut masked_rows = nodes[..n_masked].to_vec();
            masked_rows.sort_unstable();
            let filters = DiffusionFilters::new(&transitions(adjacency), cfg.model.order)?;
            (
                fit,
                Some(ValidationSet {
                    signals: held_out,
                    filters,
                    masked_rows,
                }),
            )
        } else {
            (normalized, None)
        };
        cfg.sampler.validate(&fit)?;
        Ok(Self {
            cfg: cfg.clone(),
            stats,
            fit,
            adjacency: adjacency.clone(),
            validation,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn stats(&self) -> NormStats {
        self.stats
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.cfg.sampler.iterations
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            stats: self.stats,
            state: self.state.clone(),
        }
    }

    /// One iteration: draw a batch, record its loss, take one optimizer step.
    pub fn step(&mut self) -> Result<f64> {
        let iteration = self.state.iteration;
        let wrap = |e: Error| Error::Training {
            iteration,
            source: Box::new(e),
        };
        let loss = self.step_inner().map_err(wrap)?;
        let every = self.cfg.validation_every;
        let done = self.state.iteration;
        if self.validation.is_some()
            && every > 0
            && (done.is_multiple_of(every) || done == self.cfg.sampler.iterations)
        {
            self.validate().map_err(wrap)?;
        }
        Ok(loss)
    }

    fn step_inner(&mut self) -> Result<f64> {
        let batch = draw_batch(
            &self.fit,
            &self.adjacency,
            &self.cfg.sampler,
            &mut self.state.rng,
        )?;
        let params = &self.state.params;
        let mut total = 0.0;
        let mut grad_sum: Vec<Matrix> = params
            .matrices()
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        for sample in &batch {
            let filters = DiffusionFilters::new(&transitions(&sample.adjacency), params.order())?;
            let (l, grads) = loss_and_gradients(
                params,
                &sample.masked_input(),
                &filters,
                &sample.signals,
                &sample.valid,
            )?;
            total += l;
            for (acc, g) in grad_sum.iter_mut().zip(grads) {
                *acc = acc.add(&g)?;
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite { op: "batch loss" });
        }
        let mut slots = self.state.params.matrices_mut();
        self.state.optimizer.update(&mut slots, &grad_sum)?;
        self.state.losses.push(total);
        self.state.iteration += 1;
        Ok(total)
    }

    fn validate(&mut self) -> Result<()> {
        let Some(v) = &self.validation else {
            return Ok(());
        };
        let h = self.cfg.sampler.window;
        let n = v.signals.sensors();
        let all: Vec<usize> = (0..n).collect();
        let (mut sse, mut count) = (0.0, 0usize);
        for start in (0..v.signals.steps())
            .step_by(h)
            .take_while(|s| s + h <= v.signals.steps())
        {
            let (values, observed) = v.signals.window(&all, start, h)?;
            let input = Matrix::from_fn(n, h, |i, t| {
                if v.masked_rows.binary_search(&i).is_ok() {
                    0.0
                } else {
                    values.get(i, t)
                }
            })?;
            let out = forward_with_filters(&self.state.params, &input, &v.filters)?.output;
            for &i in &v.masked_rows {
                for t in 0..h {
                    if observed.get(i, t) == 1.0 {
                        sse += (out.get(i, t) - values.get(i, t)).powi(2);
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return Ok(());
        }
        let point = ValidationPoint {
            iteration: self.state.iteration,
            rmse: (sse / count as f64).sqrt(),
        };
        self.state.validation.push(point);
        if self
            .state
            .best
            .as_ref()
            .is_none_or(|(b, _)| point.rmse < b.rmse)
        {
            self.state.best = Some((point, self.state.params.clone()));
        }
        Ok(())
    }

    /// Run until the configured iteration count, calling `on_step` after
    /// every iteration.
    pub fn run_with(
        mut self,
        mut on_step: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<TrainReport> {
        let start = Instant::now();
        while !self.is_done() {
            self.step()?;
            on_step(&self)?;
        }
        Ok(self.into_report(start.elapsed().as_secs_f64()))
    }

    pub fn run(self) -> Result<TrainReport> {
        self.run_with(|_| Ok(()))
    }

    fn into_report(self, wall_clock_secs: f64) -> TrainReport {
        let (best_iteration, params) = match self.state.best {
            Some((point, params)) => (Some(point.iteration), params),
            None => (None, self.state.params),
        };
        TrainReport {
            losses: self.state.losses,
            validation: self.state.validation,
            best_iteration,
            wall_clock_secs,
            params,
            stats: self.stats,
        }
    }
}

/// Train from scratch for `cfg.sampler.iterations` iterations.
pub fn train(
    signals: &SignalMatrix,
    adjacency: &AdjacencyMatrix,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    Trainer::new(signals, adjacency, cfg, seed)?.run()
}
