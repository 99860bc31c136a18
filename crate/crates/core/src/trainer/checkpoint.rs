//! Text checkpoints: parameters, optimizer moments, RNG position, loss
//! history and the best validation snapshot. Reading a checkpoint and
//! continuing reproduces an uninterrupted run bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{NormStats, Optimizer, OptimizerConfig, TrainState, ValidationPoint};
use crate::error::Result;
use crate::model::io::{read_from as read_params_from, write_into as write_params_into};
use crate::model::ModelParams;
use crate::textio::{fmt_f64, TextReader, TextWriter};

const MAGIC: &str = "gnnkrige-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stats: NormStats,
    pub state: TrainState,
}

impl Checkpoint {
    /// The parameters a finished run would report: the best validation
    /// snapshot if there is one, else the latest parameters.
    pub fn model_params(&self) -> &ModelParams {
        match &self.state.best {
            Some((_, params)) => params,
            None => &self.state.params,
        }
    }
}

/// Serialize `ckpt`. `meta` is an opaque block (e.g. the run configuration)
/// stored verbatim and returned by [`read_checkpoint`].
pub fn write_checkpoint(ckpt: &Checkpoint, meta: &str) -> String {
    let s = &ckpt.state;
    let mut w = TextWriter::new();
    w.kv(MAGIC, VERSION);
    let meta_lines: Vec<&str> = meta.lines().collect();
    w.kv("meta", meta_lines.len());
    for l in meta_lines {
        w.line(l);
    }
    w.kv("seed", s.seed);
    w.kv("iteration", s.iteration);
    w.kv_f64("norm_mean", ckpt.stats.mean);
    w.kv_f64("norm_std", ckpt.stats.std);
    write_params_into(&mut w, &s.params);

    let oc = s.optimizer.config;
    w.kv("optimizer", oc.kind.name());
    w.kv_f64("lr", oc.lr);
    w.kv_f64("beta1", oc.beta1);
    w.kv_f64("beta2", oc.beta2);
    w.kv_f64("eps", oc.eps);
    w.kv("step", s.optimizer.step);
    w.kv("moments", s.optimizer.moment1.len());
    for (m1, m2) in s.optimizer.moment1.iter().zip(&s.optimizer.moment2) {
        w.matrix("moment1", m1);
        w.matrix("moment2", m2);
    }

    let seed_hex: String = s
        .rng
        .get_seed()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    w.kv("rng_seed", seed_hex);
    w.kv("rng_stream", s.rng.get_stream());
    w.kv("rng_word_pos", s.rng.get_word_pos());

    w.floats("losses", &s.losses);
    let flat: Vec<String> = s
        .validation
        .iter()
        .map(|p| format!("{}:{}", p.iteration, fmt_f64(p.rmse)))
        .collect();
    w.kv(
        "validation",
        format!("{} {}", flat.len(), flat.join(" ")).trim_end(),
    );
    match &s.best {
        Some((point, params)) => {
            w.kv(
                "best",
                format!("{} {}", point.iteration, fmt_f64(point.rmse)),
            );
            write_params_into(&mut w, params);
        }
        None => w.kv("best", "none"),
    }
    w.line("end");
    w.finish()
}

pub fn read_checkpoint(text: &str) -> Result<(Checkpoint, String)> {
    let mut r = TextReader::new("checkpoint", text);
    let version: u32 = r.expect_parse(MAGIC)?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let meta_len: usize = r.expect_parse("meta")?;
    let mut meta = String::new();
    for _ in 0..meta_len {
        meta.push_str(r.next_line()?.1);
        meta.push('\n');
    }
    let seed: u64 = r.expect_parse("seed")?;
    let iteration: usize = r.expect_parse("iteration")?;
    let stats = NormStats::new(r.expect_parse("norm_mean")?, r.expect_parse("norm_std")?)?;
    let params = read_params_from(&mut r)?;

    let config = OptimizerConfig {
        kind: r.expect_parse("optimizer")?,
        lr: r.expect_parse("lr")?,
        beta1: r.expect_parse("beta1")?,
        beta2: r.expect_parse("beta2")?,
        eps: r.expect_parse("eps")?,
    };
    let step: u64 = r.expect_parse("step")?;
    let n_moments: usize = r.expect_parse("moments")?;
    let (mut moment1, mut moment2) = (Vec::new(), Vec::new());
    for _ in 0..n_moments {
        moment1.push(r.matrix("moment1")?.1);
        moment2.push(r.matrix("moment2")?.1);
    }

    let seed_hex = r.expect("rng_seed")?;
    if seed_hex.len() != 64 {
        return Err(r.err("rng_seed must be 64 hex digits"));
    }
    let mut rng_seed = [0u8; 32];
    for (i, b) in rng_seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
            .map_err(|_| r.err("bad rng_seed"))?;
    }
    let mut rng = ChaCha20Rng::from_seed(rng_seed);
    rng.set_stream(r.expect_parse("rng_stream")?);
    rng.set_word_pos(r.expect_parse("rng_word_pos")?);

    let losses = r.floats("losses")?;
    let raw = r.expect("validation")?;
    let mut toks = raw.split_whitespace();
    let n_val: usize = toks
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| r.err("bad validation"))?;
    let mut validation = Vec::with_capacity(n_val);
    for tok in toks {
        let (it, rmse) = tok
            .split_once(':')
            .ok_or_else(|| r.err("bad validation entry"))?;
        validation.push(ValidationPoint {
            iteration: it.parse().map_err(|_| r.err("bad validation iteration"))?,
            rmse: rmse.parse().map_err(|_| r.err("bad validation rmse"))?,
        });
    }
    if validation.len() != n_val {
        return Err(r.err("validation count mismatch"));
    }
    let best_raw = r.expect("best")?;
    let best = if best_raw == "none" {
        None
    } else {
        let (it, rmse) = best_raw
            .split_once(' ')
            .ok_or_else(|| r.err("bad best entry"))?;
        let point = ValidationPoint {
            iteration: it.parse().map_err(|_| r.err("bad best iteration"))?,
            rmse: rmse.parse().map_err(|_| r.err("bad best rmse"))?,
        };
        Some((point, read_params_from(&mut r)?))
    };
    r.expect("end")?;

    let state = TrainState {
        seed,
        iteration,
        params,
        optimizer: Optimizer {
            config,
            step,
            moment1,
            moment2,
        },
        rng,
        losses,
        validation,
        best,
    };
    Ok((Checkpoint { stats, state }, meta))
}
