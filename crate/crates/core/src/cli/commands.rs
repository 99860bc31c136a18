use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    CliError, CommonArgs, EvalArgs, GenArgs, KrigeArgs, RunConfig, TrainArgs, VirtualArgs,
};
use crate::data::{gen_synthetic, load_csv, save_csv, split, Dataset, FieldParams};
use crate::error::{Error, Result};
use crate::kriging::output::{
    evaluation_rows, line_chart_svg, rows_csv, virtual_line_csv, EstimateRow,
};
use crate::kriging::{
    krige as krige_window, observed_complement, sliding_eval, sliding_eval_with, virtual_line,
    ConstantEstimator, Estimator, KnnEstimator, KrigingRequest, LineSpec, MetricsReport,
    OracleEstimator, Spacing,
};
use crate::textio::fmt_f64;
use crate::trainer::{read_checkpoint, write_checkpoint, Checkpoint, NormStats, Trainer};

type CliResult = std::result::Result<(), CliError>;

const RUN_CONFIG: &str = "run.toml";
const CHECKPOINT: &str = "checkpoint.txt";

fn out_dir(out: &Option<PathBuf>) -> std::result::Result<PathBuf, CliError> {
    let dir = out.clone().ok_or_else(|| {
        CliError::Usage(format!(
            "no output directory: pass --out or set {}",
            super::OUT_ENV
        ))
    })?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    crate::data::write_file(&dir.join(name), text)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// defaults, then `base` (e.g. a checkpoint's configuration), then the
/// config file, then `--set` and the dedicated flags.
fn resolve(
    common: &CommonArgs,
    base: Option<&str>,
    flags: &[(&str, Option<String>)],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(b) = base {
        cfg.merge_toml(b)?;
    }
    if let Some(path) = &common.config {
        cfg.merge_toml(&read(path)?)?;
    }
    for s in &common.set {
        cfg.set(s)?;
    }
    let quoted = |p: &PathBuf| toml::Value::String(p.display().to_string()).to_string();
    let mut all: Vec<(&str, Option<String>)> = vec![
        ("signals", common.signals.as_ref().map(quoted)),
        ("geometry", common.geometry.as_ref().map(quoted)),
        ("seed", common.seed.map(|s| s.to_string())),
        ("out_dir", common.out.as_ref().map(quoted)),
    ];
    all.extend(flags.iter().cloned());
    for (key, value) in all {
        if let Some(v) = value {
            cfg.set(&format!("{key}={v}"))?;
        }
    }
    Ok(cfg)
}

fn load_dataset(cfg: &RunConfig) -> std::result::Result<Dataset, CliError> {
    let (Some(s), Some(g)) = (&cfg.signals, &cfg.geometry) else {
        return Err(CliError::Usage(
            "dataset not given: set signals and geometry".into(),
        ));
    };
    Ok(load_csv(s, g, &cfg.csv_options())?)
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    read_checkpoint(&read(path)?)
}

#[derive(Serialize)]
struct GenRecord<'a> {
    n: usize,
    p: usize,
    seed: u64,
    noise: f64,
    field: &'a FieldParams,
}

pub(super) fn gen(a: &GenArgs) -> CliResult {
    let dir = out_dir(&a.out)?;
    let field = match &a.field {
        Some(path) => serde_json::from_str(&read(path)?).map_err(|e| Error::Format {
            what: "field parameters",
            msg: e.to_string(),
        })?,
        None => FieldParams::default(),
    };
    let ds = gen_synthetic(a.n, a.p, &field, a.noise, a.seed)?;
    save_csv(&ds, &dir.join("signals.csv"), &dir.join("geometry.csv"))?;
    let record = GenRecord {
        n: a.n,
        p: a.p,
        seed: a.seed,
        noise: a.noise,
        field: &field,
    };
    write(
        &dir,
        "gen.toml",
        &toml::to_string(&record).expect("gen record serializes"),
    )?;
    log::info!("wrote {} sensors x {} steps to {}", a.n, a.p, dir.display());
    Ok(())
}

fn losses_csv(losses: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", fmt_f64(*l)));
    }
    out
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
    best_iteration: Option<usize>,
    wall_clock_secs: f64,
    parameter_count: usize,
    norm_mean: f64,
    norm_std: f64,
    sigma: Option<f64>,
    threshold: Option<f64>,
}

pub(super) fn train(a: &TrainArgs) -> CliResult {
    let resumed = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let flags = [
        ("lr", a.lr.map(fmt_f64)),
        ("iterations", a.iterations.map(|v| v.to_string())),
        ("window", a.window.map(|v| v.to_string())),
        ("hidden", a.hidden.map(|v| v.to_string())),
        ("order", a.order.map(|v| v.to_string())),
        ("activation", a.activation.clone()),
        ("adjacency", a.adjacency.clone()),
        ("sigma", a.sigma.map(fmt_f64)),
    ];
    let cfg = resolve(
        &a.common,
        resumed.as_ref().map(|(_, meta)| meta.as_str()),
        &flags,
    )?;
    let dir = out_dir(&cfg.out_dir)?;
    write(&dir, RUN_CONFIG, &cfg.to_toml())?;
    if cfg.lr == 0.0 {
        log::warn!("learning rate is 0: parameters will not change");
    }

    let ds = load_dataset(&cfg)?;
    let sp = split(&ds, &cfg.split_spec())?;
    let built = ds.adjacency(cfg.adjacency_spec())?;
    let adjacency = built.adjacency.submatrix(&sp.observed)?;
    let tcfg = cfg.train_config(sp.observed.len());
    let meta = cfg.portable().to_toml();

    let mut trainer = match resumed {
        Some((ckpt, _)) => Trainer::resume(&sp.train, &adjacency, &tcfg, ckpt)?,
        None => Trainer::new(&sp.train, &adjacency, &tcfg, cfg.seed)?,
    };
    let save = |t: &Trainer| write(&dir, CHECKPOINT, &write_checkpoint(&t.checkpoint(), &meta));
    let started = std::time::Instant::now();
    let mut steps = 0;
    while !trainer.is_done() && a.stop_after.is_none_or(|n| steps < n) {
        trainer.step()?;
        steps += 1;
        if cfg.checkpoint_every > 0 && trainer.iteration() % cfg.checkpoint_every == 0 {
            save(&trainer)?;
        }
    }
    save(&trainer)?;

    let state = trainer.state();
    write(&dir, "losses.csv", &losses_csv(&state.losses))?;
    if !state.validation.is_empty() {
        let mut v = String::from("iteration,rmse\n");
        for p in &state.validation {
            v.push_str(&format!("{},{}\n", p.iteration, fmt_f64(p.rmse)));
        }
        write(&dir, "validation.csv", &v)?;
    }
    let stats = trainer.stats();
    let summary = TrainSummary {
        iterations: state.iteration,
        initial_loss: state.losses.first().copied(),
        final_loss: state.losses.last().copied(),
        best_iteration: state.best.as_ref().map(|(p, _)| p.iteration),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        parameter_count: state.params.parameter_count(),
        norm_mean: stats.mean,
        norm_std: stats.std,
        sigma: built.sigma,
        threshold: built.threshold,
    };
    write(
        &dir,
        "report.json",
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    log::info!(
        "{} iterations done, checkpoint in {}",
        state.iteration,
        dir.display()
    );
    Ok(())
}

fn sensor_index(ds: &Dataset, id: &str) -> Result<usize> {
    ds.sensor_ids
        .iter()
        .position(|s| s == id)
        .ok_or_else(|| Error::param(format!("unknown sensor id {id:?}")))
}

pub(super) fn krige(a: &KrigeArgs) -> CliResult {
    let (ckpt, meta) = load_checkpoint(&a.checkpoint)?;
    let cfg = resolve(&a.common, Some(&meta), &[])?;
    let dir = out_dir(&cfg.out_dir)?;
    write(&dir, RUN_CONFIG, &cfg.to_toml())?;
    let ds = load_dataset(&cfg)?;
    let params = ckpt.model_params();
    let len = a.len.unwrap_or(params.window());
    if a.start + len > ds.signals.steps() {
        return Err(Error::param(format!(
            "window [{}, {}) exceeds the {} available steps",
            a.start,
            a.start + len,
            ds.signals.steps()
        ))
        .into());
    }
    let virtual_idx: Vec<usize> = a
        .r#virtual
        .iter()
        .map(|id| sensor_index(&ds, id))
        .collect::<Result<_>>()?;
    let observed: Vec<usize> = if virtual_idx.is_empty() {
        (0..ds.sensors()).collect()
    } else {
        observed_complement(ds.sensors(), &virtual_idx)?
    };
    let order: Vec<usize> = observed.iter().chain(&virtual_idx).copied().collect();
    let adjacency = ds
        .adjacency(cfg.adjacency_spec())?
        .adjacency
        .submatrix(&order)?;
    let (values, mask) = ds.signals.window(&observed, a.start, len)?;
    let req = KrigingRequest {
        observed: values,
        observed_mask: mask,
        virtual_count: virtual_idx.len(),
        adjacency,
        window_start: a.start,
    };
    let result = krige_window(params, &req, &ckpt.stats)?;
    let mut rows = Vec::new();
    for (r, &v) in virtual_idx.iter().enumerate() {
        for (c, &est) in result.virtual_estimates[r].iter().enumerate() {
            let t = a.start + c;
            rows.push(EstimateRow {
                sensor_id: ds.sensor_ids[v].clone(),
                t,
                estimate: est,
                truth: ds.signals.is_observed(v, t).then(|| ds.signals.value(v, t)),
            });
        }
    }
    write(&dir, "estimates.csv", &rows_csv(&rows)?)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    dataset: &'a str,
    window: usize,
    test_start: usize,
    virtual_sensors: Vec<&'a str>,
    estimator: &'a str,
    model: &'a MetricsReport,
    baselines: Vec<BaselineRecord>,
}

#[derive(Serialize)]
struct BaselineRecord {
    name: String,
    report: MetricsReport,
}

fn parse_baseline(
    spec: &str,
    ds: &Dataset,
    observed: &[usize],
    virtual_idx: &[usize],
    train_mean: f64,
) -> Result<Box<dyn Estimator>> {
    if spec == "mean" {
        return Ok(Box::new(ConstantEstimator(train_mean)));
    }
    if let Some(k) = spec.strip_prefix("knn:") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::param(format!("bad neighbour count in {spec:?}")))?;
        let d = ds
            .geometry
            .distances()
            .ok_or_else(|| Error::param("the knn baseline needs distances or coordinates"))?;
        return Ok(Box::new(KnnEstimator::new(&d, observed, virtual_idx, k)));
    }
    Err(Error::param(format!(
        "unknown baseline {spec:?}; use knn:K or mean"
    )))
}

fn windows_csv(reports: &[(String, &MetricsReport)], t0: usize) -> String {
    let mut out = String::from("estimator,start,rmse,mae,mape,r2,count\n");
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for (name, report) in reports {
        for w in &report.windows {
            match &w.metrics {
                Some(m) => out.push_str(&format!(
                    "{name},{},{},{},{},{},{}\n",
                    t0 + w.start,
                    fmt_f64(m.rmse),
                    fmt_f64(m.mae),
                    opt(m.mape),
                    opt(m.r2),
                    m.count
                )),
                None => out.push_str(&format!("{name},{},,,,,0\n", t0 + w.start)),
            }
        }
    }
    out
}

/// `eval` and `transfer`: the same protocol on whatever dataset the
/// resolved configuration names.
pub(super) fn eval(a: &EvalArgs, transfer: bool) -> CliResult {
    let (ckpt, meta) = load_checkpoint(&a.checkpoint)?;
    let cfg = resolve(&a.common, Some(&meta), &[])?;
    let dir = out_dir(&cfg.out_dir)?;
    write(&dir, RUN_CONFIG, &cfg.to_toml())?;
    let ds = load_dataset(&cfg)?;
    let sp = split(&ds, &cfg.split_spec())?;
    let built = ds.adjacency(cfg.adjacency_spec())?;
    let params = ckpt.model_params();
    let h = params.window();
    if transfer {
        log::info!(
            "applying the source model to {} target sensors",
            ds.sensors()
        );
    }

    let (name, evaluation) = if a.perfect {
        (
            "perfect",
            sliding_eval_with(&OracleEstimator, &sp.test, &sp.unsampled, h)?,
        )
    } else {
        (
            "model",
            sliding_eval(
                params,
                &sp.test,
                &built.adjacency,
                &sp.unsampled,
                &ckpt.stats,
            )?,
        )
    };

    let train_mean = NormStats::fit(&sp.train)?.mean;
    let mut baselines = Vec::new();
    for spec in &a.baseline {
        let est = parse_baseline(spec, &ds, &sp.observed, &sp.unsampled, train_mean)?;
        baselines.push(BaselineRecord {
            name: spec.clone(),
            report: sliding_eval_with(est.as_ref(), &sp.test, &sp.unsampled, h)?.report,
        });
    }

    let record = EvalRecord {
        dataset: &ds.metadata.name,
        window: h,
        test_start: sp.train_steps,
        virtual_sensors: sp
            .unsampled
            .iter()
            .map(|&i| ds.sensor_ids[i].as_str())
            .collect(),
        estimator: name,
        model: &evaluation.report,
        baselines,
    };
    write(
        &dir,
        "metrics.json",
        &serde_json::to_string_pretty(&record).expect("metrics serialize"),
    )?;
    let mut all: Vec<(String, &MetricsReport)> = vec![(name.to_string(), &evaluation.report)];
    all.extend(record.baselines.iter().map(|b| (b.name.clone(), &b.report)));
    write(&dir, "windows.csv", &windows_csv(&all, sp.train_steps))?;
    write(
        &dir,
        "estimates.csv",
        &rows_csv(&evaluation_rows(
            &evaluation,
            &ds.sensor_ids,
            sp.train_steps,
        )?)?,
    )?;
    if a.svg {
        let v = sp.unsampled[0];
        let truth = evaluation.truth.row(0);
        let est = evaluation.estimates.row(0);
        let svg = line_chart_svg(
            &format!("sensor {}", ds.sensor_ids[v]),
            &[("truth", truth), (name, est)],
        );
        write(&dir, "chart.svg", &svg)?;
    }
    Ok(())
}

pub(super) fn virtual_sensors(a: &VirtualArgs) -> CliResult {
    let (ckpt, meta) = load_checkpoint(&a.checkpoint)?;
    let cfg = resolve(&a.common, Some(&meta), &[])?;
    let dir = out_dir(&cfg.out_dir)?;
    write(&dir, RUN_CONFIG, &cfg.to_toml())?;
    let ds = load_dataset(&cfg)?;
    let params = ckpt.model_params();
    let h = params.window();
    let all: Vec<usize> = (0..ds.sensors()).collect();
    if a.start + h > ds.signals.steps() {
        return Err(Error::param(format!(
            "window at {} runs past the {} available steps",
            a.start,
            ds.signals.steps()
        ))
        .into());
    }
    let (values, mask) = ds.signals.window(&all, a.start, h)?;
    let line = LineSpec {
        from: sensor_index(&ds, &a.from)?,
        to: sensor_index(&ds, &a.to)?,
        count: a.count,
        spacing: a.step.map_or(Spacing::Even, Spacing::Step),
    };
    let result = virtual_line(
        params,
        &ckpt.stats,
        &values,
        &mask,
        &ds.geometry,
        cfg.adjacency_spec(),
        &line,
    )?;
    write(&dir, "virtual.csv", &virtual_line_csv(&result, a.start))?;
    Ok(())
}
