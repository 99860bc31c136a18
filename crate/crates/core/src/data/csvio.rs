//! CSV ingestion and export.
//!
//! Signals: header `sensor_id,t0,t1,...`, one row per sensor; an empty cell
//! (or the configured sentinel) marks a missing reading.
//!
//! Geometry, chosen by header:
//! - `sensor_id,x,y` planar coordinates
//! - `sensor_id,lon,lat` geographic coordinates in degrees
//! - `sensor_id,<id>,<id>,...` a full distance matrix
//! - `i,j` an undirected neighbor list of sensor ids
//!
//! Leading `# key: value` lines are metadata comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::DistanceMatrix;
use crate::numerics::Matrix;
use crate::sampler::SignalMatrix;

use super::{CoordinateKind, Dataset, Geometry, Metadata};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CsvOptions {
    /// Numeric value that also denotes a missing reading.
    pub missing_sentinel: Option<f64>,
}

fn ingest(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        line: line as usize,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn leading_comments(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map_while(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect()
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

type Records = (Vec<String>, Vec<(u64, Vec<String>)>);

fn records(path: &Path, text: &str) -> Result<Records> {
    let mut rdr = reader(text);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| ingest(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(ingest(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok((header, rows))
}

fn parse_num(path: &Path, line: u64, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| ingest(path, line, format!("non-numeric cell {cell:?}")))?;
    if !v.is_finite() {
        return Err(ingest(path, line, format!("non-finite cell {cell:?}")));
    }
    Ok(v)
}

pub fn load_csv(signal_path: &Path, geometry_path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let text = read_text(signal_path)?;
    let comments = leading_comments(&text);
    let (header, rows) = records(signal_path, &text)?;
    if header.len() < 2 || header[0] != "sensor_id" {
        return Err(ingest(
            signal_path,
            1,
            "header must be `sensor_id,t0,t1,...`",
        ));
    }
    if rows.is_empty() {
        return Err(ingest(signal_path, 1, "no sensor rows"));
    }
    let p = header.len() - 1;
    let mut ids = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * p);
    let mut observed = Vec::with_capacity(rows.len() * p);
    for (line, row) in &rows {
        ids.push(row[0].clone());
        for cell in &row[1..] {
            if cell.is_empty() {
                values.push(0.0);
                observed.push(false);
                continue;
            }
            let v = parse_num(signal_path, *line, cell)?;
            let missing = opts.missing_sentinel == Some(v);
            values.push(if missing { 0.0 } else { v });
            observed.push(!missing);
        }
    }
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if index.len() != ids.len() {
        return Err(ingest(signal_path, 1, "duplicate sensor ids"));
    }
    let signals = SignalMatrix::new(ids.len(), p, values, observed)?;
    let geometry = load_geometry(geometry_path, &index)?;

    let mut metadata = Metadata::default();
    for (k, v) in comments {
        if k == "name" {
            metadata.name = v;
        } else {
            metadata.extra.push((k, v));
        }
    }
    Dataset::new(ids, signals, geometry, metadata)
}

fn load_geometry(path: &Path, index: &HashMap<&str, usize>) -> Result<Geometry> {
    let text = read_text(path)?;
    let (header, rows) = records(path, &text)?;
    let n = index.len();
    let lookup = |line: u64, id: &str| -> Result<usize> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| ingest(path, line, format!("unknown sensor id {id:?}")))
    };
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    match h.as_slice() {
        ["i", "j"] => {
            let mut pairs = Vec::with_capacity(rows.len());
            for (line, row) in &rows {
                pairs.push((lookup(*line, &row[0])?, lookup(*line, &row[1])?));
            }
            Ok(Geometry::Neighbors(pairs))
        }
        ["sensor_id", a, b] if matches!((*a, *b), ("x", "y") | ("lon", "lat")) => {
            let kind = if *a == "x" {
                CoordinateKind::Planar
            } else {
                CoordinateKind::LonLat
            };
            let mut points = vec![None; n];
            for (line, row) in &rows {
                let i = lookup(*line, &row[0])?;
                if points[i].is_some() {
                    return Err(ingest(
                        path,
                        *line,
                        format!("duplicate sensor {:?}", row[0]),
                    ));
                }
                points[i] = Some((
                    parse_num(path, *line, &row[1])?,
                    parse_num(path, *line, &row[2])?,
                ));
            }
            let points = points
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| {
                    ingest(
                        path,
                        1,
                        format!("expected {n} sensors, found {}", rows.len()),
                    )
                })?;
            Ok(Geometry::Coordinates { kind, points })
        }
        ["sensor_id", cols @ ..] => {
            if cols.len() != n || rows.len() != n {
                return Err(ingest(
                    path,
                    1,
                    format!(
                        "distance matrix must be {n}x{n}, found {}x{}",
                        rows.len(),
                        cols.len()
                    ),
                ));
            }
            let col_idx: Vec<usize> = cols.iter().map(|c| lookup(1, c)).collect::<Result<_>>()?;
            let mut data = vec![f64::NAN; n * n];
            for (line, row) in &rows {
                let i = lookup(*line, &row[0])?;
                for (c, cell) in row[1..].iter().enumerate() {
                    let d = parse_num(path, *line, cell)?;
                    if d < 0.0 {
                        return Err(ingest(path, *line, format!("negative distance {d}")));
                    }
                    data[i * n + col_idx[c]] = d;
                }
            }
            let m = Matrix::from_vec(n, n, data)
                .map_err(|_| ingest(path, 1, "distance matrix has duplicate rows or columns"))?;
            let d = DistanceMatrix::new(m).map_err(|e| ingest(path, 1, e.to_string()))?;
            Ok(Geometry::Distances(d))
        }
        _ => Err(ingest(
            path,
            1,
            format!("unrecognized geometry header {header:?}"),
        )),
    }
}

fn fmt_value(v: f64) -> String {
    // Display prints the shortest decimal that parses back to the same bits.
    format!("{v}")
}

pub fn save_csv(ds: &Dataset, signal_path: &Path, geometry_path: &Path) -> Result<()> {
    let mut out = String::new();
    if !ds.metadata.name.is_empty() {
        let _ = writeln!(out, "# name: {}", ds.metadata.name);
    }
    for (k, v) in &ds.metadata.extra {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str("sensor_id");
    for t in 0..ds.signals.steps() {
        let _ = write!(out, ",t{t}");
    }
    out.push('\n');
    for (i, id) in ds.sensor_ids.iter().enumerate() {
        out.push_str(id);
        for t in 0..ds.signals.steps() {
            out.push(',');
            if ds.signals.is_observed(i, t) {
                out.push_str(&fmt_value(ds.signals.value(i, t)));
            }
        }
        out.push('\n');
    }
    write_file(signal_path, &out)?;

    let mut g = String::new();
    match &ds.geometry {
        Geometry::Coordinates { kind, points } => {
            g.push_str(match kind {
                CoordinateKind::Planar => "sensor_id,x,y\n",
                CoordinateKind::LonLat => "sensor_id,lon,lat\n",
            });
            for (id, (a, b)) in ds.sensor_ids.iter().zip(points) {
                let _ = writeln!(g, "{id},{},{}", fmt_value(*a), fmt_value(*b));
            }
        }
        Geometry::Distances(d) => {
            let _ = writeln!(g, "sensor_id,{}", ds.sensor_ids.join(","));
            for (i, id) in ds.sensor_ids.iter().enumerate() {
                g.push_str(id);
                for j in 0..d.len() {
                    let _ = write!(g, ",{}", fmt_value(d.get(i, j)));
                }
                g.push('\n');
            }
        }
        Geometry::Neighbors(pairs) => {
            g.push_str("i,j\n");
            for &(i, j) in pairs {
                let _ = writeln!(g, "{},{}", ds.sensor_ids[i], ds.sensor_ids[j]);
            }
        }
    }
    write_file(geometry_path, &g)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(PathBuf::from(path), e))
}
