//! Line-oriented text container shared by parameter and checkpoint files.
//!
//! Floats are written in shortest round-trip exponent form so a write/read
//! cycle reproduces every bit.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

pub(crate) struct TextWriter {
    buf: String,
}

impl TextWriter {
    pub fn new() -> Self {
        Self { buf: String::new() }
    }

    pub fn line(&mut self, s: impl AsRef<str>) {
        self.buf.push_str(s.as_ref());
        self.buf.push('\n');
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.buf, "{key} {value}");
    }

    pub fn kv_f64(&mut self, key: &str, value: f64) {
        self.kv(key, fmt_f64(value));
    }

    /// Header line `tag rows cols` followed by one line per row.
    pub fn matrix(&mut self, tag: &str, m: &Matrix) {
        let _ = writeln!(self.buf, "{tag} {} {}", m.rows(), m.cols());
        for i in 0..m.rows() {
            let row: Vec<String> = m.row(i).iter().map(|&x| fmt_f64(x)).collect();
            self.line(row.join(" "));
        }
    }

    pub fn floats(&mut self, key: &str, xs: &[f64]) {
        let _ = write!(self.buf, "{key} {}", xs.len());
        for &x in xs {
            let _ = write!(self.buf, " {}", fmt_f64(x));
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub(crate) struct TextReader<'a> {
    what: &'static str,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> TextReader<'a> {
    pub fn new(what: &'static str, text: &'a str) -> Self {
        Self {
            what,
            lines: text.lines().enumerate().peekable(),
        }
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            msg: msg.into(),
        }
    }

    pub fn next_line(&mut self) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, l)) => Ok((i + 1, l)),
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Next line must be `key rest`; returns `rest`.
    pub fn expect(&mut self, key: &str) -> Result<&'a str> {
        let (no, line) = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if line == key => Ok(""),
            _ => Err(self.err(format!("line {no}: expected `{key}`, found `{line}`"))),
        }
    }

    pub fn expect_parse<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.expect(key)?;
        raw.trim()
            .parse()
            .map_err(|_| self.err(format!("bad value for `{key}`: `{raw}`")))
    }

    pub fn parse_tokens<T: FromStr>(&self, s: &str) -> Result<Vec<T>> {
        s.split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(format!("bad token `{t}`"))))
            .collect()
    }

    pub fn matrix(&mut self, tag: &str) -> Result<(Vec<String>, Matrix)> {
        let header = self.expect(tag)?;
        let mut fields: Vec<String> = header.split_whitespace().map(str::to_owned).collect();
        if fields.len() < 2 {
            return Err(self.err(format!("`{tag}` header needs rows and cols")));
        }
        let cols: usize = fields
            .pop()
            .unwrap()
            .parse()
            .map_err(|_| self.err("bad cols"))?;
        let rows: usize = fields
            .pop()
            .unwrap()
            .parse()
            .map_err(|_| self.err("bad rows"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (no, line) = self.next_line()?;
            let row: Vec<f64> = self.parse_tokens(line)?;
            if row.len() != cols {
                return Err(self.err(format!("line {no}: expected {cols} values")));
            }
            data.extend(row);
        }
        let m = Matrix::from_vec(rows, cols, data).map_err(|e| self.err(e.to_string()))?;
        Ok((fields, m))
    }

    pub fn floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let raw = self.expect(key)?;
        let mut toks = raw.split_whitespace();
        let n: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err(format!("`{key}` needs a length")))?;
        let xs: Vec<f64> = toks
            .map(|t| t.parse().map_err(|_| self.err(format!("bad float `{t}`"))))
            .collect::<Result<_>>()?;
        if xs.len() != n {
            return Err(self.err(format!("`{key}` declares {n} values, has {}", xs.len())));
        }
        Ok(xs)
    }
}
