//! Line-oriented text format for instances.
//!
//! ```text
//! milp <n> <m>
//! obj <c_0> ... <c_{n-1}>
//! row <nnz> <col>:<val> ... <rhs>        (m lines)
//! bounds <l_0> <u_0> ... <l_{n-1}> <u_{n-1}>
//! int <0|1> ...
//! ```
//!
//! Floats are written with 17 significant digits; infinite bounds as `inf`/`-inf`.

use std::fmt::Write as _;

use thiserror::Error;

use super::{MilpError, MilpInstance};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Instance(#[from] MilpError),
}

fn fmt_f64(out: &mut String, v: f64) {
    if v == f64::INFINITY {
        out.push_str("inf");
    } else if v == f64::NEG_INFINITY {
        out.push_str("-inf");
    } else {
        write!(out, "{v:.16e}").unwrap();
    }
}

pub fn write_instance(inst: &MilpInstance) -> String {
    let n = inst.num_vars();
    let m = inst.num_rows();
    let mut out = String::new();
    writeln!(out, "milp {n} {m}").unwrap();
    out.push_str("obj");
    for &c in inst.objective() {
        out.push(' ');
        fmt_f64(&mut out, c);
    }
    out.push('\n');
    let mat = inst.matrix();
    for i in 0..m {
        let (cols, vals) = mat.row(i);
        write!(out, "row {}", cols.len()).unwrap();
        for (&c, &v) in cols.iter().zip(vals) {
            write!(out, " {c}:").unwrap();
            fmt_f64(&mut out, v);
        }
        out.push(' ');
        fmt_f64(&mut out, mat.rhs()[i]);
        out.push('\n');
    }
    out.push_str("bounds");
    for j in 0..n {
        out.push(' ');
        fmt_f64(&mut out, inst.lower()[j]);
        out.push(' ');
        fmt_f64(&mut out, inst.upper()[j]);
    }
    out.push_str("\nint");
    for &b in inst.integrality() {
        out.push_str(if b { " 1" } else { " 0" });
    }
    out.push('\n');
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self, keyword: &str) -> Result<Vec<&'a str>, ParseError> {
        loop {
            let Some((i, raw)) = self.inner.next() else {
                return Err(ParseError::Syntax {
                    line: self.line + 1,
                    msg: format!("unexpected end of input, expected `{keyword}`"),
                });
            };
            self.line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut toks: Vec<&str> = raw.split_whitespace().collect();
            if toks[0] != keyword {
                return Err(self.err(format!("expected `{keyword}`, found `{}`", toks[0])));
            }
            toks.remove(0);
            return Ok(toks);
        }
    }

    fn err(&self, msg: String) -> ParseError {
        ParseError::Syntax { line: self.line, msg }
    }

    fn float(&self, tok: &str) -> Result<f64, ParseError> {
        let v: f64 = tok
            .parse()
            .map_err(|_| self.err(format!("bad number `{tok}`")))?;
        if v.is_nan() {
            return Err(self.err("NaN is not allowed".into()));
        }
        Ok(v)
    }

    fn usize(&self, tok: &str) -> Result<usize, ParseError> {
        tok.parse()
            .map_err(|_| self.err(format!("bad integer `{tok}`")))
    }
}

pub fn read_instance(text: &str) -> Result<MilpInstance, ParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next_tokens("milp")?;
    if header.len() != 2 {
        return Err(lines.err("header must be `milp n m`".into()));
    }
    let n = lines.usize(header[0])?;
    let m = lines.usize(header[1])?;

    let obj = lines.next_tokens("obj")?;
    if obj.len() != n {
        return Err(lines.err(format!("expected {n} objective coefficients, got {}", obj.len())));
    }
    let objective = obj
        .iter()
        .map(|t| lines.float(t))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        let toks = lines.next_tokens("row")?;
        if toks.is_empty() {
            return Err(lines.err("empty row".into()));
        }
        let nnz = lines.usize(toks[0])?;
        if toks.len() != nnz + 2 {
            return Err(lines.err(format!("row declares {nnz} entries, found {}", toks.len() as isize - 2)));
        }
        let mut row = Vec::with_capacity(nnz);
        for t in &toks[1..=nnz] {
            let (c, v) = t
                .split_once(':')
                .ok_or_else(|| lines.err(format!("bad entry `{t}`")))?;
            row.push((lines.usize(c)?, lines.float(v)?));
        }
        rows.push(row);
        rhs.push(lines.float(toks[nnz + 1])?);
    }

    let bounds = lines.next_tokens("bounds")?;
    if bounds.len() != 2 * n {
        return Err(lines.err(format!("expected {} bound values, got {}", 2 * n, bounds.len())));
    }
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for pair in bounds.chunks(2) {
        lower.push(lines.float(pair[0])?);
        upper.push(lines.float(pair[1])?);
    }

    let ints = lines.next_tokens("int")?;
    if ints.len() != n {
        return Err(lines.err(format!("expected {n} integrality flags, got {}", ints.len())));
    }
    let integrality = ints
        .iter()
        .map(|t| match *t {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(lines.err(format!("bad integrality flag `{t}`"))),
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(MilpInstance::new(objective, rows, rhs, lower, upper, integrality)?)
}
