//! Line-oriented text formats for instances, solutions, and fractional points.
//!
//! Instance files:
//! ```text
//! ppack <m> <n>
//! rhs <B_1> ... <B_m>
//! w <c_1> ... <c_n>
//! row <j> <idx_1> ... <idx_k>     (m lines, 0-based sorted indices)
//! ```
//! Solutions are `sol <n>` followed by one line of n space-separated 0/1.
//! Fractional sidecars are `frac <n>` followed by one line of n decimals.
//! Floats are written in decimal with up to 12 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::instance::{FractionalPoint, ModelError, PackingInstance};

#[derive(Debug, Error)]
pub enum FileFormatError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model error: {0}")]
    Model(#[from] ModelError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> FileFormatError {
    FileFormatError::Parse { line, msg: msg.into() }
}

/// Format a float in decimal with at most 12 significant digits.
///
/// Uses the shortest round-trip representation when it already fits in 12
/// significant digits, otherwise scientific notation with 12.
pub fn fmt_f64(x: f64) -> String {
    let shortest = format!("{x}");
    let digits = shortest
        .chars()
        .take_while(|&c| c != 'e' && c != 'E')
        .filter(|c| c.is_ascii_digit())
        .collect::<String>();
    let significant = digits.trim_start_matches('0').len();
    if significant <= 12 {
        shortest
    } else {
        format!("{x:.11e}")
    }
}

fn parse_f64(line: usize, tok: &str) -> Result<f64, FileFormatError> {
    tok.parse::<f64>()
        .map_err(|e| parse_err(line, format!("bad float {tok:?}: {e}")))
}

fn parse_usize(line: usize, tok: &str) -> Result<usize, FileFormatError> {
    tok.parse::<usize>()
        .map_err(|e| parse_err(line, format!("bad integer {tok:?}: {e}")))
}

/// Serialize an instance to the text format.
pub fn write_instance_string(inst: &PackingInstance) -> String {
    let mut out = String::new();
    writeln!(out, "ppack {} {}", inst.n_rows(), inst.n_vars()).unwrap();
    out.push_str("rhs");
    for &b in inst.rhs() {
        out.push(' ');
        out.push_str(&fmt_f64(b));
    }
    out.push('\n');
    out.push('w');
    for &c in inst.weights() {
        out.push(' ');
        out.push_str(&fmt_f64(c));
    }
    out.push('\n');
    for (j, row) in inst.rows().iter().enumerate() {
        write!(out, "row {j}").unwrap();
        for &i in row {
            write!(out, " {i}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parse an instance from the text format. Rows may be degenerate
/// (generator families produce empty and singleton rows).
pub fn parse_instance_string(text: &str) -> Result<PackingInstance, FileFormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty instance file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("ppack") {
        return Err(parse_err(hline, "expected header `ppack <m> <n>`"));
    }
    let m = parse_usize(hline, toks.next().ok_or_else(|| parse_err(hline, "missing m"))?)?;
    let n = parse_usize(hline, toks.next().ok_or_else(|| parse_err(hline, "missing n"))?)?;

    let (rline, rhs_line) = lines
        .next()
        .ok_or_else(|| parse_err(hline, "missing rhs line"))?;
    let mut toks = rhs_line.split_whitespace();
    if toks.next() != Some("rhs") {
        return Err(parse_err(rline, "expected `rhs ...`"));
    }
    let rhs: Vec<f64> = toks
        .map(|t| parse_f64(rline, t))
        .collect::<Result<_, _>>()?;
    if rhs.len() != m {
        return Err(parse_err(rline, format!("expected {m} rhs values, got {}", rhs.len())));
    }

    let (wline, w_line) = lines
        .next()
        .ok_or_else(|| parse_err(rline, "missing weights line"))?;
    let mut toks = w_line.split_whitespace();
    if toks.next() != Some("w") {
        return Err(parse_err(wline, "expected `w ...`"));
    }
    let weights: Vec<f64> = toks
        .map(|t| parse_f64(wline, t))
        .collect::<Result<_, _>>()?;
    if weights.len() != n {
        return Err(parse_err(wline, format!("expected {n} weights, got {}", weights.len())));
    }

    let mut rows = vec![Vec::new(); m];
    let mut seen = vec![false; m];
    for (lno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        if toks.next() != Some("row") {
            return Err(parse_err(lno, format!("expected `row <j> ...`, got {line:?}")));
        }
        let j = parse_usize(lno, toks.next().ok_or_else(|| parse_err(lno, "missing row index"))?)?;
        if j >= m {
            return Err(parse_err(lno, format!("row index {j} out of range (m = {m})")));
        }
        if seen[j] {
            return Err(parse_err(lno, format!("duplicate row {j}")));
        }
        seen[j] = true;
        rows[j] = toks
            .map(|t| parse_usize(lno, t))
            .collect::<Result<_, _>>()?;
    }
    if let Some(j) = seen.iter().position(|&s| !s) {
        return Err(parse_err(0, format!("missing row {j}")));
    }
    Ok(PackingInstance::new_lenient(rows, n, rhs, weights)?)
}

pub fn write_instance(path: &Path, inst: &PackingInstance) -> Result<(), FileFormatError> {
    Ok(fs::write(path, write_instance_string(inst))?)
}

pub fn read_instance(path: &Path) -> Result<PackingInstance, FileFormatError> {
    parse_instance_string(&fs::read_to_string(path)?)
}

/// Serialize a 0-1 solution.
pub fn write_solution_string(solution: &[u8]) -> String {
    let mut out = format!("sol {}\n", solution.len());
    let body: Vec<String> = solution.iter().map(|s| s.to_string()).collect();
    out.push_str(&body.join(" "));
    out.push('\n');
    out
}

pub fn parse_solution_string(text: &str) -> Result<Vec<u8>, FileFormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty solution file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("sol") {
        return Err(parse_err(hline, "expected header `sol <n>`"));
    }
    let n = parse_usize(hline, toks.next().ok_or_else(|| parse_err(hline, "missing n"))?)?;
    let (bline, body) = lines
        .next()
        .ok_or_else(|| parse_err(hline, "missing solution values"))?;
    let values: Vec<u8> = body
        .split_whitespace()
        .map(|t| match t {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(parse_err(bline, format!("solution entries must be 0/1, got {other:?}"))),
        })
        .collect::<Result<_, _>>()?;
    if values.len() != n {
        return Err(parse_err(bline, format!("expected {n} entries, got {}", values.len())));
    }
    Ok(values)
}

/// Serialize a fractional point (`.frac` sidecar format).
pub fn write_frac_string(point: &FractionalPoint) -> String {
    let mut out = format!("frac {}\n", point.len());
    let body: Vec<String> = point.values().iter().map(|&v| fmt_f64(v)).collect();
    out.push_str(&body.join(" "));
    out.push('\n');
    out
}

pub fn parse_frac_string(text: &str) -> Result<FractionalPoint, FileFormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty frac file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("frac") {
        return Err(parse_err(hline, "expected header `frac <n>`"));
    }
    let n = parse_usize(hline, toks.next().ok_or_else(|| parse_err(hline, "missing n"))?)?;
    let (bline, body) = lines
        .next()
        .ok_or_else(|| parse_err(hline, "missing point values"))?;
    let values: Vec<f64> = body
        .split_whitespace()
        .map(|t| parse_f64(bline, t))
        .collect::<Result<_, _>>()?;
    if values.len() != n {
        return Err(parse_err(bline, format!("expected {n} values, got {}", values.len())));
    }
    Ok(FractionalPoint::new(values)?)
}

pub fn write_frac(path: &Path, point: &FractionalPoint) -> Result<(), FileFormatError> {
    Ok(fs::write(path, write_frac_string(point))?)
}

pub fn read_frac(path: &Path) -> Result<FractionalPoint, FileFormatError> {
    parse_frac_string(&fs::read_to_string(path)?)
}

pub fn write_solution(path: &Path, solution: &[u8]) -> Result<(), FileFormatError> {
    Ok(fs::write(path, write_solution_string(solution))?)
}

pub fn read_solution(path: &Path) -> Result<Vec<u8>, FileFormatError> {
    parse_solution_string(&fs::read_to_string(path)?)
}
