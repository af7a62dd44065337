//! Line-oriented polynomial file.
//!
//! ```text
//! HAMILTONIAN v1 vars=<n> alpha=<a> offset=<o> R=<r>
//! LEVELS <l1> ... <ln>
//! 1 <i> <coef>
//! 2 <i> <j> <coef>
//! ```
//!
//! Terms are sorted by degree, then indices. Reals are written with 17
//! significant digits so that a re-parse reproduces the exact `f64`. Lines
//! starting with `#` carry free-form metadata and are ignored by the parser.

use std::io::{self, Write};

use thiserror::Error;

use super::Hamiltonian;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Contents of a polynomial file, independent of how the Hamiltonian was built.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFile {
    pub vars: usize,
    pub alpha: f64,
    pub offset: f64,
    pub sum_constraint: Option<f64>,
    pub levels: Vec<u64>,
    pub linear: Vec<(usize, f64)>,
    pub quadratic: Vec<(usize, usize, f64)>,
}

impl Hamiltonian {
    pub fn to_polynomial(&self) -> PolynomialFile {
        PolynomialFile {
            vars: self.variables().len(),
            alpha: self.alpha(),
            offset: self.offset(),
            sum_constraint: self.sum_constraint(),
            levels: self.variables().iter().map(|v| v.levels).collect(),
            linear: self.linear().iter().map(|(&i, &c)| (i, c)).collect(),
            quadratic: self.quadratic().iter().map(|(&(i, j), &c)| (i, j, c)).collect(),
        }
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn export_hamiltonian<W: Write>(h: &Hamiltonian, dest: &mut W) -> io::Result<()> {
    export_hamiltonian_with_notes(h, &[], dest)
}

/// Like [`export_hamiltonian`], with `# key=value` lines after the header.
pub fn export_hamiltonian_with_notes<W: Write>(
    h: &Hamiltonian,
    notes: &[(&str, &str)],
    dest: &mut W,
) -> io::Result<()> {
    let poly = h.to_polynomial();
    let r = poly.sum_constraint.map_or_else(|| "none".to_string(), real);
    writeln!(
        dest,
        "HAMILTONIAN v1 vars={} alpha={} offset={} R={r}",
        poly.vars,
        real(poly.alpha),
        real(poly.offset)
    )?;
    write!(dest, "LEVELS")?;
    for l in &poly.levels {
        write!(dest, " {l}")?;
    }
    writeln!(dest)?;
    for (key, value) in notes {
        writeln!(dest, "# {key}={value}")?;
    }
    for (i, c) in &poly.linear {
        writeln!(dest, "1 {i} {}", real(*c))?;
    }
    for (i, j, c) in &poly.quadratic {
        writeln!(dest, "2 {i} {j} {}", real(*c))?;
    }
    Ok(())
}

pub fn parse_polynomial(text: &str) -> Result<PolynomialFile, FileError> {
    let err = |line: usize, message: String| FileError::Parse { line, message };
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));

    let (n, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("HAMILTONIAN") || fields.next() != Some("v1") {
        return Err(err(n, "expected `HAMILTONIAN v1` header".into()));
    }
    let (mut vars, mut alpha, mut offset, mut sum_constraint) = (None, None, None, None);
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(n, format!("malformed header field `{field}`")))?;
        let bad = |_| err(n, format!("bad value for {key}: `{value}`"));
        match key {
            "vars" => vars = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "alpha" => alpha = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "offset" => offset = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "R" => {
                sum_constraint = Some(if value == "none" {
                    None
                } else {
                    Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?)
                })
            }
            _ => return Err(err(n, format!("unknown header field `{key}`"))),
        }
    }
    let missing = |what: &str| err(n, format!("header lacks {what}"));
    let vars = vars.ok_or_else(|| missing("vars"))?;
    let alpha = alpha.ok_or_else(|| missing("alpha"))?;
    let offset = offset.ok_or_else(|| missing("offset"))?;
    let sum_constraint = sum_constraint.ok_or_else(|| missing("R"))?;

    let (n, level_line) = lines.next().ok_or_else(|| err(2, "missing LEVELS line".into()))?;
    let mut fields = level_line.split_whitespace();
    if fields.next() != Some("LEVELS") {
        return Err(err(n, "expected LEVELS".into()));
    }
    let levels = fields
        .map(|f| f.parse::<u64>().map_err(|e| err(n, e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if levels.len() != vars {
        return Err(err(n, format!("{} levels for {vars} variables", levels.len())));
    }

    let index = |n: usize, s: &str| -> Result<usize, FileError> {
        let i: usize = s.parse().map_err(|_| err(n, format!("bad index `{s}`")))?;
        if i >= vars {
            return Err(err(n, format!("index {i} out of range")));
        }
        Ok(i)
    };
    let coef = |n: usize, s: &str| -> Result<f64, FileError> {
        s.parse().map_err(|_| err(n, format!("bad coefficient `{s}`")))
    };

    let mut linear = Vec::new();
    let mut quadratic = Vec::new();
    for (n, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["1", i, c] => linear.push((index(n, i)?, coef(n, c)?)),
            ["2", i, j, c] => {
                let (i, j) = (index(n, i)?, index(n, j)?);
                if i > j {
                    return Err(err(n, "quadratic term must have i <= j".into()));
                }
                quadratic.push((i, j, coef(n, c)?));
            }
            _ => return Err(err(n, format!("unsupported term line `{line}`"))),
        }
    }

    Ok(PolynomialFile {
        vars,
        alpha,
        offset,
        sum_constraint,
        levels,
        linear,
        quadratic,
    })
}
