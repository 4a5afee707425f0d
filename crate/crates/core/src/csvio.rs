//! Minimal line-oriented comma-separated helpers shared by the file codecs.
//! None of the formats quote fields, so a line is split on every comma.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Reads the header line and verifies it matches `expected` exactly.
pub(crate) fn expect_header<R: BufRead>(reader: &mut R, expected: &str) -> Result<()> {
    let mut header = String::new();
    if reader.read_line(&mut header)? == 0 {
        return Err(Error::parse(1, "header", "missing header line"));
    }
    let header = header.trim_end_matches(['\n', '\r']);
    if header != expected {
        return Err(Error::parse(
            1,
            "header",
            format!("expected `{expected}`, found `{header}`"),
        ));
    }
    Ok(())
}

/// Iterates the data lines after the header, yielding 1-based line numbers.
/// Blank trailing lines are skipped.
pub(crate) fn for_each_row<R, F>(reader: R, width: Option<usize>, mut f: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(usize, &[&str]) -> Result<()>,
{
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if let Some(width) = width {
            if fields.len() != width {
                return Err(Error::parse(
                    line_no,
                    "line",
                    format!("expected {width} fields, found {}", fields.len()),
                ));
            }
        }
        f(line_no, &fields)?;
    }
    Ok(())
}

pub(crate) fn parse_num<T: std::str::FromStr>(line: usize, field: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::parse(line, field, format!("`{raw}`: {e}")))
}

pub(crate) fn parse_flag(line: usize, field: &str, raw: &str) -> Result<bool> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(line, field, format!("expected 0|1, found `{other}`"))),
    }
}

pub(crate) fn flag(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

/// Nine significant digits.
pub(crate) fn write_real9<W: Write>(out: &mut W, x: f64) -> std::io::Result<()> {
    write!(out, "{x:.8e}")
}

/// Seventeen significant digits, enough to round-trip any f64.
pub(crate) fn write_real17<W: Write>(out: &mut W, x: f64) -> std::io::Result<()> {
    write!(out, "{x:.16e}")
}

/// Rejects identifiers that would break the unquoted line format.
pub(crate) fn check_id(what: &str, id: &str) -> Result<()> {
    if id.contains([',', '\n', '\r']) {
        return Err(Error::InvalidInput(format!(
            "{what} `{id}` contains a comma or newline"
        )));
    }
    Ok(())
}
