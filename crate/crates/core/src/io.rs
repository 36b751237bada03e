//! Field CSV files and atomic output helpers.
//!
//! A field file starts with `# a=<a> nr=<nr> ntheta=<ntheta>`, then the
//! column header `j,k,r,theta,value` and one row per cell in storage order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{make_grid, GridRef, ScalarField};

pub fn field_to_csv(f: &ScalarField) -> String {
    let g = f.grid();
    let mut s = format!("# a={} nr={} ntheta={}\nj,k,r,theta,value\n", g.a(), g.nr(), g.ntheta());
    for j in 0..g.nr() {
        for k in 0..g.ntheta() {
            let _ = writeln!(s, "{j},{k},{:.16e},{:.16e},{:.16e}", g.r(j), g.theta(k), f.get(j, k));
        }
    }
    s
}

fn header_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    header
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(|| Error::Format(format!("field header lacks `{key}`")))
}

/// Parses a field file. With `expected` set the header must describe the
/// same grid.
pub fn field_from_csv(text: &str, expected: Option<&GridRef>) -> Result<ScalarField> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Format("missing `# a=.. nr=.. ntheta=..` header".into()))?;
    let parse = |key: &str| -> Result<f64> {
        header_value(header, key)?
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad `{key}`: {e}")))
    };
    let (a, nr, nt) = (parse("a")?, parse("nr")?, parse("ntheta")?);
    let grid = make_grid(a, nr as usize, nt as usize)?;
    if let Some(e) = expected {
        if !grid.same_shape(e) {
            return Err(Error::GridMismatch(format!(
                "file grid (a={a}, nr={nr}, ntheta={nt}) differs from (a={}, nr={}, ntheta={})",
                e.a(),
                e.nr(),
                e.ntheta()
            )));
        }
    }
    if lines.next().map(str::trim) != Some("j,k,r,theta,value") {
        return Err(Error::Format("missing column header `j,k,r,theta,value`".into()));
    }
    let mut vals = vec![f64::NAN; grid.len()];
    let mut seen = 0usize;
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Format(format!("row {}: expected 5 columns", n + 1)));
        }
        let bad = |what: &str| Error::Format(format!("row {}: bad {what}", n + 1));
        let j: usize = cols[0].trim().parse().map_err(|_| bad("j"))?;
        let k: usize = cols[1].trim().parse().map_err(|_| bad("k"))?;
        let v: f64 = cols[4].trim().parse().map_err(|_| bad("value"))?;
        if j >= grid.nr() || k >= grid.ntheta() {
            return Err(bad("cell index"));
        }
        vals[grid.index(j, k)] = v;
        seen += 1;
    }
    if seen != grid.len() || vals.iter().any(|v| v.is_nan()) {
        return Err(Error::Format(format!("expected {} cells, found {seen}", grid.len())));
    }
    ScalarField::from_values(&grid, vals)
}

pub fn read_field(path: &Path, expected: Option<&GridRef>) -> Result<ScalarField> {
    field_from_csv(&fs::read_to_string(path)?, expected)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<()> {
    write_atomic(path, field_to_csv(f).as_bytes())
}
