//! Flat file formats for panels, continuation fits and bound realizations.
//!
//! Binary layouts are a header of little-endian `u64` sizes followed by
//! little-endian `f64` values in row-major order:
//!
//! * panel: `n_path, dim, n_dec`, then `[i][j][k]`
//! * fit: `n_dec, n_pos, m`, then `[t][p][k]` for `t < n_dec - 1`
//!
//! The panel CSV has the header sizes on the first line and one
//! `(path, component)` series of `n_dec` values per following line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dual::BoundResult;
use crate::error::{LsmError, Result};
use crate::lsm::ContinuationFit;
use crate::simulate::PathPanel;

fn write_binary(out: &mut impl Write, header: [usize; 3], values: &[f64]) -> Result<()> {
    for h in header {
        out.write_all(&(h as u64).to_le_bytes())?;
    }
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_binary(input: &mut impl Read, what: &str) -> Result<([usize; 3], Vec<f64>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || (bytes.len() - 24) % 8 != 0 {
        return Err(LsmError::Artifact(format!(
            "{what}: truncated file ({} bytes)",
            bytes.len()
        )));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    let header = [word(0) as usize, word(1) as usize, word(2) as usize];
    let values: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, values))
}

pub fn write_panel_binary(panel: &PathPanel, out: &mut impl Write) -> Result<()> {
    write_binary(
        out,
        [panel.n_path(), panel.dim(), panel.n_dec()],
        panel.as_slice(),
    )
}

pub fn read_panel_binary(input: &mut impl Read) -> Result<PathPanel> {
    let ([n_path, dim, n_dec], values) = read_binary(input, "panel")?;
    PathPanel::new(n_path, dim, n_dec, values)
}

pub fn write_panel_csv(panel: &PathPanel, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{},{},{}", panel.n_path(), panel.dim(), panel.n_dec())?;
    for i in 0..panel.n_path() {
        for j in 0..panel.dim() {
            let line: Vec<String> = panel.series(i, j).iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join(","))?;
        }
    }
    Ok(())
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| LsmError::Artifact(format!("bad panel header field {s:?}")))
}

pub fn read_panel_csv(input: impl Read) -> Result<PathPanel> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| LsmError::Artifact("empty panel CSV".into()))??;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 3 {
        return Err(LsmError::Artifact(format!("panel CSV header {header:?}")));
    }
    let (n_path, dim, n_dec) = (
        parse_usize(fields[0])?,
        parse_usize(fields[1])?,
        parse_usize(fields[2])?,
    );
    let mut values = Vec::with_capacity(n_path * dim * n_dec);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| LsmError::Artifact(format!("bad panel value {field:?}")))?;
            values.push(v);
        }
    }
    PathPanel::new(n_path, dim, n_dec, values)
}

/// Writes a panel, choosing CSV for a `.csv` extension and binary otherwise.
pub fn save_panel(panel: &PathPanel, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    if is_csv(path) {
        write_panel_csv(panel, &mut out)?;
    } else {
        write_panel_binary(panel, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_panel(path: &Path) -> Result<PathPanel> {
    let file = fs::File::open(path)?;
    if is_csv(path) {
        read_panel_csv(file)
    } else {
        read_panel_binary(&mut BufReader::new(file))
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn write_fit(fit: &ContinuationFit, out: &mut impl Write) -> Result<()> {
    write_binary(
        out,
        [fit.n_dec(), fit.n_pos(), fit.n_basis()],
        fit.as_slice(),
    )
}

pub fn read_fit(input: &mut impl Read) -> Result<ContinuationFit> {
    let ([n_dec, n_pos, m], values) = read_binary(input, "fit")?;
    ContinuationFit::new(n_dec, n_pos, m, values)
}

pub fn save_fit(fit: &ContinuationFit, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_fit(fit, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_fit(path: &Path) -> Result<ContinuationFit> {
    read_fit(&mut BufReader::new(fs::File::open(path)?))
}

/// CSV with columns `path,position,lower,upper`.
pub fn write_bounds_csv(result: &BoundResult, out: &mut impl Write) -> Result<()> {
    writeln!(out, "path,position,lower,upper")?;
    for i in 0..result.lower.nrows() {
        for p in 0..result.lower.ncols() {
            writeln!(
                out,
                "{},{},{},{}",
                i,
                p,
                result.lower[(i, p)],
                result.upper[(i, p)]
            )?;
        }
    }
    Ok(())
}

pub fn save_bounds_csv(result: &BoundResult, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_bounds_csv(result, &mut out)?;
    out.flush()?;
    Ok(())
}
