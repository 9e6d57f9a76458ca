//! Deterministic CSV output: 9 significant digits, `\n` line endings.

use std::fs;
use std::path::{Path, PathBuf};

use crate::circuit::CircuitResponse;
use crate::error::{Error, Result};
use crate::experiments::Table;
use crate::rf::RfResponse;

const SIGNIFICANT: i32 = 9;

/// Fixed-point text with nine significant digits (zero prints with eight decimals).
///
/// Magnitudes below `1e-32` would need more than 40 decimals and print as zero.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let v = if v.abs() < 1e-32 { 0.0 } else { v };
    let decimals = |mag: f64| -> usize {
        if mag == 0.0 {
            (SIGNIFICANT - 1) as usize
        } else {
            (SIGNIFICANT - 1 - mag.log10().floor() as i32).clamp(0, 40) as usize
        }
    };
    let mut d = decimals(v.abs());
    let mut s = format!("{v:.d$}");
    // Rounding can carry into a new leading digit (9.9999999996 -> 10.00000000).
    let rounded: f64 = s.parse().unwrap_or(v);
    if d > 0 && decimals(rounded.abs()) < d {
        d -= 1;
        s = format!("{v:.d$}");
    }
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s.remove(0);
    }
    s
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format_number(*v)).collect::<Vec<_>>().join(",")
}

pub fn rf_csv(resp: &RfResponse<f64>) -> String {
    let mut out = String::from("freq_ghz,mag_db,phase_rad\n");
    for i in 0..resp.len() {
        out.push_str(&join(&[resp.rf_freqs_ghz[i], resp.mag_db[i], resp.phase_rad[i]]));
        out.push('\n');
    }
    out
}

pub fn optical_csv(resp: &CircuitResponse<f64>, port: &str) -> Result<String> {
    let h = resp.port(port)?;
    let mut out = String::from("offset_ghz,re,im\n");
    for (f, z) in resp.grid.offsets_ghz.iter().zip(h) {
        out.push_str(&join(&[*f, z.re, z.im]));
        out.push('\n');
    }
    Ok(out)
}

pub fn table_csv(table: &Table) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_rf_csv(resp: &RfResponse<f64>, path: &Path) -> Result<()> {
    write_text(path, &rf_csv(resp))
}

/// One file per output port, `<stem>_<port>.csv` inside `dir`.
pub fn write_optical_csv(resp: &CircuitResponse<f64>, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    resp.ports
        .iter()
        .map(|(port, _)| {
            let path = dir.join(format!("{stem}_{port}.csv"));
            write_text(&path, &optical_csv(resp, port)?)?;
            Ok(path)
        })
        .collect()
}

/// Header and numeric rows of a CSV produced by this module.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::config("empty CSV"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            let row: Vec<f64> = l
                .split(',')
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::config(format!("CSV row {}: {e}", i + 2)))?;
            if row.len() != header.len() {
                return Err(Error::config(format!("CSV row {} has {} fields", i + 2, row.len())));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}
