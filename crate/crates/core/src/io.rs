//! CSV and JSON files: macro fields `x,rho`, velocity columns `v,<name>`,
//! kinetic dumps `x,v,f`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_grid::KineticState;
use crate::reference::MacroField;

/// Relative tolerance for recognising a uniform grid from its centres.
const UNIFORM_TOL: f64 = 1e-9;

fn input_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Input {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a two-column CSV with the given header names.
pub fn read_pairs(path: &Path, names: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_err(path, e.to_string()))?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || headers[0] != *names[0] || headers[1] != *names[1] {
        return Err(input_err(
            path,
            format!("expected header `{},{}`, found `{}`", names[0], names[1], headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| input_err(path, e.to_string()))?;
        let parse = |k: usize| -> Result<f64> {
            let s = rec.get(k).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| input_err(path, format!("row {}: `{s}` is not a finite number", row + 1)))
        };
        a.push(parse(0)?);
        b.push(parse(1)?);
    }
    if a.is_empty() {
        return Err(input_err(path, "no data rows"));
    }
    Ok((a, b))
}

/// Checks that `centres` are equally spaced and returns `(lo, hi)`, the
/// outer cell edges.
pub fn uniform_extent(path: &Path, centres: &[f64]) -> Result<(f64, f64)> {
    let n = centres.len();
    let step = if n > 1 {
        (centres[n - 1] - centres[0]) / (n - 1) as f64
    } else {
        return Err(input_err(path, "need at least two rows to infer the grid"));
    };
    if !(step > 0.0) {
        return Err(input_err(path, "coordinates must increase"));
    }
    for (k, &c) in centres.iter().enumerate() {
        if (c - (centres[0] + k as f64 * step)).abs() > UNIFORM_TOL * step.max(c.abs()) {
            return Err(input_err(path, format!("row {}: grid is not uniform", k + 1)));
        }
    }
    Ok((centres[0] - 0.5 * step, centres[n - 1] + 0.5 * step))
}

pub fn read_macro_csv(path: &Path) -> Result<MacroField> {
    let (x, rho) = read_pairs(path, ["x", "rho"])?;
    let (lo, hi) = uniform_extent(path, &x)?;
    MacroField::new(lo, hi, rho, 0.0)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn finish(w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::Io(e.into_error()))?
        .flush()?;
    Ok(())
}

pub fn write_pairs(path: &Path, names: [&str; 2], a: &[f64], b: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(names)?;
    for (x, y) in a.iter().zip(b) {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    finish(w)
}

pub fn write_macro_csv(path: &Path, field: &MacroField) -> Result<()> {
    let x: Vec<f64> = (0..field.nx()).map(|i| field.x_center(i)).collect();
    write_pairs(path, ["x", "rho"], &x, &field.rho)
}

/// Row-major dump over `(i, j)` with header `x,v,f`.
pub fn write_state_csv(path: &Path, state: &KineticState) -> Result<()> {
    let g = state.grid();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["x", "v", "f"])?;
    for i in 0..g.nx() {
        let x = g.x_center(i).to_string();
        for (j, f) in state.column(i).iter().enumerate() {
            w.write_record([x.as_str(), &g.v_center(j).to_string(), &f.to_string()])?;
        }
    }
    finish(w)
}

pub fn macro_field(state: &KineticState) -> MacroField {
    let g = state.grid();
    MacroField {
        x_min: g.x_min(),
        x_max: g.x_max(),
        rho: state.macro_density(),
        t: state.t,
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One compact JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for v in values {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
