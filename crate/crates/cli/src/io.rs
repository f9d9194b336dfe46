//! Strict CSV ingestion and the fixed-format output writers.
//!
//! Dataset CSV contract: header row, first column `y`, remaining `x1..xp`,
//! UTF-8, '.' decimal separator, no missing values. Floats are written with
//! Rust's shortest round-trip formatting, so identical runs produce
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use pense::dataset::Dataset;

use crate::errors::{CliError, CliResult};

pub struct LoadedData {
    pub data: Dataset,
    pub column_names: Vec<String>,
}

pub fn read_dataset(path: &Path) -> CliResult<LoadedData> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = raw.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::input(format!("{} is empty", path.display())))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.len() < 2 {
        return Err(CliError::input(
            "dataset needs a response column and at least one predictor",
        ));
    }
    if names[0] != "y" {
        return Err(CliError::input(format!(
            "first column must be named 'y', found '{}'",
            names[0]
        )));
    }
    let p = names.len() - 1;
    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(CliError::input(format!(
                "row {} has {} fields, expected {}",
                line_no + 1,
                fields.len(),
                p + 1
            )));
        }
        let mut row = Vec::with_capacity(p);
        for (col, field) in fields.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                CliError::input(format!(
                    "row {}, column '{}': cannot parse '{}' as a number",
                    line_no + 1,
                    names[col],
                    field.trim()
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::input(format!(
                    "row {}, column '{}': non-finite value",
                    line_no + 1,
                    names[col]
                )));
            }
            if col == 0 {
                y.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input("dataset has a header but no rows"));
    }
    let n = rows.len();
    let mut x = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }
    let data = Dataset::new(x, Array1::from_vec(y)).map_err(|e| CliError::input(e.to_string()))?;
    Ok(LoadedData {
        data,
        column_names: names[1..].to_vec(),
    })
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut out = String::new();
    out.push('y');
    for j in 1..=data.p() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for i in 0..data.n() {
        out.push_str(&format!("{}", data.y[i]));
        for j in 0..data.p() {
            out.push_str(&format!(",{}", data.x[[i, j]]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// path.csv: one row per retained minimum per penalty level, coefficients in
/// original units.
pub struct PathRow<'a> {
    pub lambda: f64,
    pub q: usize,
    pub objective: f64,
    pub scale: f64,
    pub nnz: usize,
    pub l1_norm: f64,
    pub intercept: f64,
    pub beta: &'a Array1<f64>,
}

pub fn write_path_csv(path: &Path, p: usize, rows: &[PathRow<'_>]) -> CliResult<()> {
    let mut out = String::from("lambda,q,objective,scale,nnz,l1_norm,intercept");
    for j in 1..=p {
        out.push_str(&format!(",beta_{j}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.lambda, r.q, r.objective, r.scale, r.nnz, r.l1_norm, r.intercept
        ));
        for b in r.beta.iter() {
            out.push_str(&format!(",{b}"));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub struct CurveRow {
    pub lambda: f64,
    pub q: usize,
    pub e_hat: f64,
    pub sd: f64,
    pub selected: bool,
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> CliResult<()> {
    let mut out = String::from("lambda,q,e_hat,sd,selected_flag\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.lambda,
            r.q,
            r.e_hat,
            r.sd,
            if r.selected { 1 } else { 0 }
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_fig_csv(path: &Path, rows: &[(f64, f64, bool)]) -> CliResult<()> {
    let mut out = String::from("lambda,location,is_global\n");
    for (lambda, location, is_global) in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            lambda,
            location,
            if *is_global { 1 } else { 0 }
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::input(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(bytes)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
