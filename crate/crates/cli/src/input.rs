//! Readers for the alpha history, per-stream value files, correlation
//! matrices and user-supplied factor models.

use std::collections::HashMap;
use std::path::Path;

use alphacross_core::covariance::build_factor_model;
use alphacross_core::{validate_alpha_set, AlphaSet, AlphaSetCandidate, Error, FactorModel};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Cells treated as missing observations.
fn is_missing(cell: &str) -> bool {
    cell.is_empty() || ["na", "n/a", "nan"].contains(&cell.to_ascii_lowercase().as_str())
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path, e))
}

fn parse_number(path: &Path, cell: &str, line: usize, column: &str) -> CliResult<f64> {
    cell.parse::<f64>()
        .map_err(|_| CliError::input(path, format!("line {line}, column `{column}`: cannot parse `{cell}`")))
}

/// History CSV: header `t,<label>...`, one row per observation, first row
/// the most recent. Missing cells come back as `None`.
pub fn read_history(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::input(path, e))?.clone();
    if header.len() < 2 {
        return Err(CliError::input(path, "expected a time column followed by at least one stream"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::input(path, e))?;
        let line = k + 2;
        let row = record
            .iter()
            .skip(1)
            .zip(&labels)
            .map(|(cell, label)| {
                if is_missing(cell) {
                    Ok(None)
                } else {
                    parse_number(path, cell, line, label).map(Some)
                }
            })
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(path, "history has no observations"));
    }
    Ok((labels, rows))
}

/// Two-column CSV `label,<value_column>` reordered to match `labels`.
pub fn read_labelled(path: &Path, value_column: &str, labels: &[String]) -> CliResult<Vec<f64>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::input(path, e))?.clone();
    if header.len() != 2 || &header[0] != "label" || &header[1] != value_column {
        return Err(CliError::input(path, format!("expected header `label,{value_column}`")));
    }
    let mut values = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::input(path, e))?;
        let value = parse_number(path, &record[1], k + 2, value_column)?;
        if values.insert(record[0].to_string(), value).is_some() {
            return Err(CliError::input(path, format!("duplicate label `{}`", &record[0])));
        }
    }
    if let Some(extra) = values.keys().find(|l| !labels.contains(l)) {
        return Err(CliError::input(path, format!("label `{extra}` is not in the history")));
    }
    labels
        .iter()
        .map(|l| {
            values
                .get(l)
                .copied()
                .ok_or_else(|| CliError::input(path, format!("no {value_column} for stream `{l}`")))
        })
        .collect()
}

/// Builds the validated alpha set. Turnovers default to 1 when no file is
/// given; current alphas default to the most recent history row.
pub fn load_alpha_set(history: &Path, turnovers: Option<&Path>, expected: Option<&Path>) -> CliResult<AlphaSet> {
    let (labels, rows) = read_history(history)?;
    let taus = match turnovers {
        Some(p) => read_labelled(p, "tau", &labels)?,
        None => vec![1.0; labels.len()],
    };
    let alphas = expected.map(|p| read_labelled(p, "alpha", &labels)).transpose()?;
    let candidate = AlphaSetCandidate {
        labels,
        history: rows,
        turnovers: taus,
        alphas,
    };
    validate_alpha_set(candidate).map_err(|e| {
        let at = match (&e, turnovers, expected) {
            (Error::NegativeTurnover { .. }, Some(t), _) => t,
            (Error::NonFinite(_), _, Some(x)) => x,
            _ => history,
        };
        CliError::at(at)(e)
    })
}

/// Square matrix CSV whose header and first column both carry the labels.
pub fn read_correlation(path: &Path) -> CliResult<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::input(path, e))?.clone();
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = labels.len();
    if n == 0 {
        return Err(CliError::input(path, "correlation matrix has no columns"));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut count = 0;
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::input(path, e))?;
        if k >= n || record[0] != labels[k] {
            return Err(CliError::input(path, format!("row {} label does not match the header", k + 1)));
        }
        for (j, cell) in record.iter().skip(1).enumerate() {
            m[(k, j)] = parse_number(path, cell, k + 2, &labels[j])?;
        }
        count += 1;
    }
    if count != n {
        return Err(CliError::input(path, format!("{count} rows for {n} columns")));
    }
    Ok((labels, m))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorFile {
    /// `N x F` exposures, one row per stream.
    omega: Vec<Vec<f64>>,
    /// `F x F` factor covariance.
    phi: Vec<Vec<f64>>,
    specific_var: Vec<f64>,
}

fn matrix(path: &Path, name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> CliResult<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::input(path, format!("`{name}` must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Factor model JSON `{omega, phi, specific_var}`; `n` is the number of
/// streams in the history.
pub fn read_factor_file(path: &Path, n: usize) -> CliResult<FactorModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let file: FactorFile = serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
    if file.specific_var.len() != n {
        return Err(CliError::input(
            path,
            format!("{} specific variances for {n} streams", file.specific_var.len()),
        ));
    }
    let f = file.phi.len();
    if f == 0 {
        if file.omega.iter().any(|r| !r.is_empty()) {
            return Err(CliError::input(path, "`omega` has columns but `phi` is empty"));
        }
        return FactorModel::diagonal(file.specific_var).map_err(CliError::at(path));
    }
    let omega = matrix(path, "omega", &file.omega, n, f)?;
    let phi = matrix(path, "phi", &file.phi, f, f)?;
    build_factor_model(&omega, &phi, &file.specific_var).map_err(CliError::at(path))
}
