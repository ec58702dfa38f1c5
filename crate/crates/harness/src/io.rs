//! CSV and JSON input/output.
//!
//! Dataset CSV: header row with columns `y`, `t`, `x1..xp`, and optionally
//! `true_theta`, in any column order. Estimates CSV: one row per test point
//! with columns `row_id, propensity, region, theta_mean, theta_sd, ci_lo,
//! ci_hi`. Floats are printed with the shortest representation that parses
//! back to the identical value, so a write/read round trip is exact.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use ppk_core::data::Dataset;
use ppk_core::engine::PosteriorHte;

use crate::error::{HarnessError, Result};
use crate::metrics::z_quantile;
use crate::sim::MetricsReport;

fn bad(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::MalformedCsv { path: path.display().to_string(), message: message.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

/// Read a dataset. Required columns: `y`, `t`, and `x1..xp` with contiguous
/// numbering from 1; `true_theta` is optional; anything else is rejected.
pub fn read_csv(path: &Path) -> Result<Dataset<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| bad(path, format!("cannot open: {e}")))?;
    let headers = reader.headers().map_err(|e| bad(path, format!("bad header: {e}")))?.clone();

    let mut y_col = None;
    let mut t_col = None;
    let mut theta_col = None;
    let mut x_cols: Vec<(usize, usize)> = Vec::new(); // (dimension index, column)
    for (c, name) in headers.iter().enumerate() {
        match name {
            "y" => y_col = Some(c),
            "t" => t_col = Some(c),
            "true_theta" => theta_col = Some(c),
            _ => {
                let dim = name
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&d| d >= 1)
                    .ok_or_else(|| bad(path, format!("unexpected column '{name}'")))?;
                x_cols.push((dim - 1, c));
            }
        }
    }
    let y_col = y_col.ok_or_else(|| bad(path, "missing column 'y'"))?;
    let t_col = t_col.ok_or_else(|| bad(path, "missing column 't'"))?;
    if x_cols.is_empty() {
        return Err(bad(path, "missing covariate columns 'x1..xp'"));
    }
    let p = x_cols.len();
    x_cols.sort_by_key(|&(dim, _)| dim);
    for (expect, &(dim, _)) in x_cols.iter().enumerate() {
        if dim != expect {
            return Err(bad(path, format!("covariate columns must be x1..x{p} with no gaps")));
        }
    }

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ts: Vec<u8> = Vec::new();
    let mut thetas: Vec<f64> = Vec::new();
    let expected_len = headers.len();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(path, format!("row {row}: {e}")))?;
        if record.len() != expected_len {
            return Err(bad(
                path,
                format!("row {row} has {} fields, expected {expected_len}", record.len()),
            ));
        }
        let parse = |c: usize, name: &str| -> Result<f64> {
            record[c]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(path, format!("row {row}, column '{name}': non-numeric value")))
        };
        ys.push(parse(y_col, "y")?);
        let tv = parse(t_col, "t")?;
        if tv != 0.0 && tv != 1.0 {
            return Err(bad(path, format!("row {row}, column 't': value must be 0 or 1")));
        }
        ts.push(tv as u8);
        for &(_, c) in &x_cols {
            xs.push(parse(c, &headers[c])?);
        }
        if let Some(c) = theta_col {
            thetas.push(parse(c, "true_theta")?);
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(bad(path, "no data rows"));
    }
    let x = DMatrix::from_row_slice(n, p, &xs);
    let true_theta = theta_col.map(|_| DVector::from_vec(thetas));
    Dataset::new(x, DVector::from_vec(ys), ts, true_theta).map_err(HarnessError::Core)
}

/// Write a dataset with the schema [`read_csv`] accepts.
pub fn write_dataset(path: &Path, data: &Dataset<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => bad(path, format!("{other:?}")),
    })?;
    let p = data.p();
    let mut header: Vec<String> = vec!["y".into(), "t".into()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    if data.true_theta.is_some() {
        header.push("true_theta".into());
    }
    writer.write_record(&header).map_err(|e| bad(path, e.to_string()))?;
    for i in 0..data.n() {
        let mut row: Vec<String> = vec![data.y[i].to_string(), data.t[i].to_string()];
        row.extend((0..p).map(|j| data.x[(i, j)].to_string()));
        if let Some(theta) = &data.true_theta {
            row.push(theta[i].to_string());
        }
        writer.write_record(&row).map_err(|e| bad(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Write per-test-point estimates. `regions` are 0-based internally and
/// serialized 1-based.
pub fn write_estimates(
    path: &Path,
    post: &PosteriorHte<f64>,
    scores: &DVector<f64>,
    regions: &[usize],
    level: f64,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => bad(path, format!("{other:?}")),
    })?;
    writer
        .write_record(["row_id", "propensity", "region", "theta_mean", "theta_sd", "ci_lo", "ci_hi"])
        .map_err(|e| bad(path, e.to_string()))?;
    let z = z_quantile(level);
    let sd = post.sd();
    for i in 0..post.len() {
        let half = z * sd[i];
        writer
            .write_record([
                i.to_string(),
                scores[i].to_string(),
                (regions[i] + 1).to_string(),
                post.mean[i].to_string(),
                sd[i].to_string(),
                (post.mean[i] - half).to_string(),
                (post.mean[i] + half).to_string(),
            ])
            .map_err(|e| bad(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Serialize a simulation report as pretty JSON.
pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(path, json + "\n").map_err(|e| io_err(path, e))
}
