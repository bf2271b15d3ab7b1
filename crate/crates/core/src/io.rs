//! CSV files: time series, exposure reports, fitted deposits and adjacency
//! lists.
//!
//! Time series use a header `t,<labels>` followed by one row per sample;
//! values are written with 17 significant digits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::embedding::TimeSeries;
use crate::error::{Result, RrcError};
use crate::remittance::{Edge, ExposureReport};

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series_to<W: Write>(series: &TimeSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labels: Vec<String> = match series.labels() {
        Some(l) => l.to_vec(),
        None => (1..=series.dim()).map(|j| format!("x{j}")).collect(),
    };
    w.write_record(std::iter::once("t".to_string()).chain(labels))?;
    for r in 0..series.len() {
        let t = series.times().map_or(r as f64, |ts| ts[r]);
        let row = series.values().row(r);
        w.write_record(std::iter::once(t).chain(row.iter().copied()).map(format_value))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    write_series_to(series, File::create(path)?)
}

pub fn read_series_from<R: Read>(input: R) -> Result<TimeSeries> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 2 {
        return Err(RrcError::Csv("expected a time column and at least one value column".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parsed = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| RrcError::Csv(format!("row {}: cannot parse {f:?} as a number", line + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        times.push(parsed[0]);
        rows.push(parsed[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(RrcError::Csv("no data rows".into()));
    }
    if rows.iter().flatten().chain(&times).any(|v| !v.is_finite()) {
        return Err(RrcError::Csv("values must be finite".into()));
    }
    TimeSeries::from_rows(&rows)?.with_times(times)?.with_labels(labels)
}

pub fn read_series(path: impl AsRef<Path>) -> Result<TimeSeries> {
    read_series_from(File::open(path)?)
}

/// `institution,exposure,rank`, one row per institution in index order.
pub fn write_exposures_to<W: Write>(exposures: &[f64], out: W) -> Result<()> {
    let ranked = crate::remittance::rank_exposures(exposures, exposures.len())?;
    let mut rank = vec![0; exposures.len()];
    for (position, (institution, _)) in ranked.iter().enumerate() {
        rank[institution - 1] = position + 1;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["institution", "exposure", "rank"])?;
    for (j, e) in exposures.iter().enumerate() {
        w.write_record([(j + 1).to_string(), format_value(*e), rank[j].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_exposures(exposures: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_exposures_to(exposures, File::create(path)?)
}

/// Long format `quarter,period,institution,observed,fitted`.
pub fn write_fitted_to<W: Write>(report: &ExposureReport, periods: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quarter", "period", "institution", "observed", "fitted"])?;
    for k in 0..report.fitted.nrows() {
        let q = report.first_quarter + k;
        let period = periods.get(q).cloned().unwrap_or_else(|| q.to_string());
        for j in 0..report.fitted.ncols() {
            w.write_record([
                q.to_string(),
                period.clone(),
                (j + 1).to_string(),
                format_value(report.observed[(k, j)]),
                format_value(report.fitted[(k, j)]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fitted(report: &ExposureReport, periods: &[String], path: impl AsRef<Path>) -> Result<()> {
    write_fitted_to(report, periods, File::create(path)?)
}

/// `institution,input,lag,weight`; the bias input is written as `bias`.
pub fn write_adjacency_to<W: Write>(edges: &[Edge], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["institution", "input", "lag", "weight"])?;
    for e in edges {
        let input = e.region.map_or_else(|| "bias".to_string(), |r| r.to_string());
        w.write_record([e.institution.to_string(), input, e.lag.to_string(), format_value(e.weight)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adjacency(edges: &[Edge], path: impl AsRef<Path>) -> Result<()> {
    write_adjacency_to(edges, File::create(path)?)
}

/// Wrap a panel matrix as a labelled series `<prefix>1, <prefix>2, ...`.
pub fn matrix_to_series(values: &DMatrix<f64>, prefix: &str) -> Result<TimeSeries> {
    let labels = (1..=values.ncols()).map(|j| format!("{prefix}{j}")).collect();
    TimeSeries::new(values.clone())?.with_labels(labels)
}
