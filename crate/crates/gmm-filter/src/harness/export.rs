//! CSV and JSON artifact readers/writers.
//!
//! Floats are written through their shortest round-trippable decimal form,
//! so identical runs produce byte-identical files.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

/// One exported trace row; the union of what every method can report.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub method: String,
    pub t: usize,
    pub pred_count_pre: usize,
    pub pred_count_post: usize,
    pub filt_count_pre: usize,
    pub filt_count_post: usize,
    pub pred_mean: Vec<f64>,
    pub filt_mean: Vec<f64>,
    pub log_likelihood: f64,
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let Some(first) = rows.first() else {
        return Err(Error::Argument("cannot write an empty trace".into()));
    };
    let n = first.pred_mean.len();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "method".to_string(),
        "t".to_string(),
        "pred_count_pre".to_string(),
        "pred_count_post".to_string(),
        "filt_count_pre".to_string(),
        "filt_count_post".to_string(),
    ];
    header.extend((0..n).map(|i| format!("pred_mean_{i}")));
    header.extend((0..n).map(|i| format!("filt_mean_{i}")));
    header.push("log_likelihood".to_string());
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            row.method.clone(),
            row.t.to_string(),
            row.pred_count_pre.to_string(),
            row.pred_count_post.to_string(),
            row.filt_count_pre.to_string(),
            row.filt_count_post.to_string(),
        ];
        rec.extend(row.pred_mean.iter().map(|x| x.to_string()));
        rec.extend(row.filt_mean.iter().map(|x| x.to_string()));
        rec.push(row.log_likelihood.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("cannot read trace {}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
    };
    let pred_cols: Vec<usize> = (0..)
        .map_while(|i| headers.iter().position(|h| h == format!("pred_mean_{i}")))
        .collect();
    let filt_cols: Vec<usize> = (0..)
        .map_while(|i| headers.iter().position(|h| h == format!("filt_mean_{i}")))
        .collect();
    if pred_cols.is_empty() {
        return Err(Error::Config(format!(
            "{}: no pred_mean_* columns",
            path.display()
        )));
    }
    let (c_method, c_t) = (col("method")?, col("t")?);
    let (c_pp, c_pq) = (col("pred_count_pre")?, col("pred_count_post")?);
    let (c_fp, c_fq) = (col("filt_count_pre")?, col("filt_count_post")?);
    let c_ll = col("log_likelihood")?;

    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|e| Error::Config(format!("{}: bad float: {e}", path.display())))
        };
        let u = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|e| Error::Config(format!("{}: bad count: {e}", path.display())))
        };
        rows.push(TraceRow {
            method: rec[c_method].to_string(),
            t: u(c_t)?,
            pred_count_pre: u(c_pp)?,
            pred_count_post: u(c_pq)?,
            filt_count_pre: u(c_fp)?,
            filt_count_post: u(c_fq)?,
            pred_mean: pred_cols.iter().map(|&i| f(i)).collect::<Result<_>>()?,
            filt_mean: filt_cols.iter().map(|&i| f(i)).collect::<Result<_>>()?,
            log_likelihood: f(c_ll)?,
        });
    }
    Ok(rows)
}

pub fn write_truth_csv(
    path: &Path,
    states: &[DVector<f64>],
    measurements: &[DVector<f64>],
) -> Result<()> {
    let n = states.first().map_or(0, |x| x.len());
    let p = measurements.first().map_or(0, |y| y.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..p).map(|i| format!("y_{i}")));
    w.write_record(&header)?;
    for (idx, (x, y)) in states.iter().zip(measurements).enumerate() {
        let mut rec = vec![(idx + 1).to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        rec.extend(y.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a truth CSV back as `(states, measurements)`.
#[allow(clippy::type_complexity)]
pub fn read_truth_csv(path: &Path) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("cannot read truth {}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let x_cols: Vec<usize> = (0..)
        .map_while(|i| headers.iter().position(|h| h == format!("x_{i}")))
        .collect();
    let y_cols: Vec<usize> = (0..)
        .map_while(|i| headers.iter().position(|h| h == format!("y_{i}")))
        .collect();
    if x_cols.is_empty() {
        return Err(Error::Config(format!(
            "{}: no x_* columns",
            path.display()
        )));
    }
    let mut states = Vec::new();
    let mut measurements = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |cols: &[usize]| -> Result<DVector<f64>> {
            cols.iter()
                .map(|&i| {
                    rec[i].parse::<f64>().map_err(|e| {
                        Error::Config(format!("{}: bad float: {e}", path.display()))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(DVector::from_vec)
        };
        states.push(parse(&x_cols)?);
        measurements.push(parse(&y_cols)?);
    }
    Ok((states, measurements))
}

/// Reads a measurement CSV (`t,y_0,...`).
pub fn read_measurements_csv(path: &Path) -> Result<Vec<DVector<f64>>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("cannot read measurements {}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let y_cols: Vec<usize> = (0..)
        .map_while(|i| headers.iter().position(|h| h == format!("y_{i}")))
        .collect();
    if y_cols.is_empty() {
        return Err(Error::Config(format!(
            "{}: no y_* columns",
            path.display()
        )));
    }
    let mut measurements = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let y = y_cols
            .iter()
            .map(|&i| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}: bad float: {e}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        measurements.push(DVector::from_vec(y));
    }
    Ok(measurements)
}

pub fn write_density_csv(path: &Path, xs: &[f64], density: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "density"])?;
    for (x, d) in xs.iter().zip(density) {
        w.write_record([x.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mixture_json(path: &Path, mixture: &GaussianMixture) -> Result<()> {
    let text = serde_json::to_string_pretty(mixture)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_mixture_json(path: &Path) -> Result<GaussianMixture> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read mixture {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
