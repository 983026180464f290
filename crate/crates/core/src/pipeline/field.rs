//! Monitoring data exchange: depth rows, one displacement column per
//! measurement, millimetres.

use std::path::Path;

use super::windows::{resample_matrix, RecordSource, ResampledRecord, PROFILE_POINTS};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::persist::{read_table, write_table};

const MM_PER_M: f64 = 1_000.0;

/// Measurement series as read from a field CSV, converted to metres.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub labels: Vec<String>,
    pub depths: Vec<f64>,
    /// `[measurements, depths]`, metres.
    pub displacement: Tensor,
}

pub fn read_field_csv(path: &Path) -> Result<FieldSeries> {
    let table = read_table(path)?;
    let labels: Vec<String> = table.header.iter().skip(1).cloned().collect();
    let ctx = |msg: String| Error::data(format!("{}: {msg}", path.display()));
    if labels.len() < 2 {
        return Err(ctx(format!(
            "need at least 2 measurement columns to form a series, found {}",
            labels.len()
        )));
    }
    if table.rows.len() < 4 {
        return Err(ctx(format!("need at least 4 depth rows, found {}", table.rows.len())));
    }
    let depths = table
        .labels
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d.parse::<f64>()
                .map_err(|_| ctx(format!("row {}: depth '{d}' is not a number", i + 2)))
        })
        .collect::<Result<Vec<f64>>>()?;
    if let Some(i) = depths.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(ctx(format!(
            "depths must be strictly increasing (row {} has {} after {})",
            i + 3,
            depths[i + 1],
            depths[i]
        )));
    }
    if let Some(i) = table.rows.iter().position(|r| r.len() != labels.len()) {
        return Err(ctx(format!("row {} has {} values, header has {}", i + 2, table.rows[i].len(), labels.len())));
    }
    let (steps, points) = (labels.len(), depths.len());
    let mut data = vec![0.0; steps * points];
    for (j, row) in table.rows.iter().enumerate() {
        for (k, mm) in row.iter().enumerate() {
            data[k * points + j] = mm / MM_PER_M;
        }
    }
    let displacement = Tensor::new(vec![steps, points], data).map_err(|e| ctx(e.to_string()))?;
    Ok(FieldSeries { labels, depths, displacement })
}

/// Reads a field CSV and resamples every measurement to the profile grid,
/// keeping column order.
pub fn ingest_field_csv(path: &Path) -> Result<ResampledRecord> {
    let series = read_field_csv(path)?;
    let steps = series.labels.len();
    let profiles = resample_matrix(&series.depths, series.displacement.data(), steps, PROFILE_POINTS)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(ResampledRecord { id: 0, source: RecordSource::Field { name }, profiles })
}

/// Writes `series` (`[steps, depths]`, metres) in the field layout.
pub fn write_field_csv(path: &Path, depths: &[f64], series: &Tensor) -> Result<()> {
    series.expect_rank(2, "field series")?;
    let (steps, points) = (series.shape()[0], series.shape()[1]);
    if points != depths.len() {
        return Err(Error::shape(format!("{} depths for {points} points", depths.len())));
    }
    let mut header = vec!["depth_m".to_string()];
    header.extend((1..=steps).map(|k| format!("step_{k}")));
    let rows: Vec<(String, Vec<f64>)> = depths
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let mm = (0..steps).map(|k| series.data()[k * points + j] * MM_PER_M).collect();
            (z.to_string(), mm)
        })
        .collect();
    write_table(path, &header, rows.iter().map(|(z, v)| (z.clone(), v.as_slice())))
}
