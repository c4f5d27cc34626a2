//! File formats.
//!
//! * curves, long format: `curve_id,component,t_index,value` with components
//!   numbered `1..=J` and `t_index` in `0..T`;
//! * labels: `curve_id,label`;
//! * grid: `{ "t_min": x, "t_max": y, "T": n }`;
//! * cluster assignments: `curve_id,cluster`;
//! * silhouettes: `curve_id,cluster,silhouette`;
//! * spectrum: `k,eigenvalue`;
//! * p sweeps: `log10_p,misclassified_proportion,sd`.
//!
//! Data rows are numbered from 1 in ingestion errors (the header is row 0).

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{FdError, Result};
use crate::eval::{SilhouetteReport, SweepRow};
use crate::fdata::{FunctionalSample, Grid, GridSpec, MultiCurve};
use crate::spectral::Spectrum;

const CURVE_HEADER: [&str; 4] = ["curve_id", "component", "t_index", "value"];
const LABEL_HEADER: [&str; 2] = ["curve_id", "label"];

fn ingest(row: usize, message: impl Into<String>) -> FdError {
    FdError::Ingestion { row, message: message.into() }
}

fn csv_err(e: csv::Error) -> FdError {
    let row = e.position().map_or(0, |p| p.line().saturating_sub(1) as usize);
    ingest(row, e.to_string())
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_err)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(ingest(0, format!("expected header {}, got {}", expected.join(","), got.join(","))));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(row: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| ingest(row, format!("cannot parse {name} from '{raw}'")))
}

/// Reads a long-format curve table. Curves keep their order of first
/// appearance. Without a grid spec the grid is `[0, 1]` with `T` points.
pub fn read_curves<R: Read>(reader: R, grid: Option<GridSpec>) -> Result<FunctionalSample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, &CURVE_HEADER)?;

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<HashMap<(usize, usize), f64>> = Vec::new();
    let mut max_comp = 0usize;
    let mut max_t = 0usize;

    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 4 {
            return Err(ingest(row, format!("expected 4 fields, got {}", rec.len())));
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(ingest(row, "empty curve_id"));
        }
        let comp: usize = parse_field(row, "component", &rec[1])?;
        let t: usize = parse_field(row, "t_index", &rec[2])?;
        let value: f64 = parse_field(row, "value", &rec[3])?;
        if comp == 0 {
            return Err(ingest(row, "components are numbered from 1"));
        }
        if !value.is_finite() {
            return Err(ingest(row, "value is not finite"));
        }
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            cells.push(HashMap::new());
            cells.len() - 1
        });
        if cells[slot].insert((comp, t), value).is_some() {
            return Err(ingest(row, format!("duplicate entry for curve {id}, component {comp}, t_index {t}")));
        }
        max_comp = max_comp.max(comp);
        max_t = max_t.max(t);
    }
    if order.is_empty() {
        return Err(ingest(0, "no data rows"));
    }

    let t_len = max_t + 1;
    let grid = Arc::new(match grid {
        Some(spec) => {
            if spec.len != t_len {
                return Err(FdError::Validation(format!(
                    "grid has T={} but the data has t_index up to {max_t}",
                    spec.len
                )));
            }
            Grid::from_spec(spec)?
        }
        None => Grid::equispaced(0.0, 1.0, t_len)?,
    });

    let mut curves = Vec::with_capacity(order.len());
    for (id, map) in order.iter().zip(&cells) {
        let mut values = Vec::with_capacity(max_comp * t_len);
        for c in 1..=max_comp {
            for t in 0..t_len {
                let v = map.get(&(c, t)).ok_or_else(|| {
                    FdError::Validation(format!("curve {id} is missing component {c}, t_index {t}"))
                })?;
                values.push(*v);
            }
        }
        curves.push(MultiCurve::from_flat(grid.clone(), max_comp, values)?);
    }
    FunctionalSample::new(curves, None)?.with_ids(order)
}

pub fn read_curves_file(path: &Path, grid: Option<GridSpec>) -> Result<FunctionalSample> {
    read_curves(File::open(path)?, grid)
}

/// Reads `curve_id,label` pairs and returns labels in the sample's curve order.
pub fn read_labels<R: Read>(reader: R, ids: &[String]) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, &LABEL_HEADER)?;
    let mut map = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 2 {
            return Err(ingest(row, format!("expected 2 fields, got {}", rec.len())));
        }
        if map.insert(rec[0].trim().to_string(), rec[1].trim().to_string()).is_some() {
            return Err(ingest(row, format!("duplicate label for curve {}", rec[0].trim())));
        }
    }
    ids.iter()
        .map(|id| {
            map.get(id)
                .cloned()
                .ok_or_else(|| FdError::Validation(format!("no label for curve {id}")))
        })
        .collect()
}

pub fn read_labels_file(path: &Path, ids: &[String]) -> Result<Vec<String>> {
    read_labels(File::open(path)?, ids)
}

pub fn read_grid_json<R: Read>(reader: R) -> Result<GridSpec> {
    let spec: GridSpec = serde_json::from_reader(reader)
        .map_err(|e| FdError::Validation(format!("bad grid JSON: {e}")))?;
    Grid::from_spec(spec)?;
    Ok(spec)
}

pub fn read_grid_file(path: &Path) -> Result<GridSpec> {
    read_grid_json(File::open(path)?)
}

fn to_io(e: csv::Error) -> FdError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FdError::Io(io),
        other => FdError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes a sample in long format. `f64` values use the shortest
/// representation that parses back to the same bits.
pub fn write_curves<W: Write>(writer: W, sample: &FunctionalSample) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CURVE_HEADER).map_err(to_io)?;
    let t_len = sample.grid().len();
    for (id, curve) in sample.ids().iter().zip(sample.curves()) {
        for c in 0..curve.components() {
            for (t, v) in curve.component(c).iter().enumerate() {
                w.write_record([id.as_str(), &(c + 1).to_string(), &t.to_string(), &v.to_string()])
                    .map_err(to_io)?;
            }
        }
        debug_assert_eq!(curve.dim(), curve.components() * t_len);
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels<W: Write>(writer: W, ids: &[String], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LABEL_HEADER).map_err(to_io)?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id, l]).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid_json<W: Write>(mut writer: W, spec: &GridSpec) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, spec).map_err(|e| FdError::Io(e.into()))?;
    writeln!(writer)?;
    Ok(())
}

pub fn write_assignments<W: Write>(writer: W, ids: &[String], clusters: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["curve_id", "cluster"]).map_err(to_io)?;
    for (id, c) in ids.iter().zip(clusters) {
        w.write_record([id.clone(), c.to_string()]).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows follow the report's bar-plot order.
pub fn write_silhouette<W: Write>(writer: W, ids: &[String], report: &SilhouetteReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["curve_id", "cluster", "silhouette"]).map_err(to_io)?;
    for &i in &report.order {
        w.write_record([ids[i].clone(), report.labels[i].to_string(), report.values[i].to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum<W: Write>(writer: W, spectrum: &Spectrum) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "eigenvalue"]).map_err(to_io)?;
    for (k, l) in spectrum.eigenvalues().iter().enumerate() {
        w.write_record([(k + 1).to_string(), l.to_string()]).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["log10_p", "misclassified_proportion", "sd"]).map_err(to_io)?;
    for r in rows {
        w.write_record([r.log10_p.to_string(), r.misclassified_proportion.to_string(), r.sd.to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}
