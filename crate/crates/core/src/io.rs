//! CSV formats.
//!
//! * Samples: one row per sample, `D` float columns. A first row containing
//!   any non-numeric token is treated as a header.
//! * PCA model: header `block,c0,...`, then a `mean` row, a `spectrum` row
//!   and `d` rows labeled `basis`, each holding `D` values.
//! * Activation dump: header `cond,f0,...,f{D-1}`, integer condition id per row.
//!
//! Floats are written with the shortest representation that parses back to
//! the same value. Files use `,` delimiters and LF line endings.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pca::PcaModel;
use crate::sample::SampleMatrix;

/// Formats a float so that it parses back exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(None)
        .from_reader(r)
}

pub(crate) fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::InvalidData(format!("cannot open {}: {e}", path.display())))
}

/// Reads a sample CSV.
pub fn read_samples_from<R: Read>(r: R) -> Result<SampleMatrix> {
    let mut rows = Vec::new();
    let mut dim = None;
    for (line, record) in reader(r).records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Option<Vec<f64>> = record.iter().map(parse_f64).collect();
        match parsed {
            Some(v) => {
                if *dim.get_or_insert(v.len()) != v.len() {
                    return Err(Error::InvalidData(format!(
                        "row {} has {} columns, expected {}",
                        line + 1,
                        v.len(),
                        dim.unwrap_or(0)
                    )));
                }
                rows.extend(v);
            }
            None if line == 0 => {}
            None => {
                return Err(Error::InvalidData(format!(
                    "row {} has a non-numeric value",
                    line + 1
                )));
            }
        }
    }
    let dim = dim.ok_or_else(|| Error::InvalidData("sample file has no data rows".into()))?;
    SampleMatrix::from_columns(dim, rows)
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    read_samples_from(open(path.as_ref())?)
}

fn feature_header(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("f{k}")).collect()
}

/// Writes samples with an `f0,...,f{D-1}` header.
pub fn write_samples_to<W: Write>(w: W, samples: &SampleMatrix) -> Result<()> {
    let mut out = writer(w);
    out.write_record(feature_header(samples.dim()))?;
    for x in samples.samples() {
        out.write_record(x.iter().map(|&v| fmt_f64(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_samples(path: impl AsRef<Path>, samples: &SampleMatrix) -> Result<()> {
    write_samples_to(File::create(path)?, samples)
}

pub fn write_pca_model_to<W: Write>(w: W, model: &PcaModel) -> Result<()> {
    let mut out = writer(w);
    let dim = model.ambient_dim;
    let mut header = vec!["block".to_string()];
    header.extend((0..dim).map(|k| format!("c{k}")));
    out.write_record(&header)?;
    let row = |label: &str, values: &mut dyn Iterator<Item = f64>| {
        std::iter::once(label.to_string())
            .chain(values.map(fmt_f64))
            .collect::<Vec<String>>()
    };
    out.write_record(row("mean", &mut model.mean.iter().copied()))?;
    out.write_record(row("spectrum", &mut model.spectrum.iter().copied()))?;
    for col in model.basis.column_iter() {
        out.write_record(row("basis", &mut col.iter().copied()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pca_model(path: impl AsRef<Path>, model: &PcaModel) -> Result<()> {
    write_pca_model_to(File::create(path)?, model)
}

pub fn read_pca_model_from<R: Read>(r: R) -> Result<PcaModel> {
    let mut mean = None;
    let mut spectrum = None;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader(r).records().enumerate() {
        let record = record?;
        let label = record.get(0).unwrap_or("");
        if line == 0 && label == "block" {
            continue;
        }
        let values: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|f| {
                parse_f64(f).ok_or_else(|| {
                    Error::InvalidData(format!("bad number {f:?} on row {}", line + 1))
                })
            })
            .collect::<Result<_>>()?;
        match label {
            "mean" => mean = Some(values),
            "spectrum" => spectrum = Some(values),
            "basis" => basis.push(values),
            other => return Err(Error::InvalidData(format!("unknown block {other:?}"))),
        }
    }
    let mean = mean.ok_or_else(|| Error::InvalidData("missing mean row".into()))?;
    let spectrum = spectrum.ok_or_else(|| Error::InvalidData("missing spectrum row".into()))?;
    let dim = mean.len();
    if basis.is_empty() || basis.iter().any(|b| b.len() != dim) || spectrum.len() != dim {
        return Err(Error::InvalidData("inconsistent PCA model rows".into()));
    }
    let d = basis.len();
    let basis = DMatrix::from_vec(dim, d, basis.concat());
    PcaModel::from_parts(basis, spectrum, DVector::from_vec(mean))
}

pub fn read_pca_model(path: impl AsRef<Path>) -> Result<PcaModel> {
    read_pca_model_from(open(path.as_ref())?)
}

/// Rows of an activation dump, in file order.
#[derive(Debug, Clone)]
pub struct ActivationDump {
    pub conditions: Vec<i64>,
    pub features: SampleMatrix,
}

pub fn read_activation_dump_from<R: Read>(r: R) -> Result<ActivationDump> {
    let mut records = reader(r).into_records();
    let header = records
        .next()
        .ok_or_else(|| Error::InvalidData("activation dump is empty".into()))??;
    let cond_col = header
        .iter()
        .position(|h| h == "cond")
        .ok_or_else(|| Error::InvalidData("activation dump has no `cond` column".into()))?;
    let dim = header.len() - 1;
    if dim == 0 {
        return Err(Error::InvalidData(
            "activation dump has no feature columns".into(),
        ));
    }
    let mut conditions = Vec::new();
    let mut values = Vec::new();
    for (line, record) in records.enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::InvalidData(format!(
                "row {} has {} fields, header has {}",
                line + 2,
                record.len(),
                header.len()
            )));
        }
        for (k, field) in record.iter().enumerate() {
            if k == cond_col {
                let c = field.parse::<i64>().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}: condition id {field:?} is not an integer",
                        line + 2
                    ))
                })?;
                conditions.push(c);
            } else {
                values.push(parse_f64(field).ok_or_else(|| {
                    Error::InvalidData(format!("row {}: bad number {field:?}", line + 2))
                })?);
            }
        }
    }
    if conditions.is_empty() {
        return Err(Error::InvalidData("activation dump has no rows".into()));
    }
    Ok(ActivationDump {
        conditions,
        features: SampleMatrix::from_columns(dim, values)?,
    })
}

pub fn read_activation_dump(path: impl AsRef<Path>) -> Result<ActivationDump> {
    read_activation_dump_from(open(path.as_ref())?)
}

pub fn write_activation_dump_to<W: Write>(
    w: W,
    conditions: &[i64],
    features: &SampleMatrix,
) -> Result<()> {
    if conditions.len() != features.count() {
        return Err(Error::InvalidData(
            "one condition id per row required".into(),
        ));
    }
    let mut out = writer(w);
    let mut header = vec!["cond".to_string()];
    header.extend(feature_header(features.dim()));
    out.write_record(&header)?;
    for (c, x) in conditions.iter().zip(features.samples()) {
        let mut row = vec![c.to_string()];
        row.extend(x.iter().map(|&v| fmt_f64(v)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_activation_dump(
    path: impl AsRef<Path>,
    conditions: &[i64],
    features: &SampleMatrix,
) -> Result<()> {
    write_activation_dump_to(File::create(path)?, conditions, features)
}
