//! File formats: CSV datasets and result tables, versioned JSON documents.
//!
//! Dataset CSVs have a header `x1,…,x{n_p},y` with an optional trailing
//! `label` column holding one-based class numbers. Missing values in result
//! tables are written as `NA`. Every JSON document carries `"schema": 1`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::Dataset;
use crate::study::{ComparisonTable, MonteCarloReport, SurfacePoint};

pub const SCHEMA_VERSION: u32 = 1;

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let has_label = header.last().is_some_and(|h| h == "label");
    let n_cols = header.len() - usize::from(has_label);
    if n_cols < 2 {
        return Err(Error::Parse("header needs at least one input column and y".into()));
    }
    let n_p = n_cols - 1;
    for (j, h) in header[..n_p].iter().enumerate() {
        if *h != format!("x{}", j + 1) {
            return Err(Error::Parse(format!("column {} is `{h}`, expected `x{}`", j + 1, j + 1)));
        }
    }
    if header[n_p] != "y" {
        return Err(Error::Parse(format!("column {} is `{}`, expected `y`", n_p + 1, header[n_p])));
    }
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = line + 2;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {row}, column `{}`: `{}` is not a number", header[j], &rec[j])))
        };
        inputs.extend((0..n_p).map(num).collect::<Result<Vec<_>>>()?);
        outputs.push(num(n_p)?);
        if has_label {
            let l: usize = rec[n_p + 1]
                .parse()
                .ok()
                .filter(|&l: &usize| l >= 1)
                .ok_or_else(|| Error::Parse(format!("row {row}: label `{}` is not a positive integer", &rec[n_p + 1])))?;
            labels.push(l - 1);
        }
    }
    if outputs.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let data = Dataset::new(DenseMatrix::from_vec(outputs.len(), n_p, inputs)?, outputs)?;
    if has_label {
        data.with_labels(labels)
    } else {
        Ok(data)
    }
}

pub fn write_dataset<W: Write>(writer: W, data: &Dataset<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.n_inputs()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if data.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.input(i).iter().map(f64::to_string).collect();
        rec.push(data.outputs()[i].to_string());
        if let Some(l) = data.labels() {
            rec.push((l[i] + 1).to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset<f64>> {
    read_dataset(File::open(path)?)
}

pub fn write_dataset_file(path: &Path, data: &Dataset<f64>) -> Result<()> {
    write_dataset(File::create(path)?, data)
}

/// Pretty JSON of `value` with a leading `"schema"` field. `value` must
/// serialize to an object.
pub fn to_json_document<T: Serialize>(value: &T) -> Result<String> {
    let body = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    let Value::Object(fields) = body else {
        return Err(Error::Invalid("only objects can be written as documents".into()));
    };
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), Value::from(SCHEMA_VERSION));
    doc.extend(fields);
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parses a document written by [`to_json_document`], checking the schema version.
pub fn from_json_document<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| Error::Parse("document is not a JSON object".into()))?;
    let found = obj
        .remove("schema")
        .ok_or_else(|| Error::Parse("document has no `schema` field".into()))?;
    let found = found
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::Parse(format!("`schema` must be an integer, got {found}")))?;
    if found != SCHEMA_VERSION {
        return Err(Error::Schema {
            expected: SCHEMA_VERSION,
            found,
        });
    }
    serde_json::from_value(doc).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_document(value)?)?;
    Ok(())
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json_document(&std::fs::read_to_string(path)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn write_rows<W: Write>(writer: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(writer: W, table: &ComparisonTable) -> Result<()> {
    write_rows(
        writer,
        &["method", "train_rmse", "test_rmse", "t_comp", "continuity", "milp_status", "milp_gap", "error"],
        table.rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                opt(r.train_rmse),
                opt(r.test_rmse),
                opt(r.t_comp_s),
                r.continuity_ok.map_or("NA".into(), |ok| if ok { "pass" } else { "fail" }.into()),
                r.milp_status.map_or("NA".into(), |s| format!("{s:?}")),
                opt(r.milp_gap),
                r.error.clone().unwrap_or_else(|| "NA".into()),
            ]
        }),
    )
}

/// Long format: one line per run, method and split.
pub fn write_montecarlo_csv<W: Write>(writer: W, report: &MonteCarloReport) -> Result<()> {
    write_rows(
        writer,
        &["run", "method", "split", "rmse", "t_comp"],
        report.records.iter().map(|r| {
            vec![
                r.run.to_string(),
                r.method.to_string(),
                r.split.name().to_string(),
                r.rmse.to_string(),
                opt(r.t_comp_s),
            ]
        }),
    )
}

/// Outliers are `;`-separated within their field.
pub fn write_boxplot_csv<W: Write>(writer: W, report: &MonteCarloReport) -> Result<()> {
    write_rows(
        writer,
        &["method", "split", "n", "q1", "median", "q3", "outliers", "failures"],
        report.boxplots.iter().map(|b| {
            let failures = report.failures.iter().find(|(m, _)| *m == b.method).map_or(0, |f| f.1);
            vec![
                b.method.to_string(),
                b.split.name().to_string(),
                b.n.to_string(),
                b.q1.to_string(),
                b.median.to_string(),
                b.q3.to_string(),
                b.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                failures.to_string(),
            ]
        }),
    )
}

/// Regions are written one-based.
pub fn write_surface_csv<W: Write>(writer: W, points: &[SurfacePoint]) -> Result<()> {
    write_rows(
        writer,
        &["method", "p_norm", "t_norm", "region", "prediction", "truth"],
        points.iter().map(|p| {
            vec![
                p.method.to_string(),
                p.p_norm.to_string(),
                p.t_norm.to_string(),
                (p.region + 1).to_string(),
                p.prediction.to_string(),
                p.truth.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AffineModel, Scaler, SensorModel};

    #[test]
    fn dataset_round_trip_is_byte_identical() {
        let text = "x1,x2,y,label\n0.1,0.25,0.3333333333333333,1\n1e-7,1,0,2\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(d.labels().unwrap(), &[0, 1]);
        let mut out = Vec::new();
        write_dataset(&mut out, &d).unwrap();
        let again = read_dataset(out.as_slice()).unwrap();
        let mut out2 = Vec::new();
        write_dataset(&mut out2, &again).unwrap();
        assert_eq!(out, out2);
        assert_eq!(d, again);
    }

    #[test]
    fn bad_csv_names_the_problem() {
        let e = read_dataset("x1,z\n1,2\n".as_bytes()).unwrap_err().to_string();
        assert!(e.contains("expected `y`"), "{e}");
        let e = read_dataset("x1,y\n1,abc\n".as_bytes()).unwrap_err().to_string();
        assert!(e.contains("row 2"), "{e}");
        let e = read_dataset("x1,y,label\n1,2,0\n".as_bytes()).unwrap_err().to_string();
        assert!(e.contains("label"), "{e}");
    }

    #[test]
    fn sensor_document_round_trip() {
        let s = SensorModel::single(AffineModel::new(vec![0.5, -0.25], 0.1), Scaler::identity(2)).unwrap();
        let text = to_json_document(&s).unwrap();
        assert!(text.starts_with("{\n  \"schema\": 1,"));
        let back: SensorModel<f64> = from_json_document(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(to_json_document(&back).unwrap(), text);
    }

    #[test]
    fn schema_mismatch_reports_versions() {
        let s = SensorModel::single(AffineModel::new(vec![1.0], 0.0), Scaler::identity(1)).unwrap();
        let text = to_json_document(&s).unwrap().replace("\"schema\": 1", "\"schema\": 7");
        match from_json_document::<SensorModel<f64>>(&text) {
            Err(Error::Schema { expected: 1, found: 7 }) => {}
            other => panic!("{other:?}"),
        }
    }
}
