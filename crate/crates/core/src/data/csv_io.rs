//! CSV ingestion and export.
//!
//! Schema: header `f0,...,f{k-1},label`, one numeric row per sample,
//! integral labels. Floats are written in shortest round-trip form, so
//! save followed by load reproduces the dataset exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{LabeledDataset, Sample};

/// Writes a dataset to `path` in the fixed schema.
pub fn save_csv<S: Scalar>(ds: &LabeledDataset<S>, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);

    let header: Vec<String> = (0..ds.dim())
        .map(|i| format!("f{i}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;

    for sample in ds.iter() {
        for value in &sample.features {
            write!(out, "{value},")?;
        }
        writeln!(out, "{}", sample.label)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a dataset from `path`, validating the header and every row.
/// The class count is inferred as `max label + 1`.
pub fn load_csv<S: Scalar>(path: impl AsRef<Path>) -> Result<LabeledDataset<S>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_open_error)?;

    let headers = reader.headers().map_err(csv_open_error)?.clone();
    let dim = validate_header(&headers)?;

    let mut samples = Vec::new();
    let mut max_label = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::CsvParse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);

        if record.len() != dim + 1 {
            return Err(Error::CsvSchema {
                line,
                message: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }

        let mut features = Vec::with_capacity(dim);
        for (col, field) in record.iter().take(dim).enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::CsvParse {
                line,
                message: format!("field f{col} is not a number: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    line,
                    message: format!("field f{col} is not finite: {field:?}"),
                });
            }
            features.push(S::from_f64_lossy(value));
        }

        let label_field = &record[dim];
        let label: usize = label_field
            .parse::<i64>()
            .ok()
            .and_then(|v| if v >= 0 { Some(v as usize) } else { None })
            .ok_or_else(|| Error::CsvParse {
                line,
                message: format!("label is not a non-negative integer: {label_field:?}"),
            })?;
        max_label = max_label.max(label);
        samples.push(Sample::new(features, label));
    }

    if samples.is_empty() {
        return Err(Error::CsvSchema {
            line: 1,
            message: "file contains a header but no samples".into(),
        });
    }
    LabeledDataset::new(samples, max_label + 1)
}

fn validate_header(headers: &csv::StringRecord) -> Result<usize> {
    let n = headers.len();
    if n < 2 || &headers[n - 1] != "label" {
        return Err(Error::CsvSchema {
            line: 1,
            message: "header must be f0,...,f{k-1},label".into(),
        });
    }
    for (i, name) in headers.iter().take(n - 1).enumerate() {
        if name != format!("f{i}") {
            return Err(Error::CsvSchema {
                line: 1,
                message: format!("expected header field f{i}, found {name:?}"),
            });
        }
    }
    Ok(n - 1)
}

fn csv_open_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                Error::Io(io)
            } else {
                unreachable!()
            }
        }
        _ => Error::CsvParse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("ltu-csv-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn wrong_arity_row_reports_its_line() {
        let path = write_temp("arity.csv", "f0,f1,label\n1.0,2.0,0\n1.0,1\n");
        let err = load_csv::<f64>(&path).unwrap_err();
        match err {
            Error::CsvSchema { line, .. } => assert_eq!(line, 3),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_integer_label_is_a_parse_error() {
        let path = write_temp("label.csv", "f0,label\n1.0,0\n2.0,1.5\n");
        let err = load_csv::<f64>(&path).unwrap_err();
        match err {
            Error::CsvParse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("label"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let path = write_temp("header.csv", "x,y,label\n1.0,2.0,0\n");
        assert!(matches!(
            load_csv::<f64>(&path).unwrap_err(),
            Error::CsvSchema { line: 1, .. }
        ));
    }

    #[test]
    fn non_numeric_feature_is_a_parse_error() {
        let path = write_temp("feature.csv", "f0,label\nabc,0\n");
        assert!(matches!(
            load_csv::<f64>(&path).unwrap_err(),
            Error::CsvParse { line: 2, .. }
        ));
    }
}
