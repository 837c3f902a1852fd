use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{is_missing, Dataset, MISSING};
use crate::error::{Error, Result};

/// Column mapping for CSV ingestion. Every column not named here is a feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub id_column: String,
    /// When absent, timestamps are the row positions 0..n.
    pub timestamp_column: Option<String>,
    pub label_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id_column: "Id".into(),
            timestamp_column: Some("ts".into()),
            label_column: "Response".into(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Integrity("empty file".into()));
    }

    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("header lacks column `{name}`") })
    };
    let id_col = find(&schema.id_column)?;
    let label_col = find(&schema.label_column)?;
    let ts_col = schema.timestamp_column.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != id_col && c != label_col && Some(c) != ts_col)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut ids = Vec::new();
    let mut timestamps = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut seen = HashSet::new();

    for (row_no, record) in rdr.records().enumerate() {
        // header is line 1
        let line = row_no + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        let id: u64 = record[id_col]
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad id `{}`", &record[id_col]) })?;
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id));
        }
        let ts = match ts_col {
            Some(c) => parse_finite(&record[c], line, "timestamp")?,
            None => row_no as f64,
        };
        let label = match record[label_col].trim() {
            "0" => 0,
            "1" => 1,
            "" => {
                return Err(Error::Parse { line, msg: "missing label".into() });
            }
            other => {
                return Err(Error::Parse { line, msg: format!("label `{other}` is not 0/1") });
            }
        };
        for &c in &feature_cols {
            let cell = record[c].trim();
            let v = if cell.is_empty() { MISSING } else { parse_finite(cell, line, &header[c])? };
            features.push(v);
        }
        ids.push(id);
        timestamps.push(ts);
        labels.push(label);
    }

    if ids.is_empty() {
        return Err(Error::Integrity("file has no data rows".into()));
    }
    Dataset::new(ids, timestamps, features, labels, feature_names)
}

fn parse_finite(cell: &str, line: usize, column: &str) -> Result<f64> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { line, msg: format!("column `{column}`: `{cell}` is not a finite number") }),
    }
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(line);
    Error::Parse { line, msg: e.to_string() }
}

/// Writes `Id,ts,<features>,Response` with shortest round-trip decimals and
/// empty cells for missing values.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["Id".to_string(), "ts".to_string()];
    header.extend(d.feature_names().iter().cloned());
    header.push("Response".into());
    w.write_record(&header).map_err(|e| csv_error(e, 1))?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..d.n_samples() {
        rec.clear();
        rec.push(d.ids()[i].to_string());
        rec.push(d.timestamps()[i].to_string());
        rec.extend(d.row(i).iter().map(|v| if is_missing(*v) { String::new() } else { v.to_string() }));
        rec.push(d.labels()[i].to_string());
        w.write_record(&rec).map_err(|e| csv_error(e, i + 2))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<Dataset> {
        read_csv(s.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn loads_three_rows() {
        let d = read("Id,ts,a,b,Response\n1,0,1.5,2,0\n2,1,,3e2,1\n3,2,4,5,0\n").unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.ids(), &[1, 2, 3]);
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert!(is_missing(d.value(1, 0)));
        assert_eq!(d.value(1, 1), 300.0);
    }

    #[test]
    fn duplicate_id_is_named() {
        let err = read("Id,ts,a,Response\n7,0,1,0\n7,1,2,1\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateId(7)));
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn bad_cell_reports_line() {
        let err = read("Id,ts,a,Response\n1,0,1,0\n2,1,abc,1\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_inputs_are_integrity_errors() {
        assert!(matches!(read(""), Err(Error::Integrity(_))));
        assert!(matches!(read("Id,ts,a,Response\n"), Err(Error::Integrity(_))));
    }

    #[test]
    fn non_binary_label_rejected() {
        assert!(matches!(read("Id,ts,a,Response\n1,0,1,2\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn schema_without_timestamp_uses_row_positions() {
        let schema = CsvSchema { timestamp_column: None, ..CsvSchema::default() };
        let d = read_csv("Id,a,Response\n5,1,0\n9,2,1\n".as_bytes(), &schema).unwrap();
        assert_eq!(d.timestamps(), &[0.0, 1.0]);
    }

    #[test]
    fn write_then_read_is_canonical() {
        let text = "Id,ts,a,b,Response\n1,0,1.5,,0\n2,1,0.1,-3,1\n";
        let d = read(text).unwrap();
        let mut out = Vec::new();
        write_csv(&d, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
