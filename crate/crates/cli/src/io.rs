//! CSV input/output and the JSON result schema.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use crowd_mle::{
    ConfusionMatrix, Dataset, Item, Labels, LogLikelihood, RawResponse, ResponseCounts, WorkerClass,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error(transparent)]
    Core(#[from] crowd_mle::Error),
}

fn read_all(path: &Path) -> Result<String, IoError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })?;
    Ok(text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })
}

/// A CSV data row with its 1-based line number.
type Row = (u64, Vec<String>);

/// Header and data rows of a headed CSV.
fn records(path: &Path) -> Result<(Vec<String>, Vec<Row>), IoError> {
    let text = read_all(path)?;
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |e: csv::Error| IoError::Parse {
        path: name.clone(),
        line: e.position().map_or(1, |p| p.line()),
        message: e.to_string(),
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(parse_err)?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(parse_err)?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(String::from).collect()));
    }
    Ok((header, rows))
}

/// True when the file's header names a worker column (raw rows).
pub fn is_raw(path: &Path) -> Result<bool, IoError> {
    let (header, _) = records(path)?;
    Ok(header.get(1).is_some_and(|h| h == "worker_id"))
}

fn parse_count(path: &Path, line: u64, field: &str) -> Result<u32, IoError> {
    field.parse().map_err(|_| IoError::Parse {
        path: path.display().to_string(),
        line,
        message: format!("`{field}` is not a non-negative integer count"),
    })
}

/// Counts form: `item_id,c1,...,cR` with `c1` the count of the lowest rating.
pub fn read_counts(path: &Path) -> Result<Dataset, IoError> {
    let (header, rows) = records(path)?;
    let name = path.display().to_string();
    if header.len() < 3 || header[0] != "item_id" {
        return Err(IoError::Parse {
            path: name,
            line: 1,
            message: "expected header `item_id,c1,...,cR` with R >= 2".into(),
        });
    }
    let r = header.len() - 1;
    if rows.is_empty() {
        return Err(IoError::Invalid {
            path: name,
            message: "no items".into(),
        });
    }
    let mut items = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != r + 1 {
            return Err(IoError::Parse {
                path: name,
                line,
                message: format!("expected {} fields, found {}", r + 1, fields.len()),
            });
        }
        let counts = fields[1..]
            .iter()
            .map(|f| parse_count(path, line, f))
            .collect::<Result<Vec<u32>, _>>()?;
        items.push(Item::new(
            fields[0].clone(),
            ResponseCounts::from_low_to_high(&counts),
        ));
    }
    Dataset::new(r, items).map_err(|e| IoError::Invalid {
        path: name,
        message: e.to_string(),
    })
}

/// Raw form: `item_id,worker_id,rating[,class]`. The number of ratings is
/// `ratings` when given, otherwise the largest rating seen (at least 2).
pub fn read_raw(path: &Path, ratings: Option<usize>) -> Result<Dataset, IoError> {
    let (header, rows) = records(path)?;
    let name = path.display().to_string();
    let with_class = header.len() == 4;
    if !(header.len() == 3 || with_class) || header[0] != "item_id" || header[1] != "worker_id" {
        return Err(IoError::Parse {
            path: name,
            line: 1,
            message: "expected header `item_id,worker_id,rating[,class]`".into(),
        });
    }
    if rows.is_empty() {
        return Err(IoError::Invalid {
            path: name,
            message: "no responses".into(),
        });
    }
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != header.len() {
            return Err(IoError::Parse {
                path: name,
                line,
                message: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        let rating = parse_count(path, line, &fields[2])? as usize;
        let class = if with_class {
            Some(match fields[3].as_str() {
                "expert" => WorkerClass::Expert,
                "regular" => WorkerClass::Regular,
                other => {
                    return Err(IoError::Parse {
                        path: name,
                        line,
                        message: format!("class `{other}` is neither `expert` nor `regular`"),
                    })
                }
            })
        } else {
            None
        };
        parsed.push((
            line,
            RawResponse {
                item: fields[0].clone(),
                worker: fields[1].clone(),
                rating,
                class,
            },
        ));
    }
    let r = ratings.unwrap_or_else(|| {
        parsed
            .iter()
            .map(|(_, row)| row.rating)
            .max()
            .unwrap_or(2)
            .max(2)
    });
    if let Some((line, row)) = parsed
        .iter()
        .find(|(_, row)| row.rating < 1 || row.rating > r)
    {
        return Err(IoError::Parse {
            path: name,
            line: *line,
            message: format!("rating {} outside 1..={r}", row.rating),
        });
    }
    Dataset::from_raw(r, parsed.into_iter().map(|(_, row)| row).collect()).map_err(|e| {
        IoError::Invalid {
            path: name,
            message: e.to_string(),
        }
    })
}

pub fn read_dataset(path: &Path, ratings: Option<usize>) -> Result<Dataset, IoError> {
    if is_raw(path)? {
        read_raw(path, ratings)
    } else {
        let ds = read_counts(path)?;
        if let Some(r) = ratings.filter(|&r| r != ds.ratings()) {
            return Err(crowd_mle::Error::DimensionMismatch {
                expected: r,
                found: ds.ratings(),
            }
            .into());
        }
        Ok(ds)
    }
}

/// Binary modes print labels as 0/1, rating modes as `1..=R`.
pub fn display_value(binary: bool, rating: u8) -> u32 {
    if binary {
        rating as u32 - 1
    } else {
        rating as u32
    }
}

fn stored_value(binary: bool, value: u32) -> u32 {
    if binary {
        value + 1
    } else {
        value
    }
}

/// Truth file: `item_id,value`, one row per item of `dataset`.
pub fn read_truth(path: &Path, dataset: &Dataset, binary: bool) -> Result<Labels, IoError> {
    let (header, rows) = records(path)?;
    let name = path.display().to_string();
    if header.len() != 2 || header[0] != "item_id" {
        return Err(IoError::Parse {
            path: name,
            line: 1,
            message: "expected header `item_id,value`".into(),
        });
    }
    let mut labels = vec![0u8; dataset.len()];
    for (line, fields) in rows {
        let Some(k) = dataset.position(&fields[0]) else {
            return Err(IoError::Parse {
                path: name,
                line,
                message: format!("unknown item `{}`", fields[0]),
            });
        };
        let v = stored_value(binary, parse_count(path, line, &fields[1])?);
        if v < 1 || v as usize > dataset.ratings() {
            return Err(IoError::Parse {
                path: name,
                line,
                message: format!("value `{}` out of range", fields[1]),
            });
        }
        labels[k] = v as u8;
    }
    if let Some(k) = labels.iter().position(|&v| v == 0) {
        return Err(IoError::Invalid {
            path: name,
            message: format!("no truth for item `{}`", dataset.items()[k].id),
        });
    }
    Ok(Labels(labels))
}

pub fn counts_csv(dataset: &Dataset) -> String {
    let mut out = String::from("item_id");
    for r in 1..=dataset.ratings() {
        out.push_str(&format!(",c{r}"));
    }
    out.push('\n');
    for item in dataset.items() {
        out.push_str(&item.id);
        for v in item.responses.low_to_high() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn raw_csv(rows: &[RawResponse]) -> String {
    let with_class = rows.iter().any(|r| r.class.is_some());
    let mut out = String::from(if with_class {
        "item_id,worker_id,rating,class\n"
    } else {
        "item_id,worker_id,rating\n"
    });
    for row in rows {
        out.push_str(&format!("{},{},{}", row.item, row.worker, row.rating));
        if with_class {
            out.push_str(match row.class {
                Some(WorkerClass::Expert) => ",expert",
                Some(WorkerClass::Regular) => ",regular",
                None => ",",
            });
        }
        out.push('\n');
    }
    out
}

pub fn truth_csv(dataset: &Dataset, truth: &Labels, binary: bool) -> String {
    let mut out = String::from("item_id,value\n");
    for (item, &t) in dataset.items().iter().zip(&truth.0) {
        out.push_str(&format!("{},{}\n", item.id, display_value(binary, t)));
    }
    out
}

/// Natural-log likelihood as a JSON number, or the string `"-inf"`.
pub fn loglik_json(ll: LogLikelihood) -> Value {
    if ll.value() == f64::NEG_INFINITY {
        Value::String("-inf".into())
    } else {
        serde_json::Number::from_f64(ll.value()).map_or(Value::Null, Value::Number)
    }
}

pub fn loglik_from_json(v: &Value) -> Option<LogLikelihood> {
    match v {
        Value::String(s) if s == "-inf" => Some(LogLikelihood::IMPOSSIBLE),
        Value::Number(n) => n.as_f64().map(LogLikelihood),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub item_id: String,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub e0: f64,
    pub e1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fraction_incorrect: f64,
    pub distance_weighted: f64,
}

/// Output of `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub schema_version: u32,
    pub mode: String,
    pub algorithm: String,
    #[serde(rename = "R")]
    pub ratings: usize,
    pub mapping: Vec<MappingEntry>,
    /// Row-major: `matrix[i][j]` is the chance of answer `i + 1` given truth `j + 1`.
    pub matrix: Vec<Vec<f64>>,
    pub undefined_columns: Vec<bool>,
    pub error_rates: Option<ErrorRates>,
    pub regular_matrix: Option<Vec<Vec<f64>>>,
    pub regular_error_rates: Option<ErrorRates>,
    pub log_likelihood: Value,
    pub candidates_evaluated: Option<u64>,
    pub iterations: Option<usize>,
    pub metrics: Option<Metrics>,
    pub config: Value,
}

pub fn error_rates(p: &ConfusionMatrix) -> Option<ErrorRates> {
    p.error_rates().map(|(e0, e1)| ErrorRates { e0, e1 })
}

pub fn read_result(path: &Path) -> Result<ResultJson, IoError> {
    serde_json::from_str(&read_all(path)?).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub schema_version: u32,
    #[serde(rename = "R")]
    pub ratings: usize,
    pub matrix: Vec<Vec<f64>>,
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn counts_round_trip() {
        let f = file("item_id,c1,c2\nI1,0,3\nI2,2,1\n");
        let ds = read_counts(f.path()).unwrap();
        assert_eq!(ds.items()[0].responses, ResponseCounts::binary(3, 0));
        assert_eq!(counts_csv(&ds), "item_id,c1,c2\nI1,0,3\nI2,2,1\n");
    }

    #[test]
    fn errors_name_the_line() {
        let f = file("item_id,c1,c2\nI1,0,3\nI2,x,1\n");
        let msg = read_counts(f.path()).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let empty = file("item_id,c1,c2\n");
        assert!(matches!(
            read_counts(empty.path()),
            Err(IoError::Invalid { .. })
        ));
    }

    #[test]
    fn raw_with_classes() {
        let f = file("item_id,worker_id,rating,class\na,w1,2,expert\na,w2,1,regular\n");
        assert!(is_raw(f.path()).unwrap());
        let ds = read_raw(f.path(), None).unwrap();
        assert_eq!(ds.ratings(), 2);
        assert_eq!(ds.items()[0].responses, ResponseCounts::binary(1, 1));
        let bad = file("item_id,worker_id,rating,class\na,w1,2,boss\n");
        assert!(read_raw(bad.path(), None)
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }

    #[test]
    fn loglik_tokens() {
        assert_eq!(
            loglik_json(LogLikelihood::IMPOSSIBLE),
            Value::String("-inf".into())
        );
        let v = loglik_json(LogLikelihood(-1.25));
        assert_eq!(loglik_from_json(&v), Some(LogLikelihood(-1.25)));
    }
}
