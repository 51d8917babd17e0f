//! CSV point ingestion: `x,y` rows with an optional header and an optional
//! `label` column of `case` / `control`.

use std::io::Read;
use std::path::Path;

use levelset::{Point, PointCloud};
use serde::{Deserialize, Serialize};

use crate::config::ClassFilter;
use crate::error::{CliError, Result};

/// Coordinates beyond this magnitude are reported: geometric tolerances are
/// relative to the data extent and lose meaning there.
pub const COORD_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Case,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rows: usize,
    pub header: bool,
    pub duplicate_count: usize,
    pub out_of_range: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub points: Vec<Point>,
    /// One label per point when the file has a label column.
    pub labels: Option<Vec<Class>>,
    pub diagnostics: Diagnostics,
}

impl Ingested {
    /// The cloud selected by `filter`; labelled filters need a label column.
    pub fn cloud(&self, filter: ClassFilter) -> Result<PointCloud> {
        let want = match filter {
            ClassFilter::All => None,
            ClassFilter::Case => Some(Class::Case),
            ClassFilter::Control => Some(Class::Control),
        };
        let pts: Vec<Point> = match (want, &self.labels) {
            (None, _) => self.points.clone(),
            (Some(_), None) => {
                return Err(CliError::Config(
                    "--class needs a label column (case/control) in the input".into(),
                ));
            }
            (Some(c), Some(labels)) => self
                .points
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == c)
                .map(|(p, _)| *p)
                .collect(),
        };
        if pts.is_empty() {
            return Err(CliError::Config(format!("no rows of class {filter:?} in the input")));
        }
        Ok(PointCloud::new(pts)?)
    }

    pub fn cases(&self) -> Result<PointCloud> {
        self.cloud(ClassFilter::Case)
    }

    pub fn controls(&self) -> Result<PointCloud> {
        self.cloud(ClassFilter::Control)
    }
}

pub fn ingest_csv(path: &Path) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, &path.display().to_string())
}

/// Parses CSV from any reader; `name` labels error messages.
pub fn ingest_reader<R: Read>(mut reader: R, name: &str) -> Result<Ingested> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| CliError::io(name, e))?;
    // the csv reader's own line counter skips blank lines, and a record's
    // byte offset can point at blank or comment lines before it
    let newlines: Vec<usize> = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i).collect();
    let line_of = |pos: Option<&csv::Position>| {
        let Some(p) = pos else { return 0 };
        let mut at = p.byte() as usize;
        while at < bytes.len() && matches!(bytes[at], b'\n' | b'\r' | b'#') {
            if bytes[at] == b'#' {
                at = newlines.iter().find(|&&i| i >= at).map_or(bytes.len(), |&i| i + 1);
            } else {
                at += 1;
            }
        }
        newlines.partition_point(|&i| i < at) as u64 + 1
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());
    let err = |line: u64, reason: String| CliError::Csv {
        path: name.to_string(),
        line,
        reason,
    };
    let mut points = Vec::new();
    let mut labels: Vec<Class> = Vec::new();
    let mut columns: Option<(usize, usize, Option<usize>)> = None;
    let mut header = false;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| err(line_of(e.position()), e.to_string()))?;
        if !more {
            break;
        }
        let line = line_of(record.position());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let cols = match columns {
            Some(c) => c,
            None => {
                let c = if record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                    header = true;
                    header_columns(&record).map_err(|r| err(line, r))?
                } else {
                    (0, 1, (record.len() >= 3).then_some(2))
                };
                columns = Some(c);
                if header {
                    continue;
                }
                c
            }
        };
        let field = |i: usize| record.get(i).ok_or_else(|| err(line, format!("missing column {}", i + 1)));
        let num = |i: usize| -> Result<f64> {
            let s = field(i)?;
            let v: f64 = s.parse().map_err(|_| err(line, format!("`{s}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite coordinate `{s}`")));
            }
            Ok(v)
        };
        points.push(Point::new(num(cols.0)?, num(cols.1)?));
        if let Some(li) = cols.2 {
            let raw = field(li)?;
            let class = match raw.to_ascii_lowercase().as_str() {
                "case" => Class::Case,
                "control" => Class::Control,
                _ => return Err(err(line, format!("label `{raw}` is neither case nor control"))),
            };
            labels.push(class);
        } else if record.len() > 2 {
            return Err(err(line, format!("expected 2 columns, found {}", record.len())));
        }
    }
    if points.is_empty() {
        return Err(CliError::Csv {
            path: name.to_string(),
            line: 0,
            reason: "no data rows".into(),
        });
    }
    let cloud = PointCloud::new(points.clone())?;
    let diagnostics = Diagnostics {
        rows: points.len(),
        header,
        duplicate_count: cloud.duplicate_count(),
        out_of_range: points
            .iter()
            .filter(|p| p.x.abs() > COORD_LIMIT || p.y.abs() > COORD_LIMIT)
            .count(),
    };
    Ok(Ingested {
        labels: columns.and_then(|c| c.2).map(|_| labels),
        points,
        diagnostics,
    })
}

/// Column positions of `x`, `y` and `label` from a header row.
fn header_columns(rec: &csv::StringRecord) -> std::result::Result<(usize, usize, Option<usize>), String> {
    let find = |name: &str| rec.iter().position(|f| f.eq_ignore_ascii_case(name));
    match (find("x"), find("y")) {
        (Some(x), Some(y)) => Ok((x, y, find("label"))),
        _ if rec.len() >= 2 => Ok((0, 1, (rec.len() >= 3).then_some(2))),
        _ => Err(format!("header needs at least two columns, found {}", rec.len())),
    }
}
