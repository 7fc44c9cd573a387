use std::io::Read;
use std::path::Path;

use super::Series;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MissingPolicy {
    #[default]
    DropRow,
    ForwardFill,
}

impl std::str::FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "drop-row" | "drop" => Ok(MissingPolicy::DropRow),
            "forward-fill" | "ffill" => Ok(MissingPolicy::ForwardFill),
            other => Err(Error::Config(format!("unknown missing policy '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvOptions {
    pub target: String,
    pub missing: MissingPolicy,
    /// Column names (case-insensitive) skipped during ingestion.
    pub ignore: Vec<String>,
}

impl CsvOptions {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            missing: MissingPolicy::DropRow,
            ignore: ["date", "time", "timestamp", "datetime"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Series> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Ingestion(format!("cannot open {}: {e}", path.display())))?;
    parse_csv(file, opts)
}

/// Parses a headered, comma-separated numeric table.
pub fn parse_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Ingestion("empty file".into()));
    }
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| {
            !opts
                .ignore
                .iter()
                .any(|n| n.eq_ignore_ascii_case(&header[i]))
        })
        .collect();
    let columns: Vec<String> = keep.iter().map(|&i| header[i].to_string()).collect();
    let target = columns
        .iter()
        .position(|c| c == &opts.target)
        .ok_or_else(|| Error::Ingestion(format!("target column '{}' not found", opts.target)))?;

    let mut raw: Vec<(u64, Vec<Option<f64>>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cells = keep
            .iter()
            .map(|&i| {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            })
            .collect();
        raw.push((line, cells));
    }
    if raw.is_empty() {
        return Err(Error::Ingestion("no data rows".into()));
    }
    for (c, name) in columns.iter().enumerate() {
        if raw.iter().all(|(_, cells)| cells[c].is_none()) {
            return Err(Error::Ingestion(format!(
                "column '{name}' is non-numeric (first bad row at line {})",
                raw[0].0
            )));
        }
    }

    let width = columns.len();
    let mut values = Vec::with_capacity(raw.len() * width);
    let mut dropped = 0usize;
    let mut last: Option<Vec<f64>> = None;
    for (line, cells) in &raw {
        match opts.missing {
            MissingPolicy::DropRow => {
                if cells.iter().all(Option::is_some) {
                    values.extend(cells.iter().map(|v| v.unwrap()));
                } else {
                    log::debug!("dropping incomplete row at line {line}");
                    dropped += 1;
                }
            }
            MissingPolicy::ForwardFill => {
                let filled: Option<Vec<f64>> = cells
                    .iter()
                    .enumerate()
                    .map(|(c, v)| v.or_else(|| last.as_ref().map(|l| l[c])))
                    .collect();
                match filled {
                    Some(row) => {
                        values.extend_from_slice(&row);
                        last = Some(row);
                    }
                    None => {
                        log::debug!("dropping leading row at line {line}: nothing to fill from");
                        dropped += 1;
                    }
                }
            }
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} incomplete row(s) dropped");
    }
    if values.is_empty() {
        return Err(Error::Ingestion("no complete rows after missing-value handling".into()));
    }
    Series::new(columns, values, target)
}
