use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::regularizers::Method;

pub const RESULTS_HEADER: [&str; 11] = [
    "dataset",
    "model",
    "method",
    "seq_len",
    "trial",
    "seed",
    "mae",
    "runtime_ms",
    "peak_mem_bytes",
    "final_sparsity",
    "status",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialStatus {
    Ok,
    /// Non-finite loss or activation during training or evaluation.
    Diverged,
    /// Any other failure of the cell.
    Error,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Diverged => "diverged",
            TrialStatus::Error => "error",
        }
    }
}

impl std::str::FromStr for TrialStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(TrialStatus::Ok),
            "diverged" => Ok(TrialStatus::Diverged),
            "error" => Ok(TrialStatus::Error),
            other => Err(Error::Config(format!("unknown status '{other}'"))),
        }
    }
}

/// One line of the results CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub model: String,
    pub method: Method,
    pub seq_len: usize,
    pub trial: usize,
    pub seed: u64,
    pub mae: Option<f64>,
    pub runtime_ms: f64,
    pub peak_mem_bytes: u64,
    pub final_sparsity: Option<f64>,
    pub status: TrialStatus,
}

pub type CellKey = (String, String, Method, usize, usize);

impl ResultRow {
    pub fn key(&self) -> CellKey {
        (
            self.dataset.clone(),
            self.model.clone(),
            self.method,
            self.seq_len,
            self.trial,
        )
    }

    fn record(&self) -> [String; 11] {
        [
            self.dataset.clone(),
            self.model.clone(),
            self.method.to_string(),
            self.seq_len.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            self.mae.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.3}", self.runtime_ms),
            self.peak_mem_bytes.to_string(),
            self.final_sparsity.map(|v| format!("{v:.6}")).unwrap_or_default(),
            self.status.as_str().to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, row: usize) -> Result<Self> {
        let perr = |msg: String| Error::Parse { row, msg };
        if rec.len() != RESULTS_HEADER.len() {
            return Err(perr(format!(
                "expected {} fields, found {}",
                RESULTS_HEADER.len(),
                rec.len()
            )));
        }
        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T> {
            rec[i].trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("invalid {} '{}'", RESULTS_HEADER[i], &rec[i]),
            })
        }
        fn opt(rec: &csv::StringRecord, i: usize, row: usize) -> Result<Option<f64>> {
            if rec[i].trim().is_empty() {
                Ok(None)
            } else {
                field(rec, i, row).map(Some)
            }
        }
        Ok(Self {
            dataset: rec[0].to_string(),
            model: rec[1].to_string(),
            method: rec[2]
                .parse()
                .map_err(|_| perr(format!("invalid method '{}'", &rec[2])))?,
            seq_len: field(rec, 3, row)?,
            trial: field(rec, 4, row)?,
            seed: field(rec, 5, row)?,
            mae: opt(rec, 6, row)?,
            runtime_ms: field(rec, 7, row)?,
            peak_mem_bytes: field(rec, 8, row)?,
            final_sparsity: opt(rec, 9, row)?,
            status: rec[10]
                .trim()
                .parse()
                .map_err(|_| perr(format!("invalid status '{}'", &rec[10])))?,
        })
    }
}

/// Appends rows to a results CSV, one flush per row.
pub(crate) struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RowWriter<W> {
    pub fn new(w: W, header: bool) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if header {
            inner.write_record(RESULTS_HEADER)?;
            inner.flush()?;
        }
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        self.inner.write_record(row.record())?;
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(rows: Vec<ResultRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Canonical order: dataset, model, method, sequence length, trial.
    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| r.key());
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = RowWriter::new(w, true)?;
        for r in &self.rows {
            out.write(r)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Writes via a temporary file and rename, so readers never see a
    /// half-written table.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("csv.tmp");
        {
            let f = std::fs::File::create(&tmp)?;
            self.write_csv(std::io::BufWriter::new(f))?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::parse(f)
    }

    /// Parses a results CSV; errors name the 1-based data row.
    pub fn parse<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(h) => h?,
            None => {
                return Err(Error::Parse {
                    row: 0,
                    msg: "empty results file".into(),
                })
            }
        };
        if header.iter().map(str::trim).ne(RESULTS_HEADER.iter().copied()) {
            return Err(Error::Parse {
                row: 0,
                msg: format!("header must be '{}'", RESULTS_HEADER.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                row: i + 1,
                msg: e.to_string(),
            })?;
            if rec.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            rows.push(ResultRow::from_record(&rec, i + 1)?);
        }
        Ok(Self { rows })
    }
}
