//! Time-series ingestion and dataset construction.

mod ingest;
mod synth;
mod window;

pub use ingest::{load_csv, parse_csv, CsvOptions, MissingPolicy};
pub use synth::{synth_series, SynthKind};
pub use window::{
    chronological_split, fit_scale, fit_scale_rows, make_windows, prepare, split_sizes,
    PreparedData, ScalerStats, WindowedDataset,
};

use std::path::PathBuf;

use crate::error::{Error, Result};

/// A numeric table, rows in ascending time order.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    columns: Vec<String>,
    values: Vec<f64>,
    target: usize,
}

impl Series {
    /// `values` is row-major with `columns.len()` entries per row.
    pub fn new(columns: Vec<String>, values: Vec<f64>, target: usize) -> Result<Self> {
        if columns.is_empty() || values.len() % columns.len() != 0 {
            return Err(Error::Ingestion(format!(
                "{} values do not fill rows of {} columns",
                values.len(),
                columns.len()
            )));
        }
        if target >= columns.len() {
            return Err(Error::Ingestion(format!("target index {target} out of range")));
        }
        Ok(Self {
            columns,
            values,
            target,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.columns.len()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn target_name(&self) -> &str {
        &self.columns[self.target]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.n_cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols() + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, c)).collect()
    }
}

/// Where a trial's data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Csv {
        path: PathBuf,
        options: CsvOptions,
    },
    Synthetic {
        kind: SynthKind,
        length: usize,
        features: usize,
        noise: f64,
        seed: u64,
    },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Series> {
        match self {
            DatasetSpec::Csv { path, options } => load_csv(path, options),
            DatasetSpec::Synthetic {
                kind,
                length,
                features,
                noise,
                seed,
            } => synth_series(*kind, *length, *features, *noise, *seed),
        }
    }

    /// Short label used in the `dataset` results column.
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            DatasetSpec::Synthetic { kind, .. } => format!("synth_{}", kind.as_str()),
        }
    }
}
