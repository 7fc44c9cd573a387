use std::ops::Range;

use super::Series;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Per-column z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of leading rows the statistics were computed from.
    pub fit_rows: usize,
    /// One entry per zero-variance column left unscaled.
    pub warnings: Vec<String>,
}

impl ScalerStats {
    pub fn scale(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.std[col]
    }

    pub fn unscale(&self, col: usize, v: f64) -> f64 {
        v * self.std[col] + self.mean[col]
    }
}

/// Z-scores every column with statistics of the first
/// `floor(train_fraction · rows)` rows.
pub fn fit_scale(series: &Series, train_fraction: f64) -> Result<(Series, ScalerStats)> {
    check_fraction(train_fraction)?;
    let rows = (train_fraction * series.n_rows() as f64).floor() as usize;
    fit_scale_rows(series, rows)
}

/// Z-scores every column with statistics of the first `fit_rows` rows.
/// Columns with zero variance there pass through unchanged.
pub fn fit_scale_rows(series: &Series, fit_rows: usize) -> Result<(Series, ScalerStats)> {
    if fit_rows == 0 || fit_rows > series.n_rows() {
        return Err(Error::Sizing(format!(
            "cannot fit scaler on {fit_rows} of {} rows",
            series.n_rows()
        )));
    }
    let cols = series.n_cols();
    let mut mean = vec![0.0; cols];
    let mut std = vec![1.0; cols];
    let mut warnings = Vec::new();
    for c in 0..cols {
        let xs: Vec<f64> = (0..fit_rows).map(|r| series.get(r, c)).collect();
        let m = xs.iter().sum::<f64>() / fit_rows as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / fit_rows as f64;
        let sd = var.sqrt();
        if sd <= 1e-12 * m.abs().max(1.0) {
            warnings.push(format!(
                "column '{}' has zero variance in the training rows; left unscaled",
                series.columns()[c]
            ));
        } else {
            mean[c] = m;
            std[c] = sd;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let stats = ScalerStats {
        mean,
        std,
        fit_rows,
        warnings,
    };
    let values = series
        .values()
        .chunks(cols)
        .flat_map(|row| {
            let s = &stats;
            row.iter().enumerate().map(move |(c, &v)| s.scale(c, v))
        })
        .collect();
    let scaled = Series::new(series.columns().to_vec(), values, series.target())?;
    Ok((scaled, stats))
}

/// Sliding-window samples: inputs `[n, seq_len, features]`, targets
/// `[n, horizon]` drawn from the target column.
#[derive(Clone, Debug)]
pub struct WindowedDataset<T> {
    pub inputs: Tensor<T>,
    pub targets: Tensor<T>,
    pub seq_len: usize,
    pub horizon: usize,
    /// Index of sample 0 in the unsplit sample sequence; its inputs start at
    /// this series row.
    pub first_sample: usize,
    pub scaler: Option<ScalerStats>,
}

impl<T: Real> WindowedDataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// Contiguous sub-range of samples.
    pub fn slice(&self, range: Range<usize>) -> Self {
        let (s, f, h) = (self.seq_len, self.features(), self.horizon);
        let n = range.len();
        let inputs = self.inputs.data()[range.start * s * f..range.end * s * f].to_vec();
        let targets = self.targets.data()[range.start * h..range.end * h].to_vec();
        Self {
            inputs: Tensor::new(vec![n, s, f], inputs).expect("consistent slice"),
            targets: Tensor::new(vec![n, h], targets).expect("consistent slice"),
            seq_len: s,
            horizon: h,
            first_sample: self.first_sample + range.start,
            scaler: self.scaler.clone(),
        }
    }

    /// Gathers the given samples into a batch.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<T>, Tensor<T>) {
        let sf = self.seq_len * self.features();
        let h = self.horizon;
        let mut x = Vec::with_capacity(idx.len() * sf);
        let mut y = Vec::with_capacity(idx.len() * h);
        for &i in idx {
            x.extend_from_slice(&self.inputs.data()[i * sf..(i + 1) * sf]);
            y.extend_from_slice(&self.targets.data()[i * h..(i + 1) * h]);
        }
        (
            Tensor::new(vec![idx.len(), self.seq_len, self.features()], x).expect("batch shape"),
            Tensor::new(vec![idx.len(), h], y).expect("batch shape"),
        )
    }
}

pub fn make_windows<T: Real>(
    series: &Series,
    seq_len: usize,
    horizon: usize,
) -> Result<WindowedDataset<T>> {
    if seq_len == 0 || horizon == 0 {
        return Err(Error::Sizing("seq_len and horizon must be >= 1".into()));
    }
    let rows = series.n_rows();
    if rows < seq_len + horizon {
        return Err(Error::Sizing(format!(
            "{rows} rows cannot hold a window of {seq_len} inputs and {horizon} targets"
        )));
    }
    let n = rows - seq_len - horizon + 1;
    let f = series.n_cols();
    let tc = series.target();
    let mut x = Vec::with_capacity(n * seq_len * f);
    let mut y = Vec::with_capacity(n * horizon);
    for i in 0..n {
        for r in i..i + seq_len {
            x.extend(series.row(r).iter().map(|&v| T::of(v)));
        }
        for r in i + seq_len..i + seq_len + horizon {
            y.push(T::of(series.get(r, tc)));
        }
    }
    Ok(WindowedDataset {
        inputs: Tensor::new(vec![n, seq_len, f], x)?,
        targets: Tensor::new(vec![n, horizon], y)?,
        seq_len,
        horizon,
        first_sample: 0,
        scaler: None,
    })
}

/// Train size, gap and test size for `samples` windows. The gap of
/// `max(seq_len, horizon) − 1` samples keeps train and test input windows
/// disjoint, and likewise their target windows.
pub fn split_sizes(
    samples: usize,
    seq_len: usize,
    horizon: usize,
    train_fraction: f64,
) -> Result<(usize, usize, usize)> {
    check_fraction(train_fraction)?;
    let n_train = (train_fraction * samples as f64).floor() as usize;
    let gap = seq_len.max(horizon) - 1;
    let test_start = n_train + gap;
    if n_train == 0 || test_start >= samples {
        return Err(Error::Sizing(format!(
            "{samples} samples at fraction {train_fraction} leave an empty split"
        )));
    }
    Ok((n_train, gap, samples - test_start))
}

pub fn chronological_split<T: Real>(
    ds: &WindowedDataset<T>,
    train_fraction: f64,
) -> Result<(WindowedDataset<T>, WindowedDataset<T>)> {
    let (n_train, gap, _) = split_sizes(ds.len(), ds.seq_len, ds.horizon, train_fraction)?;
    Ok((ds.slice(0..n_train), ds.slice(n_train + gap..ds.len())))
}

/// Scaled, windowed and split data for one trial.
#[derive(Clone, Debug)]
pub struct PreparedData<T> {
    pub train: WindowedDataset<T>,
    pub test: WindowedDataset<T>,
    pub scaler: ScalerStats,
}

/// Full pipeline: the scaler is fit on exactly the rows touched by training
/// windows, then the scaled series is windowed and split.
pub fn prepare<T: Real>(
    series: &Series,
    seq_len: usize,
    horizon: usize,
    train_fraction: f64,
) -> Result<PreparedData<T>> {
    let rows = series.n_rows();
    if seq_len == 0 || horizon == 0 || rows < seq_len + horizon {
        return Err(Error::Sizing(format!(
            "{rows} rows cannot hold a window of {seq_len} inputs and {horizon} targets"
        )));
    }
    let samples = rows - seq_len - horizon + 1;
    let (n_train, _, _) = split_sizes(samples, seq_len, horizon, train_fraction)?;
    let fit_rows = n_train - 1 + seq_len + horizon;
    let (scaled, scaler) = fit_scale_rows(series, fit_rows)?;
    let mut ds = make_windows::<T>(&scaled, seq_len, horizon)?;
    ds.scaler = Some(scaler.clone());
    let (train, test) = chronological_split(&ds, train_fraction)?;
    Ok(PreparedData {
        train,
        test,
        scaler,
    })
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("train fraction {f} outside (0, 1)")))
    }
}
