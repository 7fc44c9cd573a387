use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::sync::Mutex;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::results::{ResultRow, ResultTable, RowWriter, TrialStatus};
use super::trial::{run_trial_on, trial_seed, TrialResult};
use crate::data::{split_sizes, Series};
use crate::error::{Error, Result};
use crate::regularizers::Method;

#[derive(Debug)]
pub struct GridRun {
    /// Every row of the results file after the run, in canonical order.
    pub table: ResultTable,
    /// Cells executed by this run, in grid order.
    pub trials: Vec<TrialResult>,
    /// Cells skipped because a resumed file already contained them.
    pub skipped: usize,
}

/// Runs every (method × seq_len × trial) cell, streaming rows to
/// `results.csv` in the output directory as they complete, then rewrites
/// the file sorted. With `resume`, cells already present are skipped.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridRun> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let series = cfg.dataset.load()?;
    check_sizes(cfg, &series)?;

    let path = cfg.results_path();
    let dataset = cfg.dataset.name();
    let model = cfg.model.kind.as_str().to_string();
    let resuming = cfg.resume && path.exists() && std::fs::metadata(&path)?.len() > 0;
    let existing = if resuming {
        ResultTable::load(&path)?
    } else {
        ResultTable::default()
    };
    let done: BTreeSet<_> = existing.rows.iter().map(|r| r.key()).collect();

    let mut cells = Vec::new();
    let mut skipped = 0;
    for &m in &cfg.methods {
        for &s in &cfg.seq_lens {
            for t in 0..cfg.trials {
                if done.contains(&(dataset.clone(), model.clone(), m, s, t)) {
                    skipped += 1;
                } else {
                    cells.push((m, s, t));
                }
            }
        }
    }
    log::info!(
        "{} cells to run, {} already present in {}",
        cells.len(),
        skipped,
        path.display()
    );

    let file = if resuming {
        OpenOptions::new().append(true).open(&path)?
    } else {
        std::fs::File::create(&path)?
    };
    let writer = Mutex::new(RowWriter::new(file, !resuming)?);
    let run_cell = |&(m, s, t): &(Method, usize, usize)| -> Result<TrialResult> {
        let res = match run_trial_on(cfg, &series, m, s, t) {
            Ok(r) => r,
            Err(e) => {
                log::error!("{m} seq_len={s} trial={t} failed: {e}");
                failed_result(cfg, &dataset, &model, m, s, t, e)
            }
        };
        log::info!(
            "{m} seq_len={s} trial={t} mae={:?} status={}",
            res.row.mae,
            res.row.status.as_str()
        );
        writer.lock().expect("writer lock").write(&res.row)?;
        Ok(res)
    };

    let trials: Vec<TrialResult> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.jobs)))?;
        pool.install(|| cells.par_iter().map(run_cell).collect::<Result<_>>())?
    } else {
        cells.iter().map(run_cell).collect::<Result<_>>()?
    };
    drop(writer);

    let mut seen = BTreeSet::new();
    let mut rows: Vec<ResultRow> = existing
        .rows
        .into_iter()
        .chain(trials.iter().map(|t| t.row.clone()))
        .filter(|r| seen.insert(r.key()))
        .collect();
    rows.sort_by_key(|r| r.key());
    let table = ResultTable::new(rows);
    table.save(&path)?;
    Ok(GridRun {
        table,
        trials,
        skipped,
    })
}

fn check_sizes(cfg: &ExperimentConfig, series: &Series) -> Result<()> {
    let rows = series.n_rows();
    let h = cfg.model.horizon;
    for &s in &cfg.seq_lens {
        if rows < s + h {
            return Err(Error::Sizing(format!(
                "{rows} rows cannot hold seq_len {s} with horizon {h}"
            )));
        }
        split_sizes(rows - s - h + 1, s, h, cfg.train_fraction)?;
    }
    Ok(())
}

fn failed_result(
    cfg: &ExperimentConfig,
    dataset: &str,
    model: &str,
    method: Method,
    seq_len: usize,
    trial: usize,
    e: Error,
) -> TrialResult {
    TrialResult {
        row: ResultRow {
            dataset: dataset.to_string(),
            model: model.to_string(),
            method,
            seq_len,
            trial,
            seed: trial_seed(cfg.base_seed, method, seq_len, trial),
            mae: None,
            runtime_ms: 0.0,
            peak_mem_bytes: 0,
            final_sparsity: None,
            status: TrialStatus::Error,
        },
        epochs: Vec::new(),
        wall_ms: 0.0,
        sparsity: None,
        diagnostic: Some(e.to_string()),
    }
}
