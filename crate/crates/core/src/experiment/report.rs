use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::results::{ResultRow, ResultTable, TrialStatus};
use super::stats::{confidence_interval, friedman_test, mean, sample_std, wilcoxon_exact, FriedmanResult};
use crate::error::{Error, Result};
use crate::regularizers::Method;

/// Which column groups results into Friedman blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlockBy {
    #[default]
    SeqLen,
    Trial,
}

impl std::str::FromStr for BlockBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "seq_len" => Ok(BlockBy::SeqLen),
            "trial" => Ok(BlockBy::Trial),
            other => Err(Error::Config(format!("unknown block column '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOptions {
    pub blocks: BlockBy,
    pub level: f64,
    /// Free text placed under the markdown title, e.g. the MAE scale.
    pub note: Option<String>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            blocks: BlockBy::SeqLen,
            level: 0.95,
            note: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    /// Successful trials.
    pub n: usize,
    /// Diverged or errored trials, excluded from every statistic.
    pub failed: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub ci: Option<(f64, f64)>,
    /// Ordinal rank by mean MAE, 1 = lowest.
    pub rank: Option<usize>,
    /// Mean within-block Friedman rank.
    pub mean_rank: Option<f64>,
    /// Exact Wilcoxon p against the best method over block means.
    pub p_vs_best: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetReport {
    pub dataset: String,
    pub model: String,
    pub methods: Vec<MethodSummary>,
    pub friedman: Option<FriedmanResult>,
    pub blocks_used: usize,
    /// Blocks dropped because some method had no successful trial in them.
    pub blocks_excluded: usize,
    pub best: Option<Method>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatReport {
    pub datasets: Vec<DatasetReport>,
    pub options: ReportOptions,
}

pub fn build_report(table: &ResultTable, opts: &ReportOptions) -> Result<StatReport> {
    if table.is_empty() {
        return Err(Error::Contract("no result rows to report".into()));
    }
    let mut groups: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in &table.rows {
        groups.entry((r.dataset.clone(), r.model.clone())).or_default().push(r);
    }
    let datasets = groups
        .into_iter()
        .map(|((dataset, model), rows)| dataset_report(dataset, model, &rows, opts))
        .collect::<Result<_>>()?;
    Ok(StatReport {
        datasets,
        options: opts.clone(),
    })
}

fn dataset_report(
    dataset: String,
    model: String,
    rows: &[&ResultRow],
    opts: &ReportOptions,
) -> Result<DatasetReport> {
    let mut by_method: BTreeMap<Method, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_method.entry(r.method).or_default().push(r);
    }
    let ok = |r: &&&ResultRow| r.status == TrialStatus::Ok && r.mae.is_some();
    let mut methods: Vec<MethodSummary> = by_method
        .iter()
        .map(|(&method, rs)| {
            let maes: Vec<f64> = rs.iter().filter(ok).filter_map(|r| r.mae).collect();
            let n = maes.len();
            MethodSummary {
                method,
                n,
                failed: rs.len() - n,
                mean: (n > 0).then(|| mean(&maes)),
                std: (n > 1).then(|| sample_std(&maes)),
                ci: confidence_interval(&maes, opts.level).ok(),
                rank: None,
                mean_rank: None,
                p_vs_best: None,
            }
        })
        .collect();

    let mut best = None;
    let mut friedman = None;
    let (mut blocks_used, mut blocks_excluded) = (0, 0);
    if methods.len() >= 2 {
        let mut order: Vec<usize> = (0..methods.len()).filter(|&i| methods[i].mean.is_some()).collect();
        order.sort_by(|&a, &b| methods[a].mean.unwrap().total_cmp(&methods[b].mean.unwrap()));
        for (r, &i) in order.iter().enumerate() {
            methods[i].rank = Some(r + 1);
        }
        let best_idx = order.first().copied();
        best = best_idx.map(|i| methods[i].method);

        // block × method matrix of mean MAE
        let mut cells: BTreeMap<usize, BTreeMap<Method, Vec<f64>>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.status == TrialStatus::Ok) {
            if let Some(m) = r.mae {
                let b = match opts.blocks {
                    BlockBy::SeqLen => r.seq_len,
                    BlockBy::Trial => r.trial,
                };
                cells.entry(b).or_default().entry(r.method).or_default().push(m);
            }
        }
        let all_blocks: BTreeMap<usize, ()> = rows
            .iter()
            .map(|r| match opts.blocks {
                BlockBy::SeqLen => (r.seq_len, ()),
                BlockBy::Trial => (r.trial, ()),
            })
            .collect();
        let mut matrix = Vec::new();
        for b in all_blocks.keys() {
            let row: Option<Vec<f64>> = methods
                .iter()
                .map(|s| cells.get(b).and_then(|c| c.get(&s.method)).map(|v| mean(v)))
                .collect();
            match row {
                Some(r) => matrix.push(r),
                None => blocks_excluded += 1,
            }
        }
        blocks_used = matrix.len();
        if let Ok(f) = friedman_test(&matrix) {
            for (s, &r) in methods.iter_mut().zip(&f.mean_ranks) {
                s.mean_rank = Some(r);
            }
            friedman = Some(f);
        }
        if let Some(bi) = best_idx {
            if blocks_used >= 2 {
                let col = |j: usize| matrix.iter().map(|r| r[j]).collect::<Vec<f64>>();
                let base = col(bi);
                for j in 0..methods.len() {
                    if j != bi {
                        methods[j].p_vs_best = wilcoxon_exact(&col(j), &base).ok();
                    }
                }
            }
        }
    }
    Ok(DatasetReport {
        dataset,
        model,
        methods,
        friedman,
        blocks_used,
        blocks_excluded,
        best,
    })
}

fn f6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn render_csv(report: &StatReport) -> String {
    let mut out = String::from(
        "dataset,model,method,n,failed,mean_mae,std,ci_lower,ci_upper,rank,mean_rank,\
         friedman_chi2,friedman_df,friedman_p,p_vs_best,best\n",
    );
    for d in &report.datasets {
        for m in &d.methods {
            let f = d.friedman.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                d.dataset,
                d.model,
                m.method,
                m.n,
                m.failed,
                f6(m.mean),
                f6(m.std),
                f6(m.ci.map(|c| c.0)),
                f6(m.ci.map(|c| c.1)),
                m.rank.map(|r| r.to_string()).unwrap_or_default(),
                f6(m.mean_rank),
                f6(f.map(|f| f.chi2)),
                f.map(|f| f.df.to_string()).unwrap_or_default(),
                f6(f.map(|f| f.p)),
                f6(m.p_vs_best),
                if d.best == Some(m.method) { "*" } else { "" },
            );
        }
    }
    out
}

pub fn render_markdown(report: &StatReport) -> String {
    let pct = (report.options.level * 100.0).round();
    let mut out = String::from("# Results summary\n");
    if let Some(note) = &report.options.note {
        let _ = writeln!(out, "\n{note}");
    }
    for d in &report.datasets {
        let _ = writeln!(out, "\n## {} / {}\n", d.dataset, d.model);
        let _ = writeln!(
            out,
            "| Method | n | Failed | Mean MAE | Std | {pct}% CI | Rank | Mean rank | p vs best |"
        );
        out.push_str("|---|---:|---:|---:|---:|---|---:|---:|---:|\n");
        for m in &d.methods {
            let name = if d.best == Some(m.method) {
                format!("**{}**", m.method)
            } else {
                m.method.to_string()
            };
            let ci = m
                .ci
                .map(|(lo, hi)| format!("[{lo:.4}, {hi:.4}]"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                name,
                m.n,
                m.failed,
                m.mean.map(|v| format!("{v:.4}")).unwrap_or_default(),
                m.std.map(|v| format!("{v:.4}")).unwrap_or_default(),
                ci,
                m.rank.map(|r| r.to_string()).unwrap_or_default(),
                m.mean_rank.map(|v| format!("{v:.2}")).unwrap_or_default(),
                m.p_vs_best.map(|v| format!("{v:.4}")).unwrap_or_default(),
            );
        }
        let block = match report.options.blocks {
            BlockBy::SeqLen => "seq_len",
            BlockBy::Trial => "trial",
        };
        match &d.friedman {
            Some(f) => {
                let _ = writeln!(
                    out,
                    "\nFriedman: chi2 = {:.2}, df = {}, p = {:.6} ({} blocks by {block}, {} excluded)",
                    f.chi2, f.df, f.p, d.blocks_used, d.blocks_excluded
                );
            }
            None if d.methods.len() >= 2 => {
                let _ = writeln!(
                    out,
                    "\nFriedman: not computed ({} complete blocks by {block})",
                    d.blocks_used
                );
            }
            None => {}
        }
        let failed: usize = d.methods.iter().map(|m| m.failed).sum();
        if failed > 0 {
            let _ = writeln!(out, "\n{failed} failed trial(s) excluded.");
        }
    }
    out
}

pub fn render(report: &StatReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    }
}

pub fn emit_report(report: &StatReport, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render(report, format))?;
    Ok(())
}

/// Runtime and memory of one method relative to the baseline, for one
/// (dataset, model, seq_len) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Overhead {
    pub dataset: String,
    pub model: String,
    pub method: Method,
    pub seq_len: usize,
    pub baseline_runtime_ms: f64,
    pub runtime_ms: f64,
    pub runtime_ratio: f64,
    pub baseline_mem_bytes: f64,
    pub mem_bytes: f64,
    pub memory_ratio: f64,
}

impl Overhead {
    pub fn runtime_overhead_pct(&self) -> f64 {
        (self.runtime_ratio - 1.0) * 100.0
    }

    pub fn memory_overhead_pct(&self) -> f64 {
        (self.memory_ratio - 1.0) * 100.0
    }
}

/// Mean runtime and peak-memory ratios of every method against `baseline`
/// over successful trials, per (dataset, model, seq_len).
pub fn measure_overhead(rows: &[ResultRow], baseline: Method) -> Result<Vec<Overhead>> {
    if !rows.iter().any(|r| r.method == baseline && r.status == TrialStatus::Ok) {
        return Err(Error::Contract(format!(
            "baseline method '{baseline}' has no successful trials"
        )));
    }
    type Key = (String, String, usize);
    let mut acc: BTreeMap<Key, BTreeMap<Method, (f64, f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == TrialStatus::Ok) {
        let e = acc
            .entry((r.dataset.clone(), r.model.clone(), r.seq_len))
            .or_default()
            .entry(r.method)
            .or_insert((0.0, 0.0, 0));
        e.0 += r.runtime_ms;
        e.1 += r.peak_mem_bytes as f64;
        e.2 += 1;
    }
    let mut out = Vec::new();
    for ((dataset, model, seq_len), methods) in acc {
        let Some(&(bt, bm, bn)) = methods.get(&baseline) else {
            log::warn!("no baseline trials for {dataset}/{model} seq_len={seq_len}");
            continue;
        };
        let (bt, bm) = (bt / bn as f64, bm / bn as f64);
        for (&method, &(t, m, n)) in &methods {
            if method == baseline {
                continue;
            }
            let (t, m) = (t / n as f64, m / n as f64);
            out.push(Overhead {
                dataset: dataset.clone(),
                model: model.clone(),
                method,
                seq_len,
                baseline_runtime_ms: bt,
                runtime_ms: t,
                runtime_ratio: t / bt,
                baseline_mem_bytes: bm,
                mem_bytes: m,
                memory_ratio: m / bm,
            });
        }
    }
    Ok(out)
}

pub fn render_overhead(rows: &[Overhead]) -> String {
    let mut out = String::from(
        "dataset,model,method,seq_len,baseline_runtime_ms,runtime_ms,runtime_ratio,runtime_overhead_pct,memory_ratio,memory_overhead_pct\n",
    );
    for o in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{:.3},{:.4},{:+.2},{:.4},{:+.2}",
            o.dataset,
            o.model,
            o.method,
            o.seq_len,
            o.baseline_runtime_ms,
            o.runtime_ms,
            o.runtime_ratio,
            o.runtime_overhead_pct(),
            o.memory_ratio,
            o.memory_overhead_pct()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, seq_len: usize, trial: usize, mae: f64, rt: f64) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            model: "rnn".into(),
            method,
            seq_len,
            trial,
            seed: 1,
            mae: Some(mae),
            runtime_ms: rt,
            peak_mem_bytes: 1000,
            final_sparsity: None,
            status: TrialStatus::Ok,
        }
    }

    fn four_method_table() -> ResultTable {
        let mut rows = Vec::new();
        for (si, s) in [1, 3, 7, 14, 30, 60].into_iter().enumerate() {
            for (mi, m) in Method::ALL.into_iter().enumerate() {
                for t in 0..2 {
                    let mae = 0.1 * (4 - mi) as f64 + 0.01 * si as f64 + 0.001 * t as f64;
                    rows.push(row(m, s, t, mae, 100.0));
                }
            }
        }
        ResultTable::new(rows)
    }

    #[test]
    fn four_methods_get_full_stats() {
        let rep = build_report(&four_method_table(), &ReportOptions::default()).unwrap();
        let d = &rep.datasets[0];
        let mut ranks: Vec<usize> = d.methods.iter().map(|m| m.rank.unwrap()).collect();
        ranks.sort();
        assert_eq!(ranks, vec![1, 2, 3, 4]);
        let f = d.friedman.as_ref().unwrap();
        assert_eq!((f.df, d.blocks_used), (3, 6));
        assert!((f.chi2 - 18.0).abs() < 1e-12);
        assert_eq!(d.best, Some(Method::SynapticPruning));
        let p = d.methods.iter().find(|m| m.method == Method::None).unwrap().p_vs_best;
        assert_eq!(p, Some(0.03125));
    }

    #[test]
    fn single_method_is_descriptive_only() {
        let t = ResultTable::new((0..3).map(|i| row(Method::None, 3, i, 0.2 + i as f64 * 0.1, 1.0)).collect());
        let rep = build_report(&t, &ReportOptions::default()).unwrap();
        let d = &rep.datasets[0];
        assert!(d.friedman.is_none() && d.methods[0].rank.is_none());
        assert!((d.methods[0].mean.unwrap() - 0.3).abs() < 1e-12);
        let csv = render_csv(&rep);
        assert!(csv.lines().nth(1).unwrap().ends_with(",,,,,,,"));
    }

    #[test]
    fn rendering_is_deterministic_and_marks_best() {
        let rep = build_report(&four_method_table(), &ReportOptions::default()).unwrap();
        let md = render_markdown(&rep);
        assert!(md.contains("| **synaptic_pruning** |"));
        assert_eq!(md, render_markdown(&build_report(&four_method_table(), &ReportOptions::default()).unwrap()));
        assert!(build_report(&ResultTable::default(), &ReportOptions::default()).is_err());
    }

    #[test]
    fn failed_cells_drop_blocks() {
        let mut t = four_method_table();
        for r in t.rows.iter_mut().filter(|r| r.seq_len == 60 && r.method == Method::Dropout) {
            r.status = TrialStatus::Diverged;
            r.mae = None;
        }
        let rep = build_report(&t, &ReportOptions::default()).unwrap();
        let d = &rep.datasets[0];
        assert_eq!((d.blocks_used, d.blocks_excluded), (5, 1));
        assert_eq!(d.methods.iter().find(|m| m.method == Method::Dropout).unwrap().failed, 2);
    }

    #[test]
    fn overhead_ratios() {
        let rows = vec![
            row(Method::None, 3, 0, 0.1, 100.0),
            row(Method::SynapticPruning, 3, 0, 0.1, 104.4),
            row(Method::Dropout, 3, 0, 0.1, 100.0),
        ];
        let o = measure_overhead(&rows, Method::None).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o[0].runtime_ratio, 1.0);
        assert!((o[1].runtime_overhead_pct() - 4.4).abs() < 1e-9);
        assert!(measure_overhead(&rows[1..], Method::None).is_err());
    }
}
