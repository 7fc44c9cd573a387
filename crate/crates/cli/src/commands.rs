use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use synaptic_core::experiment::{
    build_report, emit_report, measure_overhead, render, render_overhead, run_grid, run_trial,
    BlockBy, ExperimentConfig, ReportFormat, ReportOptions, ResultTable, StatReport,
    TrialResult, TrialStatus,
};
use synaptic_core::pruning::cubic_sparsity;
use synaptic_core::{Error, Method};

use crate::args::{BenchmarkArgs, ReportArgs, ScheduleArgs, TrainArgs};
use crate::layering::{owned, read_pairs, resolve};

/// A failure classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Unreadable or unusable input data (exit 2).
    Data(String),
    /// Training or I/O failure during the run (exit 3).
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::Contract(_) => Failure::Usage(msg),
            Error::Ingestion(_) | Error::Sizing(_) | Error::Parse { .. } | Error::Csv(_) => {
                Failure::Data(msg)
            }
            Error::Io(_) => Failure::Data(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn file_pairs(config: &Option<PathBuf>) -> Result<Vec<(String, String)>, Failure> {
    match config {
        Some(p) => read_pairs(p),
        None => Ok(Vec::new()),
    }
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    let file = file_pairs(&args.common.config)?;
    let mut flags = owned(args.common.pairs());
    for (k, v) in [("method", &args.method), ("seq_len", &args.seq_len), ("trial", &args.trial)] {
        if let Some(v) = v {
            flags.push((k.to_string(), v.clone()));
        }
    }
    let mut base = ExperimentConfig::default();
    base.methods = vec![Method::SynapticPruning];
    base.seq_lens = vec![7];
    let r = resolve(base, &file, &flags, &["trial"])?;
    if !r.data_given {
        return Err(Failure::Usage(
            "no dataset given; pass --data or set data= in the config file".into(),
        ));
    }
    let cfg = r.cfg;
    if cfg.methods.len() != 1 || cfg.seq_lens.len() != 1 {
        return Err(Failure::Usage(
            "train runs a single method and seq_len; use benchmark for grids".into(),
        ));
    }
    let trial: usize = match r.extras.get("trial") {
        Some(t) => t
            .parse()
            .map_err(|_| Failure::Usage(format!("trial must be a non-negative integer, got '{t}'")))?,
        None => 0,
    };
    cfg.validate()?;
    let (method, seq_len) = (cfg.methods[0], cfg.seq_lens[0]);
    log::info!(
        "training {} with {method}, seq_len={seq_len}, trial={trial}, {} epochs",
        cfg.model.kind.as_str(),
        cfg.epochs
    );
    let res = run_trial(&cfg, method, seq_len, trial)?;
    for e in &res.epochs {
        match (e.target_sparsity, e.achieved_sparsity) {
            (Some(t), Some(a)) => log::info!(
                "epoch {:>3} loss {:.6} target_sparsity {t:.4} sparsity {a:.4}",
                e.epoch,
                e.train_loss
            ),
            _ => log::info!("epoch {:>3} loss {:.6}", e.epoch, e.train_loss),
        }
    }
    create_out(&cfg.output_dir)?;
    write_file(&cfg.output_dir.join("train_epochs.csv"), &epochs_csv(&res))?;
    let table = ResultTable::new(vec![res.row.clone()]);
    table.save(&cfg.output_dir.join("train_result.csv"))?;
    if let Some(sp) = &res.sparsity {
        let mut buf = Vec::new();
        sp.write_csv(&mut buf)?;
        write_file(
            &cfg.output_dir.join("sparsity.csv"),
            &String::from_utf8_lossy(&buf),
        )?;
        log::info!(
            "final sparsity {:.4} ({} of {} weights pruned)",
            sp.sparsity,
            sp.pruned_weights,
            sp.total_weights
        );
    }
    match res.row.status {
        TrialStatus::Ok => {
            log::info!("test mae {:.6}", res.row.mae.unwrap_or(f64::NAN));
            Ok(())
        }
        status => Err(Failure::Runtime(format!(
            "trial finished with status {}: {}",
            status.as_str(),
            res.diagnostic.as_deref().unwrap_or("no diagnostic")
        ))),
    }
}

fn epochs_csv(res: &TrialResult) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,target_sparsity,achieved_sparsity,runtime_ms\n");
    for e in &res.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3}",
            e.epoch,
            e.train_loss,
            opt(e.target_sparsity),
            opt(e.achieved_sparsity),
            e.runtime_ms
        );
    }
    out
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<(), Failure> {
    let file = file_pairs(&args.common.config)?;
    let mut flags = owned(args.common.pairs());
    for (k, v) in [
        ("methods", &args.methods),
        ("seq_lens", &args.seq_lens),
        ("trials", &args.trials),
        ("blocks", &args.blocks),
    ] {
        if let Some(v) = v {
            flags.push((k.to_string(), v.clone()));
        }
    }
    if args.resume {
        flags.push(("resume".into(), "true".into()));
    }
    let r = resolve(ExperimentConfig::default(), &file, &flags, &["blocks"])?;
    let cfg = r.cfg;
    let blocks: BlockBy = match r.extras.get("blocks") {
        Some(b) => b.parse()?,
        None => BlockBy::default(),
    };
    let run = run_grid(&cfg)?;
    let failed = run
        .table
        .rows
        .iter()
        .filter(|r| r.status != TrialStatus::Ok)
        .count();
    log::info!(
        "{} rows in {} ({} run now, {} resumed, {} failed)",
        run.table.len(),
        cfg.results_path().display(),
        run.trials.len(),
        run.skipped,
        failed
    );
    let opts = ReportOptions {
        blocks,
        note: Some(format!("MAE on {} targets", cfg.mae_scale.as_str())),
        ..ReportOptions::default()
    };
    let report = build_report(&run.table, &opts)?;
    write_reports(&report, &cfg.output_dir)?;
    if run.table.rows.iter().any(|r| r.method == Method::None && r.status == TrialStatus::Ok) {
        let overhead = measure_overhead(&run.table.rows, Method::None)?;
        write_file(&cfg.output_dir.join("overhead.csv"), &render_overhead(&overhead))?;
    } else {
        log::warn!("no successful 'none' trials; skipping overhead.csv");
    }
    print!("{}", render(&report, ReportFormat::Markdown));
    Ok(())
}

fn write_reports(report: &StatReport, dir: &Path) -> Result<(), Failure> {
    create_out(dir)?;
    emit_report(report, ReportFormat::Csv, &dir.join("report.csv")).map_err(runtime)?;
    emit_report(report, ReportFormat::Markdown, &dir.join("report.md")).map_err(runtime)?;
    Ok(())
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

pub fn schedule(args: &ScheduleArgs) -> Result<(), Failure> {
    let file = file_pairs(&args.config)?;
    let mut cfg = ExperimentConfig::default();
    for (k, v) in &file {
        cfg.set(k, v)?;
    }
    for (k, v) in [
        ("s_min", &args.smin),
        ("s_max", &args.smax),
        ("t_warmup", &args.warmup),
        ("t_total", &args.total),
    ] {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    let s = cfg.schedule;
    s.validate()?;
    let mut out = String::from("epoch,target_sparsity\n");
    for t in 0..=s.t_total {
        let _ = writeln!(out, "{t},{:.4}", cubic_sparsity(t, &s));
    }
    print!("{out}");
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let mut results: Option<String> = None;
    let mut out: Option<String> = None;
    let mut format = "both".to_string();
    let mut opts = ReportOptions::default();
    let file = file_pairs(&args.config)?;
    let flags = [
        ("results", &args.results),
        ("output_dir", &args.out),
        ("format", &args.format),
        ("blocks", &args.blocks),
        ("level", &args.level),
    ];
    let flag_pairs = flags
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())));
    for (k, v) in file.into_iter().chain(flag_pairs) {
        match k.as_str() {
            "results" => results = Some(v),
            "output_dir" | "out" => out = Some(v),
            "format" => format = v,
            "blocks" => opts.blocks = v.parse()?,
            "level" => {
                opts.level = v
                    .parse()
                    .ok()
                    .filter(|l: &f64| *l > 0.0 && *l < 1.0)
                    .ok_or_else(|| Failure::Usage(format!("level must be in (0, 1), got '{v}'")))?
            }
            other => return Err(Failure::Usage(format!("unknown config key '{other}'"))),
        }
    }
    let formats: &[ReportFormat] = match format.as_str() {
        "csv" => &[ReportFormat::Csv],
        "markdown" | "md" => &[ReportFormat::Markdown],
        "both" => &[ReportFormat::Csv, ReportFormat::Markdown],
        other => return Err(Failure::Usage(format!("unknown report format '{other}'"))),
    };
    let results = PathBuf::from(
        results.ok_or_else(|| Failure::Usage("no results file given; pass --results".into()))?,
    );
    let table = ResultTable::load(&results)?;
    if table.rows.is_empty() {
        return Err(Failure::Data(format!("{} has no result rows", results.display())));
    }
    let dir = match out {
        Some(o) => PathBuf::from(o),
        None => results
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let report = build_report(&table, &opts)?;
    create_out(&dir)?;
    for &f in formats {
        let name = match f {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
        };
        emit_report(&report, f, &dir.join(name)).map_err(runtime)?;
    }
    print!("{}", render(&report, ReportFormat::Markdown));
    Ok(())
}
