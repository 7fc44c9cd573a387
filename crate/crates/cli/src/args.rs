use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "synaptic", version, about = "Train and benchmark forecasters with training-time synaptic pruning")]
pub struct Cli {
    /// Log filter for stderr output (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info", overrides_with = "log_level")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one (model, method, sequence length) configuration.
    Train(TrainArgs),
    /// Run the method x sequence-length x trial grid and summarize it.
    Benchmark(BenchmarkArgs),
    /// Print the target sparsity for every epoch of a schedule.
    Schedule(ScheduleArgs),
    /// Summarize an existing results CSV.
    Report(ReportArgs),
}

/// Flags shared by `train` and `benchmark`. Each maps to the config-file
/// key named in its help text.
#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV path or synth:sine|trend|walk [key: data]
    #[arg(long)]
    pub data: Option<String>,
    /// Target column of a CSV dataset [key: target]
    #[arg(long)]
    pub target: Option<String>,
    /// drop-row or forward-fill [key: missing]
    #[arg(long)]
    pub missing: Option<String>,
    /// Synthetic series length [key: synth_length]
    #[arg(long)]
    pub synth_length: Option<String>,
    /// Synthetic driver-feature count [key: synth_features]
    #[arg(long)]
    pub synth_features: Option<String>,
    /// Synthetic noise standard deviation [key: noise]
    #[arg(long)]
    pub noise: Option<String>,
    /// rnn, lstm or patchtst [key: model]
    #[arg(long)]
    pub model: Option<String>,
    /// [key: hidden_size]
    #[arg(long)]
    pub hidden: Option<String>,
    /// [key: layers]
    #[arg(long)]
    pub layers: Option<String>,
    /// [key: patch_len]
    #[arg(long)]
    pub patch_len: Option<String>,
    /// [key: patch_stride]
    #[arg(long)]
    pub patch_stride: Option<String>,
    /// [key: heads]
    #[arg(long)]
    pub heads: Option<String>,
    /// [key: horizon]
    #[arg(long)]
    pub horizon: Option<String>,
    /// dense-only or all-weights [key: scope]
    #[arg(long)]
    pub scope: Option<String>,
    /// [key: epochs]
    #[arg(long)]
    pub epochs: Option<String>,
    /// [key: batch_size]
    #[arg(long)]
    pub batch_size: Option<String>,
    /// [key: lr]
    #[arg(long)]
    pub lr: Option<String>,
    /// adam or sgd [key: optimizer]
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Initial sparsity [key: s_min]
    #[arg(long)]
    pub smin: Option<String>,
    /// Final sparsity [key: s_max]
    #[arg(long)]
    pub smax: Option<String>,
    /// First pruning epoch [key: t_warmup]
    #[arg(long)]
    pub warmup: Option<String>,
    /// Epoch at which s_max is reached [key: t_total]
    #[arg(long)]
    pub total: Option<String>,
    /// Batches between pruning steps [key: f_prune]
    #[arg(long)]
    pub prune_every: Option<String>,
    /// [key: dropout_rate]
    #[arg(long)]
    pub dropout: Option<String>,
    /// Stochastic passes for mc_dropout [key: mc_samples]
    #[arg(long)]
    pub mc_samples: Option<String>,
    /// true or false [key: mc_train_dropout]
    #[arg(long)]
    pub mc_train_dropout: Option<String>,
    /// [key: train_fraction]
    #[arg(long)]
    pub train_fraction: Option<String>,
    /// mse or mae [key: loss]
    #[arg(long)]
    pub loss: Option<String>,
    /// scaled or raw [key: mae_scale]
    #[arg(long)]
    pub mae_scale: Option<String>,
    /// wall or modeled [key: clock]
    #[arg(long)]
    pub clock: Option<String>,
    /// f32 or f64 [key: precision]
    #[arg(long)]
    pub precision: Option<String>,
    /// Base seed [key: seed]
    #[arg(long)]
    pub seed: Option<String>,
    /// Worker threads [key: jobs]
    #[arg(long)]
    pub jobs: Option<String>,
    /// Output directory; falls back to $SYNAPTIC_OUT_DIR, then ./out [key: output_dir]
    #[arg(long)]
    pub out: Option<String>,
}

impl ExperimentArgs {
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let fields: Vec<(&'static str, &Option<String>)> = vec![
            ("data", &self.data),
            ("target", &self.target),
            ("missing", &self.missing),
            ("synth_length", &self.synth_length),
            ("synth_features", &self.synth_features),
            ("noise", &self.noise),
            ("model", &self.model),
            ("hidden_size", &self.hidden),
            ("layers", &self.layers),
            ("patch_len", &self.patch_len),
            ("patch_stride", &self.patch_stride),
            ("heads", &self.heads),
            ("horizon", &self.horizon),
            ("scope", &self.scope),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr", &self.lr),
            ("optimizer", &self.optimizer),
            ("s_min", &self.smin),
            ("s_max", &self.smax),
            ("t_warmup", &self.warmup),
            ("t_total", &self.total),
            ("f_prune", &self.prune_every),
            ("dropout_rate", &self.dropout),
            ("mc_samples", &self.mc_samples),
            ("mc_train_dropout", &self.mc_train_dropout),
            ("train_fraction", &self.train_fraction),
            ("loss", &self.loss),
            ("mae_scale", &self.mae_scale),
            ("clock", &self.clock),
            ("precision", &self.precision),
            ("seed", &self.seed),
            ("jobs", &self.jobs),
            ("output_dir", &self.out),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    /// none, dropout, mc_dropout or synaptic_pruning [key: method]
    #[arg(long)]
    pub method: Option<String>,
    /// Input sequence length [key: seq_len]
    #[arg(long)]
    pub seq_len: Option<String>,
    /// Trial index used for seeding [key: trial]
    #[arg(long)]
    pub trial: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    /// Comma-separated methods [key: methods]
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated sequence lengths [key: seq_lens]
    #[arg(long)]
    pub seq_lens: Option<String>,
    /// Trials per cell [key: trials]
    #[arg(long)]
    pub trials: Option<String>,
    /// Skip cells already present in the results CSV [key: resume]
    #[arg(long)]
    pub resume: bool,
    /// Friedman blocks: seq_len or trial [key: blocks]
    #[arg(long)]
    pub blocks: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [key: s_min]
    #[arg(long)]
    pub smin: Option<String>,
    /// [key: s_max]
    #[arg(long)]
    pub smax: Option<String>,
    /// [key: t_warmup]
    #[arg(long)]
    pub warmup: Option<String>,
    /// [key: t_total]
    #[arg(long)]
    pub total: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Results CSV to summarize [key: results]
    #[arg(long)]
    pub results: Option<String>,
    /// Directory for report files; defaults to the CSV's directory [key: output_dir]
    #[arg(long)]
    pub out: Option<String>,
    /// csv, markdown or both [key: format]
    #[arg(long)]
    pub format: Option<String>,
    /// Friedman blocks: seq_len or trial [key: blocks]
    #[arg(long)]
    pub blocks: Option<String>,
    /// Confidence level [key: level]
    #[arg(long)]
    pub level: Option<String>,
}
