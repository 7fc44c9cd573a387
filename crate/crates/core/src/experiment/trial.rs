use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ClockMode, ExperimentConfig, LossKind, MaeScale, Precision};
use super::results::{ResultRow, TrialStatus};
use super::stats::mae;
use crate::data::{prepare, Series};
use crate::error::{Error, Result};
use crate::models::{build_model, Mode};
use crate::pruning::{
    apply_masks, cubic_sparsity, post_step_enforce, sparsity_stats, training_prune_hook,
    SparsityReport,
};
use crate::regularizers::{attach_regularizer, Method};
use crate::tensor::{Graph, OptimizerState, Real};

/// Deterministic per-cell seed: `base ⊕ FNV-1a("method|seq_len|trial")`.
pub fn trial_seed(base: u64, method: Method, seq_len: usize, trial: usize) -> u64 {
    let key = format!("{method}|{seq_len}|{trial}");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    base ^ h
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: u32,
    pub train_loss: f64,
    /// Scheduled sparsity for this epoch (pruning runs only).
    pub target_sparsity: Option<f64>,
    /// Global sparsity of the masks at the end of the epoch.
    pub achieved_sparsity: Option<f64>,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub row: ResultRow,
    pub epochs: Vec<EpochLog>,
    /// Measured wall-clock duration regardless of the configured clock.
    pub wall_ms: f64,
    pub sparsity: Option<SparsityReport>,
    pub diagnostic: Option<String>,
}

impl TrialResult {
    /// The CSV row with `runtime_ms` replaced by measured wall time.
    pub fn wall_row(&self) -> ResultRow {
        ResultRow {
            runtime_ms: self.wall_ms,
            ..self.row.clone()
        }
    }
}

/// Loads the configured dataset and runs one cell.
pub fn run_trial(
    cfg: &ExperimentConfig,
    method: Method,
    seq_len: usize,
    trial: usize,
) -> Result<TrialResult> {
    let series = cfg.dataset.load()?;
    run_trial_on(cfg, &series, method, seq_len, trial)
}

/// Trains and evaluates one (method, seq_len, trial) cell on `series`.
/// Divergence yields a result with status `diverged`; other failures are
/// returned as errors.
pub fn run_trial_on(
    cfg: &ExperimentConfig,
    series: &Series,
    method: Method,
    seq_len: usize,
    trial: usize,
) -> Result<TrialResult> {
    match cfg.precision {
        Precision::F32 => run_typed::<f32>(cfg, series, method, seq_len, trial),
        Precision::F64 => run_typed::<f64>(cfg, series, method, seq_len, trial),
    }
}

struct Meter {
    start: Instant,
    clock: ClockMode,
    /// Arithmetic work outside the training graph.
    extra_work: u64,
    static_bytes: usize,
    peak_bytes: usize,
}

impl Meter {
    fn now_ms(&self, graph_work: u64) -> f64 {
        match self.clock {
            ClockMode::Wall => self.start.elapsed().as_secs_f64() * 1e3,
            ClockMode::Modeled => (graph_work + self.extra_work) as f64 / 1e6,
        }
    }
}

struct Outcome {
    mae: f64,
    epochs: Vec<EpochLog>,
    sparsity: Option<SparsityReport>,
    final_sparsity: Option<f64>,
}

fn run_typed<T: Real>(
    cfg: &ExperimentConfig,
    series: &Series,
    method: Method,
    seq_len: usize,
    trial: usize,
) -> Result<TrialResult> {
    let seed = trial_seed(cfg.base_seed, method, seq_len, trial);
    let mut meter = Meter {
        start: Instant::now(),
        clock: cfg.clock,
        extra_work: 0,
        static_bytes: 0,
        peak_bytes: 0,
    };
    let mut g = Graph::<T>::new();
    let outcome = train_eval::<T>(cfg, series, method, seq_len, seed, &mut meter, &mut g);
    let runtime_ms = meter.now_ms(g.work());
    let wall_ms = meter.start.elapsed().as_secs_f64() * 1e3;
    let peak = (meter.peak_bytes.max(g.peak_bytes()) + meter.static_bytes) as u64;
    let mut row = ResultRow {
        dataset: cfg.dataset.name(),
        model: cfg.model.kind.as_str().to_string(),
        method,
        seq_len,
        trial,
        seed,
        mae: None,
        runtime_ms,
        peak_mem_bytes: peak,
        final_sparsity: None,
        status: TrialStatus::Ok,
    };
    match outcome {
        Ok(o) => {
            row.mae = Some(o.mae);
            row.final_sparsity = o.final_sparsity;
            Ok(TrialResult {
                row,
                epochs: o.epochs,
                wall_ms,
                sparsity: o.sparsity,
                diagnostic: None,
            })
        }
        Err(e @ Error::Numeric { .. }) => {
            log::warn!("{method} seq_len={seq_len} trial={trial} diverged: {e}");
            row.status = TrialStatus::Diverged;
            Ok(TrialResult {
                row,
                epochs: Vec::new(),
                wall_ms,
                sparsity: None,
                diagnostic: Some(e.to_string()),
            })
        }
        Err(e) => Err(e),
    }
}

fn train_eval<T: Real>(
    cfg: &ExperimentConfig,
    series: &Series,
    method: Method,
    seq_len: usize,
    seed: u64,
    meter: &mut Meter,
    g: &mut Graph<T>,
) -> Result<Outcome> {
    let horizon = cfg.model.horizon;
    let data = prepare::<T>(series, seq_len, horizon, cfg.train_fraction)?;
    let mcfg = cfg.model_for(series.n_cols(), seq_len);
    let mut model = build_model::<T>(&mcfg, seed)?;
    let mut ctx = attach_regularizer(&mut model, &cfg.regularizer(method), cfg.schedule)?;
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ 0x5eed);

    let params_bytes = model.params().bytes();
    meter.static_bytes = 2 * params_bytes
        + opt.bytes()
        + ctx.pruning.as_ref().map_or(0, |p| p.bytes());

    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs as usize);
    model.set_mode(Mode::Train);
    for epoch in 1..=cfg.epochs {
        let t0 = meter.now_ms(g.work());
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let (x, y) = data.train.batch(idx);
            g.clear();
            let pred = model.forward(g, &x, &mut rng, ctx.pruning.as_ref())?;
            let target = g.constant(y)?;
            let loss = match cfg.loss {
                LossKind::Mse => g.sq_error_loss(pred, target)?,
                LossKind::Mae => g.abs_error_loss(pred, target)?,
            };
            loss_sum += g.value(loss).item()?.f64();
            batches += 1;
            model.params_mut().zero_grad();
            g.backward(loss)?;
            model.params_mut().collect_grads(g);
            if let Some(ps) = ctx.pruning.as_mut() {
                if training_prune_hook(ps, &model, epoch)? {
                    meter.extra_work += 2 * ps.total_weights() as u64;
                    apply_masks(&mut model, ps)?;
                }
            }
            opt.step(model.params_mut())?;
            meter.extra_work += opt.step_work(model.params());
            if let Some(ps) = ctx.pruning.as_ref() {
                post_step_enforce(&mut model, ps)?;
            }
        }
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            target_sparsity: ctx
                .pruning
                .as_ref()
                .map(|p| cubic_sparsity(epoch, p.schedule())),
            achieved_sparsity: ctx.pruning.as_ref().map(|p| p.global_sparsity()),
            runtime_ms: meter.now_ms(g.work()) - t0,
        };
        log::debug!(
            "epoch {} loss {:.6} target {:?} achieved {:?}",
            log.epoch,
            log.train_loss,
            log.target_sparsity,
            log.achieved_sparsity
        );
        epochs.push(log);
    }
    meter.peak_bytes = g.peak_bytes();

    let mut work = 0u64;
    let pred = ctx.predict(&mut model, &data.test.inputs, &mut rng, &mut work)?;
    meter.extra_work += work;
    if !pred.is_finite() {
        return Err(Error::Numeric { op: "predict" });
    }
    let tc = series.target();
    let (p, a): (Vec<f64>, Vec<f64>) = match cfg.mae_scale {
        MaeScale::Scaled => (pred.to_f64(), data.test.targets.to_f64()),
        MaeScale::Raw => (
            pred.to_f64().iter().map(|&v| data.scaler.unscale(tc, v)).collect(),
            data.test.targets.to_f64().iter().map(|&v| data.scaler.unscale(tc, v)).collect(),
        ),
    };
    let err = mae(&p, &a)?;
    let sparsity = match ctx.pruning.as_ref() {
        Some(ps) => Some(sparsity_stats(ps, &model)?),
        None => None,
    };
    Ok(Outcome {
        mae: err,
        epochs,
        final_sparsity: sparsity.as_ref().map(|s| s.sparsity),
        sparsity,
    })
}
