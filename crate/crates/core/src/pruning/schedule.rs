use crate::error::{Error, Result};

/// Cubic sparsity schedule and pruning cadence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub s_min: f64,
    pub s_max: f64,
    /// Epochs before the first prune.
    pub t_warmup: u32,
    /// Epoch at which the schedule reaches `s_max`.
    pub t_total: u32,
    /// Prune every `f_prune` batches once warmup is over.
    pub f_prune: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            s_min: 0.3,
            s_max: 0.7,
            t_warmup: 2,
            t_total: 20,
            f_prune: 5,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.s_min && self.s_min <= self.s_max && self.s_max < 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= s_min <= s_max < 1, got s_min={} s_max={}",
                self.s_min, self.s_max
            )));
        }
        if self.t_warmup >= self.t_total {
            return Err(Error::Config(format!(
                "need t_warmup < t_total, got {} >= {}",
                self.t_warmup, self.t_total
            )));
        }
        if self.f_prune == 0 {
            return Err(Error::Config("f_prune must be >= 1".into()));
        }
        Ok(())
    }
}

/// Target sparsity at epoch `t`: zero during warmup, then
/// `s_min + (s_max − s_min)·p³` with `p = clamp((t − t_warmup)/(t_total − t_warmup), 0, 1)`.
pub fn cubic_sparsity(t: u32, cfg: &ScheduleConfig) -> f64 {
    if t < cfg.t_warmup {
        return 0.0;
    }
    let span = (cfg.t_total - cfg.t_warmup) as f64;
    let progress = ((t - cfg.t_warmup) as f64 / span).clamp(0.0, 1.0);
    cfg.s_min + (cfg.s_max - cfg.s_min) * progress.powi(3)
}
