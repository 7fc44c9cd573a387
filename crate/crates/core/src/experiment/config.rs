use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{DatasetSpec, SynthKind};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind};
use crate::pruning::ScheduleConfig;
use crate::regularizers::{Method, RegularizerSpec};
use crate::tensor::OptimizerKind;

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

/// Training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    #[default]
    Mse,
    Mae,
}
named_enum!(LossKind { Mse => "mse", Mae => "mae" });

/// Whether test MAE is measured on the standardized or the original target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaeScale {
    #[default]
    Scaled,
    Raw,
}
named_enum!(MaeScale { Scaled => "scaled", Raw => "raw" });

/// Source of the `runtime_ms` column. `Modeled` converts counted arithmetic
/// work to milliseconds at a nominal 1 GFLOP/s, so the column is
/// reproducible bit for bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ClockMode {
    #[default]
    Wall,
    Modeled,
}
named_enum!(ClockMode { Wall => "wall", Modeled => "modeled" });

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F32,
    F64,
}
named_enum!(Precision { F32 => "f32", F64 => "f64" });

fn parse_optimizer(s: &str) -> Result<OptimizerKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "adam" => Ok(OptimizerKind::adam()),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Architecture template; `input_features` and `seq_len` are filled in
    /// per cell.
    pub model: ModelConfig,
    pub methods: Vec<Method>,
    pub seq_lens: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub schedule: ScheduleConfig,
    pub dropout_rate: f64,
    pub mc_samples: usize,
    pub mc_train_dropout: bool,
    pub train_fraction: f64,
    pub loss: LossKind,
    pub mae_scale: MaeScale,
    pub clock: ClockMode,
    pub precision: Precision,
    pub shuffle: bool,
    pub jobs: usize,
    pub resume: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Synthetic {
                kind: SynthKind::SineNoise,
                length: 2000,
                features: 1,
                noise: 0.1,
                seed: 0,
            },
            model: ModelConfig::new(ModelKind::Lstm, 1, 1),
            methods: Method::ALL.to_vec(),
            seq_lens: vec![1, 3, 7, 14, 30, 60],
            trials: 10,
            base_seed: 0,
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            optimizer: OptimizerKind::adam(),
            schedule: ScheduleConfig::default(),
            dropout_rate: 0.2,
            mc_samples: 30,
            mc_train_dropout: true,
            train_fraction: 0.8,
            loss: LossKind::Mse,
            mae_scale: MaeScale::Scaled,
            clock: ClockMode::Wall,
            precision: Precision::F32,
            shuffle: true,
            jobs: 1,
            resume: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.seq_lens.is_empty() || self.seq_lens.contains(&0) {
            return bad("sequence-length grid must be non-empty with entries >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction {} outside (0, 1)", self.train_fraction));
        }
        if self.jobs == 0 {
            return bad("jobs must be >= 1".into());
        }
        self.schedule.validate()?;
        self.regularizer(Method::None).validate()?;
        for &s in &self.seq_lens {
            self.model_for(1, s).validate()?;
        }
        Ok(())
    }

    pub fn regularizer(&self, method: Method) -> RegularizerSpec {
        RegularizerSpec {
            method,
            dropout_rate: self.dropout_rate,
            mc_samples: self.mc_samples,
            mc_train_dropout: self.mc_train_dropout,
        }
    }

    pub fn model_for(&self, features: usize, seq_len: usize) -> ModelConfig {
        let mut m = self.model.clone();
        m.input_features = features;
        m.seq_len = seq_len;
        m
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("results.csv")
    }

    /// Applies one `key=value` setting. Keys are the field names; model and
    /// schedule fields are addressed by their own names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v.trim().to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("invalid boolean '{v}' for '{key}'"))),
            }
        }
        let v = value.trim();
        match key.trim() {
            "data" | "dataset" => self.dataset = parse_dataset(v, &self.dataset)?,
            "target" => match &mut self.dataset {
                DatasetSpec::Csv { options, .. } => options.target = v.to_string(),
                _ => return Err(Error::Config("'target' applies to CSV datasets only".into())),
            },
            "missing" => match &mut self.dataset {
                DatasetSpec::Csv { options, .. } => options.missing = v.parse()?,
                _ => return Err(Error::Config("'missing' applies to CSV datasets only".into())),
            },
            "synth_length" | "length" => match &mut self.dataset {
                DatasetSpec::Synthetic { length, .. } => *length = num(key, v)?,
                _ => return Err(Error::Config(format!("'{key}' applies to synthetic data only"))),
            },
            "synth_features" => match &mut self.dataset {
                DatasetSpec::Synthetic { features, .. } => *features = num(key, v)?,
                _ => return Err(Error::Config(format!("'{key}' applies to synthetic data only"))),
            },
            "noise" => match &mut self.dataset {
                DatasetSpec::Synthetic { noise, .. } => *noise = num(key, v)?,
                _ => return Err(Error::Config(format!("'{key}' applies to synthetic data only"))),
            },
            "data_seed" => match &mut self.dataset {
                DatasetSpec::Synthetic { seed, .. } => *seed = num(key, v)?,
                _ => return Err(Error::Config(format!("'{key}' applies to synthetic data only"))),
            },
            "model" | "kind" => self.model.kind = v.parse()?,
            "hidden_size" | "hidden" => self.model.hidden_size = num(key, v)?,
            "layers" => self.model.layers = num(key, v)?,
            "patch_len" => self.model.patch_len = num(key, v)?,
            "patch_stride" => self.model.patch_stride = num(key, v)?,
            "heads" => self.model.heads = num(key, v)?,
            "horizon" => self.model.horizon = num(key, v)?,
            "scope" | "prunable_scope" => self.model.scope = v.parse()?,
            "methods" => self.methods = list(key, v)?,
            "method" => self.methods = vec![v.parse()?],
            "seq_lens" => self.seq_lens = list(key, v)?,
            "seq_len" => self.seq_lens = vec![num(key, v)?],
            "trials" => self.trials = num(key, v)?,
            "seed" | "base_seed" => self.base_seed = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" | "batch" => self.batch_size = num(key, v)?,
            "lr" | "learning_rate" => self.lr = num(key, v)?,
            "optimizer" => self.optimizer = parse_optimizer(v)?,
            "s_min" | "smin" => self.schedule.s_min = num(key, v)?,
            "s_max" | "smax" => self.schedule.s_max = num(key, v)?,
            "t_warmup" | "warmup" => self.schedule.t_warmup = num(key, v)?,
            "t_total" | "total" => self.schedule.t_total = num(key, v)?,
            "f_prune" | "prune_every" => self.schedule.f_prune = num(key, v)?,
            "dropout_rate" | "dropout" => self.dropout_rate = num(key, v)?,
            "mc_samples" => self.mc_samples = num(key, v)?,
            "mc_train_dropout" => self.mc_train_dropout = flag(key, v)?,
            "train_fraction" => self.train_fraction = num(key, v)?,
            "loss" => self.loss = v.parse()?,
            "mae_scale" => self.mae_scale = v.parse()?,
            "clock" => self.clock = v.parse()?,
            "precision" => self.precision = v.parse()?,
            "shuffle" => self.shuffle = flag(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "resume" => self.resume = flag(key, v)?,
            "output_dir" | "out" => self.output_dir = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}

/// `synth:<kind>` selects a generator; anything else is a CSV path whose
/// target defaults to the column named `target`.
fn parse_dataset(v: &str, current: &DatasetSpec) -> Result<DatasetSpec> {
    if let Some(kind) = v.strip_prefix("synth:") {
        let kind: SynthKind = kind.parse()?;
        let (length, features, noise, seed) = match current {
            DatasetSpec::Synthetic {
                length,
                features,
                noise,
                seed,
                ..
            } => (*length, *features, *noise, *seed),
            _ => (2000, 1, 0.1, 0),
        };
        return Ok(DatasetSpec::Synthetic {
            kind,
            length,
            features,
            noise,
            seed,
        });
    }
    let options = match current {
        DatasetSpec::Csv { options, .. } => options.clone(),
        _ => crate::data::CsvOptions::new("target"),
    };
    Ok(DatasetSpec::Csv {
        path: PathBuf::from(v),
        options,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn set_known_and_unknown_keys() {
        let mut c = ExperimentConfig::default();
        c.set("methods", "none,synaptic_pruning").unwrap();
        c.set("seq_lens", "3,7").unwrap();
        c.set("smax", "0.6").unwrap();
        c.set("data", "synth:walk").unwrap();
        c.set("clock", "modeled").unwrap();
        assert_eq!(c.methods, vec![Method::None, Method::SynapticPruning]);
        assert_eq!(c.seq_lens, vec![3, 7]);
        assert_eq!(c.schedule.s_max, 0.6);
        assert!(matches!(c.dataset, DatasetSpec::Synthetic { kind: SynthKind::RandomWalk, .. }));
        let e = c.set("bogus_key", "1").unwrap_err();
        assert!(e.to_string().contains("bogus_key"));
        assert!(c.set("trials", "x").is_err());
    }

    #[test]
    fn invalid_grids_rejected() {
        let mut c = ExperimentConfig::default();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.seq_lens.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.schedule.s_min = 0.5;
        c.schedule.s_max = 0.4;
        assert!(c.validate().is_err());
    }
}
