//! Regularization methods compared in the benchmark: none, standard
//! dropout, Monte Carlo dropout and synaptic pruning.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::models::{Mode, Model};
use crate::pruning::{init_masks, PruningState, ScheduleConfig};
use crate::tensor::{Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    None,
    Dropout,
    McDropout,
    SynapticPruning,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::None,
        Method::Dropout,
        Method::McDropout,
        Method::SynapticPruning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Dropout => "dropout",
            Method::McDropout => "mc_dropout",
            Method::SynapticPruning => "synaptic_pruning",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(Method::None),
            "dropout" => Ok(Method::Dropout),
            "mc_dropout" | "mc" => Ok(Method::McDropout),
            "synaptic_pruning" | "pruning" => Ok(Method::SynapticPruning),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizerSpec {
    pub method: Method,
    pub dropout_rate: f64,
    pub mc_samples: usize,
    /// Whether MC-dropout runs also apply dropout while training.
    pub mc_train_dropout: bool,
}

impl RegularizerSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            dropout_rate: 0.2,
            mc_samples: 30,
            mc_train_dropout: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("mc sample count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inverted dropout on a graph node. In training mode each entry is zeroed
/// with probability `p` and survivors are scaled by `1/(1−p)`; otherwise
/// (or with `p = 0`) `x` itself is returned.
pub fn dropout_forward<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: f64,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(x);
    }
    let keep = T::of(1.0 / (1.0 - p));
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mask: Vec<T> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?)?;
    g.mul(x, m)
}

/// Mean of `samples` stochastic forward passes with dropout at rate `p`
/// kept active at inference.
pub fn mc_predict<T: Real>(
    model: &mut Model<T>,
    x: &Tensor<T>,
    p: f64,
    samples: usize,
    rng: &mut dyn RngCore,
    masks: Option<&PruningState>,
    work: &mut u64,
) -> Result<Tensor<T>> {
    if samples == 0 {
        return Err(Error::Config("mc sample count must be >= 1".into()));
    }
    let (saved_mode, saved_p) = (model.mode(), model.dropout_rate());
    model.set_dropout_rate(p)?;
    model.set_mode(Mode::McSample);
    let mut acc: Option<Vec<T>> = None;
    let mut shape = Vec::new();
    let mut result = Ok(());
    for _ in 0..samples {
        match model.predict(x, 256, rng, masks, work) {
            Ok(y) => {
                shape = y.shape().to_vec();
                match &mut acc {
                    Some(a) => a.iter_mut().zip(y.data()).for_each(|(a, &b)| *a = *a + b),
                    None => acc = Some(y.into_data()),
                }
            }
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    model.set_mode(saved_mode);
    model.set_dropout_rate(saved_p)?;
    result?;
    let inv = T::of(1.0 / samples as f64);
    let data = acc.expect("samples >= 1").into_iter().map(|v| v * inv).collect();
    Tensor::new(shape, data)
}

/// A model configured for one regularization method.
#[derive(Clone, Debug)]
pub struct TrainingContext {
    pub spec: RegularizerSpec,
    pub pruning: Option<PruningState>,
}

/// Configures `model` for `spec.method`. Dropout sites are enabled only for
/// the dropout methods; synaptic pruning gets fresh all-ones masks. Methods
/// never combine, so pruning runs with dropout disabled.
pub fn attach_regularizer<T: Real>(
    model: &mut Model<T>,
    spec: &RegularizerSpec,
    schedule: ScheduleConfig,
) -> Result<TrainingContext> {
    spec.validate()?;
    let (train_p, pruning) = match spec.method {
        Method::None => (0.0, None),
        Method::Dropout => (spec.dropout_rate, None),
        Method::McDropout => (
            if spec.mc_train_dropout {
                spec.dropout_rate
            } else {
                0.0
            },
            None,
        ),
        Method::SynapticPruning => (0.0, Some(init_masks(model, schedule)?)),
    };
    model.set_dropout_rate(train_p)?;
    Ok(TrainingContext {
        spec: *spec,
        pruning,
    })
}

impl TrainingContext {
    /// Test-time prediction for this method: Monte Carlo averaging for
    /// `mc_dropout`, a single deterministic pass otherwise.
    pub fn predict<T: Real>(
        &self,
        model: &mut Model<T>,
        x: &Tensor<T>,
        rng: &mut dyn RngCore,
        work: &mut u64,
    ) -> Result<Tensor<T>> {
        let masks = self.pruning.as_ref();
        match self.spec.method {
            Method::McDropout => mc_predict(
                model,
                x,
                self.spec.dropout_rate,
                self.spec.mc_samples,
                rng,
                masks,
                work,
            ),
            _ => {
                let saved = model.mode();
                model.set_mode(Mode::Eval);
                let out = model.predict(x, 256, rng, masks, work);
                model.set_mode(saved);
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelConfig, ModelKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_rate_and_inference_are_identity() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(vec![5, 5], 1.5)).unwrap();
        for (p, training) in [(0.0, true), (0.0, false), (0.5, false), (0.9, false)] {
            let y = dropout_forward(&mut g, x, p, training, &mut rng(0)).unwrap();
            assert_eq!(y, x);
        }
        assert!(dropout_forward(&mut g, x, 1.0, true, &mut rng(0)).is_err());
    }

    #[test]
    fn training_dropout_statistics() {
        // Binomial(n, 0.5) zero count; inverted scaling preserves the mean.
        let n = 100_000usize;
        let p = 0.5;
        let mut g = Graph::<f64>::new();
        let data: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let in_mean = data.iter().sum::<f64>() / n as f64;
        let x = g.constant(Tensor::new(vec![n], data.clone()).unwrap()).unwrap();
        let y = dropout_forward(&mut g, x, p, true, &mut rng(3)).unwrap();
        let out = g.value(y).data();
        let zeros = out.iter().filter(|&&v| v == 0.0).count() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((zeros - n as f64 * p).abs() < 3.0 * sigma);

        // Var(out_i) = x_i² · p/(1−p); the sample mean has sd sqrt(Σ var)/n.
        let var_sum: f64 = data.iter().map(|v| v * v * p / (1.0 - p)).sum();
        let sd = var_sum.sqrt() / n as f64;
        let out_mean = out.iter().sum::<f64>() / n as f64;
        assert!((out_mean - in_mean).abs() < 3.0 * sd);
    }

    #[test]
    fn mc_predict_zero_rate_is_deterministic() {
        let mut cfg = ModelConfig::new(ModelKind::Rnn, 2, 3);
        cfg.hidden_size = 8;
        let mut m = build_model::<f64>(&cfg, 1).unwrap();
        let x = Tensor::full(vec![4, 3, 2], 0.3);
        let mut w = 0;
        let a = mc_predict(&mut m, &x, 0.0, 5, &mut rng(1), None, &mut w).unwrap();
        m.set_mode(Mode::Eval);
        let b = m.predict(&x, 256, &mut rng(2), None, &mut w).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn attach_none_matches_raw_model() {
        let cfg = ModelConfig::new(ModelKind::Lstm, 2, 3);
        let raw = build_model::<f64>(&cfg, 5).unwrap();
        let mut m = raw.clone();
        let ctx = attach_regularizer(&mut m, &RegularizerSpec::new(Method::None), ScheduleConfig::default()).unwrap();
        assert!(ctx.pruning.is_none());
        let x = Tensor::full(vec![2, 3, 2], 0.7);
        let mut g1 = Graph::new();
        let mut g2 = Graph::new();
        let a = m.forward(&mut g1, &x, &mut rng(0), None).unwrap();
        let b = raw.forward(&mut g2, &x, &mut rng(0), None).unwrap();
        assert_eq!(g1.value(a), g2.value(b));
    }

    #[test]
    fn dropout_context_is_stochastic_in_training_only() {
        let mut cfg = ModelConfig::new(ModelKind::Rnn, 2, 3);
        cfg.hidden_size = 16;
        let mut m = build_model::<f64>(&cfg, 5).unwrap();
        attach_regularizer(&mut m, &RegularizerSpec::new(Method::Dropout), ScheduleConfig::default()).unwrap();
        let x = Tensor::full(vec![2, 3, 2], 0.7);
        let run = |m: &Model<f64>, seed| {
            let mut g = Graph::new();
            let y = m.forward(&mut g, &x, &mut rng(seed), None).unwrap();
            g.value(y).clone()
        };
        assert_ne!(run(&m, 1), run(&m, 2));
        m.set_mode(Mode::Eval);
        assert_eq!(run(&m, 1), run(&m, 2));
    }

    #[test]
    fn pruning_context_has_masks_and_no_dropout() {
        let mut m = build_model::<f64>(&ModelConfig::new(ModelKind::Rnn, 2, 3), 5).unwrap();
        m.set_dropout_rate(0.3).unwrap();
        let ctx = attach_regularizer(
            &mut m,
            &RegularizerSpec::new(Method::SynapticPruning),
            ScheduleConfig::default(),
        )
        .unwrap();
        assert!(ctx.pruning.is_some());
        assert_eq!(m.dropout_rate(), 0.0);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
