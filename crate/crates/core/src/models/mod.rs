//! Forecasting models: Elman RNN, LSTM and a reduced PatchTST.
//!
//! Every model maps a `[batch, seq_len, features]` window to a
//! `[batch, horizon]` forecast of the target column. Parameters live in a
//! [`ParamStore`] grouped into ordered modules; 2-D weight matrices are
//! flagged prunable according to [`PrunableScope`], biases and norm
//! parameters never are.

mod patchtst;
mod recurrent;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pruning::PruningState;
use crate::regularizers::dropout_forward;
use crate::tensor::{Graph, ParamStore, Parameter, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Rnn,
    Lstm,
    PatchTst,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
            ModelKind::PatchTst => "patchtst",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(ModelKind::Rnn),
            "lstm" => Ok(ModelKind::Lstm),
            "patchtst" | "patchtst-lite" | "patchtst_lite" => Ok(ModelKind::PatchTst),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Which weight matrices receive pruning masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrunableScope {
    /// Fully connected layers only: heads, patch embedding and feed-forward
    /// projections. Recurrent and attention matrices are excluded.
    DenseOnly,
    /// Every 2-D weight matrix in the network.
    AllWeights,
}

impl FromStr for PrunableScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dense-only" | "dense" => Ok(PrunableScope::DenseOnly),
            "all-weights" | "all" => Ok(PrunableScope::AllWeights),
            other => Err(Error::Config(format!("unknown prunable scope '{other}'"))),
        }
    }
}

impl fmt::Display for PrunableScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrunableScope::DenseOnly => "dense-only",
            PrunableScope::AllWeights => "all-weights",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_features: usize,
    /// Input window length the model will be fed. Recurrent models accept
    /// any length ≥ 1; PatchTST-lite sizes its head from it.
    pub seq_len: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub patch_len: usize,
    pub patch_stride: usize,
    pub heads: usize,
    pub dropout: f64,
    pub horizon: usize,
    pub scope: PrunableScope,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, input_features: usize, seq_len: usize) -> Self {
        Self {
            kind,
            input_features,
            seq_len,
            hidden_size: 64,
            layers: 1,
            patch_len: 4,
            patch_stride: 2,
            heads: 1,
            dropout: 0.0,
            horizon: 1,
            scope: PrunableScope::AllWeights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_features == 0 {
            return bad("input-feature-count must be > 0".into());
        }
        if self.hidden_size == 0 {
            return bad("hidden-size must be > 0".into());
        }
        if self.layers == 0 {
            return bad("layer-count must be > 0".into());
        }
        if self.horizon == 0 {
            return bad("forecast-horizon must be > 0".into());
        }
        if self.seq_len == 0 {
            return bad("sequence length must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout));
        }
        if self.kind == ModelKind::PatchTst {
            if self.patch_len == 0 || self.patch_stride == 0 {
                return bad("patch length and stride must be > 0".into());
            }
            if self.patch_len > self.seq_len {
                return bad(format!(
                    "patch length {} exceeds sequence length {}",
                    self.patch_len, self.seq_len
                ));
            }
            if self.heads == 0 || self.hidden_size % self.heads != 0 {
                return bad(format!(
                    "hidden size {} not divisible by {} heads",
                    self.hidden_size, self.heads
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
    /// Inference with dropout sites kept stochastic (Monte Carlo dropout).
    McSample,
}

#[derive(Clone, Debug)]
pub(crate) enum Arch {
    Recurrent(recurrent::Layout),
    PatchTst(patchtst::Layout),
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    cfg: ModelConfig,
    params: ParamStore<T>,
    modules: Vec<&'static str>,
    arch: Arch,
    mode: Mode,
}

/// Builds a model with parameters drawn deterministically from `seed`.
///
/// Weight matrices are uniform in `±1/sqrt(fan_in)`, biases start at zero
/// and layer-norm gains at one. Draws happen in f64, so an `f32` and an
/// `f64` model built from the same seed hold the same (rounded) weights.
pub fn build_model<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<Model<T>> {
    cfg.validate()?;
    let mut b = Builder::<T> {
        params: ParamStore::new(),
        modules: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        scope: cfg.scope,
    };
    let arch = match cfg.kind {
        ModelKind::Rnn | ModelKind::Lstm => Arch::Recurrent(recurrent::build(cfg, &mut b)),
        ModelKind::PatchTst => Arch::PatchTst(patchtst::build(cfg, &mut b)),
    };
    Ok(Model {
        cfg: cfg.clone(),
        params: b.params,
        modules: b.modules,
        arch,
        mode: Mode::Train,
    })
}

pub(crate) struct Builder<T> {
    params: ParamStore<T>,
    modules: Vec<&'static str>,
    rng: ChaCha8Rng,
    scope: PrunableScope,
}

impl<T: Real> Builder<T> {
    fn module(&mut self, class: &'static str) -> usize {
        self.modules.push(class);
        self.modules.len() - 1
    }

    /// `rows × cols` weight, uniform in ±1/sqrt(cols). `dense` marks
    /// fully connected layers for the dense-only scope.
    fn weight(&mut self, module: usize, name: &str, rows: usize, cols: usize, dense: bool) -> usize {
        let bound = 1.0 / (cols as f64).sqrt();
        let data: Vec<T> = (0..rows * cols)
            .map(|_| T::of(self.rng.random_range(-bound..bound)))
            .collect();
        let class = self.modules[module];
        let mut p = Parameter::new(
            module,
            class,
            name,
            Tensor::new(vec![rows, cols], data).expect("sized"),
        );
        p.prunable = match self.scope {
            PrunableScope::AllWeights => true,
            PrunableScope::DenseOnly => dense,
        };
        self.params.push(p)
    }

    fn vector(&mut self, module: usize, name: &str, len: usize, fill: f64) -> usize {
        let class = self.modules[module];
        self.params.push(Parameter::new(
            module,
            class,
            name,
            Tensor::full(vec![len], T::of(fill)),
        ))
    }
}

impl<T: Real> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Class name of each module, indexed by module position.
    pub fn modules(&self) -> &[&'static str] {
        &self.modules
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn dropout_rate(&self) -> f64 {
        self.cfg.dropout
    }

    pub fn set_dropout_rate(&mut self, p: f64) -> Result<()> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        self.cfg.dropout = p;
        Ok(())
    }

    /// Prunable weights ordered by module index, then parameter name.
    pub fn prunable_parameters(&self) -> Vec<(usize, &str, &Tensor<T>)> {
        self.prunable_ids()
            .into_iter()
            .map(|id| {
                let p = self.params.get(id);
                (p.module_index, p.name.as_str(), &p.value)
            })
            .collect()
    }

    /// Parameter ids of [`Model::prunable_parameters`], same order.
    pub fn prunable_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.params.len())
            .filter(|&i| self.params.get(i).prunable)
            .collect();
        ids.sort_by(|&a, &b| {
            let (pa, pb) = (self.params.get(a), self.params.get(b));
            (pa.module_index, &pa.name).cmp(&(pb.module_index, &pb.name))
        });
        ids
    }

    /// Forward pass with this model's own parameters. See
    /// [`Model::forward_params`].
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        batch: &Tensor<T>,
        rng: &mut dyn RngCore,
        masks: Option<&PruningState>,
    ) -> Result<Var> {
        self.forward_params(&self.params, g, batch, rng, masks)
    }

    /// Forward pass using `params` in place of the model's own store
    /// (same layout required). Masked parameters enter the graph as
    /// `θ ⊙ B` with pruned entries written as exact zeros.
    pub fn forward_params(
        &self,
        params: &ParamStore<T>,
        g: &mut Graph<T>,
        batch: &Tensor<T>,
        rng: &mut dyn RngCore,
        masks: Option<&PruningState>,
    ) -> Result<Var> {
        if batch.rank() != 3 {
            return Err(Error::shape(
                "model_forward",
                format!("expected [batch, seq_len, features], got {:?}", batch.shape()),
            ));
        }
        let (_, s, f) = (batch.shape()[0], batch.shape()[1], batch.shape()[2]);
        if f != self.cfg.input_features {
            return Err(Error::shape(
                "model_forward",
                format!("expected {} features, got {}", self.cfg.input_features, f),
            ));
        }
        if s == 0 {
            return Err(Error::Config("sequence length must be ≥ 1".into()));
        }
        let ctx = Ctx {
            params,
            masks,
            dropout: self.active_dropout(),
        };
        match &self.arch {
            Arch::Recurrent(l) => recurrent::forward(l, self.cfg.kind, &ctx, g, batch, rng),
            Arch::PatchTst(l) => patchtst::forward(l, &self.cfg, &ctx, g, batch, rng),
        }
    }

    fn active_dropout(&self) -> f64 {
        match self.mode {
            Mode::Eval => 0.0,
            Mode::Train | Mode::McSample => self.cfg.dropout,
        }
    }

    /// Inference over `inputs` in chunks, returning `[samples, horizon]`.
    pub fn predict(
        &self,
        inputs: &Tensor<T>,
        chunk: usize,
        rng: &mut dyn RngCore,
        masks: Option<&PruningState>,
        work: &mut u64,
    ) -> Result<Tensor<T>> {
        let n = inputs.shape()[0];
        let row = inputs.len() / n.max(1);
        let chunk = chunk.max(1);
        let mut out = Vec::with_capacity(n * self.cfg.horizon);
        let mut g = Graph::new();
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let mut shape = inputs.shape().to_vec();
            shape[0] = end - start;
            let x = Tensor::new(shape, inputs.data()[start * row..end * row].to_vec())?;
            g.clear();
            let y = self.forward(&mut g, &x, rng, masks)?;
            out.extend_from_slice(g.value(y).data());
            start = end;
        }
        *work += g.work();
        Tensor::new(vec![n, self.cfg.horizon], out)
    }
}

pub(crate) struct Ctx<'a, T> {
    params: &'a ParamStore<T>,
    masks: Option<&'a PruningState>,
    dropout: f64,
}

impl<T: Real> Ctx<'_, T> {
    fn bind(&self, g: &mut Graph<T>, id: usize) -> Result<Var> {
        let p = self.params.get(id);
        let value = match self.masks.and_then(|m| m.mask_for(id)) {
            Some(mask) => {
                if mask.len() != p.value.len() {
                    return Err(Error::StateCorruption(format!(
                        "mask for {} has {} entries, parameter has {}",
                        p.name,
                        mask.len(),
                        p.value.len()
                    )));
                }
                let data = p
                    .value
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&w, &b)| if b == 0 { T::zero() } else { w })
                    .collect();
                Tensor::new(p.value.shape().to_vec(), data)?
            }
            None => p.value.clone(),
        };
        g.parameter(id, value)
    }

    /// Binds a `rows × cols` weight and returns its transpose, ready for
    /// `x · Wᵀ`.
    fn bind_t(&self, g: &mut Graph<T>, id: usize) -> Result<Var> {
        let w = self.bind(g, id)?;
        g.transpose(w)
    }

    fn dropout(&self, g: &mut Graph<T>, x: Var, rng: &mut dyn RngCore) -> Result<Var> {
        dropout_forward(g, x, self.dropout, self.dropout > 0.0, rng)
    }
}

/// Slices timestep `t` of a `[batch, seq, features]` tensor into a
/// `[batch, features]` constant.
fn timestep<T: Real>(batch: &Tensor<T>, t: usize) -> Tensor<T> {
    let (b, s, f) = (batch.shape()[0], batch.shape()[1], batch.shape()[2]);
    let mut out = Vec::with_capacity(b * f);
    for i in 0..b {
        let off = i * s * f + t * f;
        out.extend_from_slice(&batch.data()[off..off + f]);
    }
    Tensor::new(vec![b, f], out).expect("sized")
}
