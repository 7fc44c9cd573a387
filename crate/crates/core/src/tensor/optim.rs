use super::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

/// A named trainable tensor owned by one module of a model.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub module_index: usize,
    pub module_class: &'static str,
    pub value: Tensor<T>,
    pub grad: Option<Vec<T>>,
    pub prunable: bool,
}

impl<T: Real> Parameter<T> {
    pub fn new(
        module_index: usize,
        module_class: &'static str,
        name: impl Into<String>,
        value: Tensor<T>,
    ) -> Self {
        Self {
            name: name.into(),
            module_index,
            module_class,
            value,
            grad: None,
            prunable: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, p: Parameter<T>) -> usize {
        self.params.push(p);
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: usize) -> &Parameter<T> {
        &self.params[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Parameter<T> {
        &mut self.params[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, module_index: usize, name: &str) -> Option<usize> {
        self.params
            .iter()
            .position(|p| p.module_index == module_index && p.name == name)
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn bytes(&self) -> usize {
        self.params.iter().map(|p| p.value.bytes()).sum()
    }

    /// Inserts parameter `id` into `g` as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>, id: usize) -> Result<Var> {
        g.parameter(id, self.params[id].value.clone())
    }

    /// Sets every gradient buffer to zeros.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            match &mut p.grad {
                Some(g) => g.iter_mut().for_each(|v| *v = T::zero()),
                None => p.grad = Some(vec![T::zero(); p.value.len()]),
            }
        }
    }

    /// Adds the gradients computed by `g.backward` to the bound parameters.
    pub fn collect_grads(&mut self, g: &Graph<T>) {
        for &(id, v) in g.bindings() {
            let p = &mut self.params[id];
            let buf = p.grad.get_or_insert_with(|| vec![T::zero(); p.value.len()]);
            if let Some(src) = g.grad(v) {
                for (a, &b) in buf.iter_mut().zip(src) {
                    *a = *a + b;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub lr: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ParamStore<T>) -> Self {
        let buffers = || match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam { .. } => params
                .iter()
                .map(|p| vec![T::zero(); p.value.len()])
                .collect(),
        };
        Self {
            kind,
            lr,
            step: 0,
            first: buffers(),
            second: buffers(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn bytes(&self) -> usize {
        self.first
            .iter()
            .chain(&self.second)
            .map(|b| b.len() * T::BYTES)
            .sum()
    }

    /// Applies one update to every parameter from its gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(Error::Contract(format!(
                "parameter {} of module {} has no gradient",
                p.name, p.module_index
            )));
        }
        if let OptimizerKind::Adam { .. } = self.kind {
            if self.first.len() != params.len() {
                return Err(Error::Contract(
                    "optimizer state does not match parameter set".into(),
                ));
            }
        }
        self.step += 1;
        let lr = T::of(self.lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let g = p.grad.as_ref().expect("checked above");
                    for (w, &d) in p.value.data_mut().iter_mut().zip(g) {
                        *w = *w - lr * d;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let bc1 = T::of(1.0 - beta1.powi(t));
                let bc2 = T::of(1.0 - beta2.powi(t));
                let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(eps));
                let one = T::one();
                for (i, p) in params.iter_mut().enumerate() {
                    let g = p.grad.as_ref().expect("checked above");
                    let m = &mut self.first[i];
                    let v = &mut self.second[i];
                    for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                        let d = g[j];
                        m[j] = b1 * m[j] + (one - b1) * d;
                        v[j] = b2 * v[j] + (one - b2) * d * d;
                        let mhat = m[j] / bc1;
                        let vhat = v[j] / bc2;
                        *w = *w - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Elementwise work of one step, for the modeled clock.
    pub fn step_work(&self, params: &ParamStore<T>) -> u64 {
        let per = match self.kind {
            OptimizerKind::Sgd => 2,
            OptimizerKind::Adam { .. } => 12,
        };
        per * params.numel() as u64
    }
}
