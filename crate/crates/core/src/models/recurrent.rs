use rand::RngCore;

use super::{timestep, Builder, Ctx, ModelConfig, ModelKind};
use crate::error::Result;
use crate::tensor::{Graph, Real, Tensor, Var};

#[derive(Clone, Debug)]
pub(crate) struct Cell {
    weight_ih: usize,
    weight_hh: usize,
    bias: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    cells: Vec<Cell>,
    head_weight: usize,
    head_bias: usize,
    hidden: usize,
}

pub(crate) fn build<T: Real>(cfg: &ModelConfig, b: &mut Builder<T>) -> Layout {
    let (class, gates) = match cfg.kind {
        ModelKind::Lstm => ("LSTM", 4),
        _ => ("RNN", 1),
    };
    let h = cfg.hidden_size;
    let mut cells = Vec::with_capacity(cfg.layers);
    for layer in 0..cfg.layers {
        let input = if layer == 0 { cfg.input_features } else { h };
        let m = b.module(class);
        cells.push(Cell {
            weight_ih: b.weight(m, "weight_ih", gates * h, input, false),
            weight_hh: b.weight(m, "weight_hh", gates * h, h, false),
            bias: b.vector(m, "bias", gates * h, 0.0),
        });
    }
    let m = b.module("Linear");
    Layout {
        cells,
        head_weight: b.weight(m, "weight", cfg.horizon, h, true),
        head_bias: b.vector(m, "bias", cfg.horizon, 0.0),
        hidden: h,
    }
}

pub(crate) fn forward<T: Real>(
    l: &Layout,
    kind: ModelKind,
    ctx: &Ctx<'_, T>,
    g: &mut Graph<T>,
    batch: &Tensor<T>,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    let (bsz, seq) = (batch.shape()[0], batch.shape()[1]);
    let h = l.hidden;
    let mut inputs: Vec<Var> = (0..seq)
        .map(|t| g.constant(timestep(batch, t)))
        .collect::<Result<_>>()?;

    let mut last = None;
    for (li, cell) in l.cells.iter().enumerate() {
        let w_ih = ctx.bind_t(g, cell.weight_ih)?;
        let w_hh = ctx.bind_t(g, cell.weight_hh)?;
        let bias = ctx.bind(g, cell.bias)?;
        let mut state: Option<Var> = None;
        let mut memory: Option<Var> = None;
        let mut outs = Vec::with_capacity(seq);
        for &x in &inputs {
            let xw = g.matmul(x, w_ih)?;
            // zero initial state: skip the recurrent term at t = 0
            let pre = match state {
                Some(hprev) => {
                    let hw = g.matmul(hprev, w_hh)?;
                    g.add(xw, hw)?
                }
                None => xw,
            };
            let pre = g.add(pre, bias)?;
            let hnew = match kind {
                ModelKind::Lstm => {
                    let i = g.slice(pre, 1, 0, h)?;
                    let i = g.sigmoid(i)?;
                    let f = g.slice(pre, 1, h, h)?;
                    let f = g.sigmoid(f)?;
                    let c_in = g.slice(pre, 1, 2 * h, h)?;
                    let c_in = g.tanh(c_in)?;
                    let o = g.slice(pre, 1, 3 * h, h)?;
                    let o = g.sigmoid(o)?;
                    let write = g.mul(i, c_in)?;
                    let c = match memory {
                        Some(cprev) => {
                            let keep = g.mul(f, cprev)?;
                            g.add(keep, write)?
                        }
                        None => write,
                    };
                    memory = Some(c);
                    let tc = g.tanh(c)?;
                    g.mul(o, tc)?
                }
                _ => g.tanh(pre)?,
            };
            state = Some(hnew);
            outs.push(hnew);
        }
        last = state;
        if li + 1 < l.cells.len() {
            inputs = outs
                .into_iter()
                .map(|o| ctx.dropout(g, o, rng))
                .collect::<Result<_>>()?;
        }
    }

    let last = match last {
        Some(v) => v,
        None => g.constant(Tensor::zeros(vec![bsz, h]))?,
    };
    let last = ctx.dropout(g, last, rng)?;
    let w = ctx.bind_t(g, l.head_weight)?;
    let b = ctx.bind(g, l.head_bias)?;
    let y = g.matmul(last, w)?;
    g.add(y, b)
}
