//! PatchTST-lite: linear patch embedding, one pre-norm encoder block
//! (multi-head self-attention and a GELU feed-forward, both residual),
//! flatten, dense head. All input features share one embedding.

use rand::RngCore;

use super::{Builder, Ctx, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    embed_w: usize,
    embed_b: usize,
    ln1: (usize, usize),
    q: (usize, usize),
    k: (usize, usize),
    v: (usize, usize),
    out: (usize, usize),
    ln2: (usize, usize),
    fc1: (usize, usize),
    fc2: (usize, usize),
    head_w: usize,
    head_b: usize,
    patches: usize,
}

pub(crate) fn patch_count(seq_len: usize, patch_len: usize, stride: usize) -> usize {
    (seq_len - patch_len) / stride + 1
}

pub(crate) fn build<T: Real>(cfg: &ModelConfig, b: &mut Builder<T>) -> Layout {
    let d = cfg.hidden_size;
    let ff = 2 * d;
    let patch_dim = cfg.patch_len * cfg.input_features;
    let patches = patch_count(cfg.seq_len, cfg.patch_len, cfg.patch_stride);

    let m = b.module("PatchEmbedding");
    let embed_w = b.weight(m, "weight", d, patch_dim, true);
    let embed_b = b.vector(m, "bias", d, 0.0);

    let m = b.module("LayerNorm");
    let ln1 = (b.vector(m, "weight", d, 1.0), b.vector(m, "bias", d, 0.0));

    let m = b.module("MultiheadAttention");
    let mut proj = |name: &str| {
        (
            b.weight(m, &format!("{name}_weight"), d, d, false),
            b.vector(m, &format!("{name}_bias"), d, 0.0),
        )
    };
    let (q, k, v, out) = (proj("q"), proj("k"), proj("v"), proj("out"));

    let m = b.module("LayerNorm");
    let ln2 = (b.vector(m, "weight", d, 1.0), b.vector(m, "bias", d, 0.0));

    let m = b.module("FeedForward");
    let fc1 = (b.weight(m, "fc1_weight", ff, d, true), b.vector(m, "fc1_bias", ff, 0.0));
    let fc2 = (b.weight(m, "fc2_weight", d, ff, true), b.vector(m, "fc2_bias", d, 0.0));

    let m = b.module("Linear");
    let head_w = b.weight(m, "weight", cfg.horizon, patches * d, true);
    let head_b = b.vector(m, "bias", cfg.horizon, 0.0);

    Layout {
        embed_w,
        embed_b,
        ln1,
        q,
        k,
        v,
        out,
        ln2,
        fc1,
        fc2,
        head_w,
        head_b,
        patches,
    }
}

/// `[batch, seq, features]` → `[batch, patches, patch_len·features]`
fn patchify<T: Real>(batch: &Tensor<T>, len: usize, stride: usize, patches: usize) -> Tensor<T> {
    let (b, s, f) = (batch.shape()[0], batch.shape()[1], batch.shape()[2]);
    let mut out = Vec::with_capacity(b * patches * len * f);
    for i in 0..b {
        for p in 0..patches {
            let start = i * s * f + p * stride * f;
            out.extend_from_slice(&batch.data()[start..start + len * f]);
        }
    }
    Tensor::new(vec![b, patches, len * f], out).expect("sized")
}

/// Fixed sinusoidal position table of shape `[patches, d]`.
fn positions<T: Real>(patches: usize, d: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(patches * d);
    for p in 0..patches {
        for j in 0..d {
            let rate = 10000f64.powf((2 * (j / 2)) as f64 / d as f64);
            let a = p as f64 / rate;
            data.push(T::of(if j % 2 == 0 { a.sin() } else { a.cos() }));
        }
    }
    Tensor::new(vec![patches, d], data).expect("sized")
}

fn linear<T: Real>(ctx: &Ctx<'_, T>, g: &mut Graph<T>, x: Var, wb: (usize, usize)) -> Result<Var> {
    let w = ctx.bind_t(g, wb.0)?;
    let b = ctx.bind(g, wb.1)?;
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

pub(crate) fn forward<T: Real>(
    l: &Layout,
    cfg: &ModelConfig,
    ctx: &Ctx<'_, T>,
    g: &mut Graph<T>,
    batch: &Tensor<T>,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    let (bsz, seq) = (batch.shape()[0], batch.shape()[1]);
    if seq < cfg.patch_len {
        return Err(Error::Config(format!(
            "sequence length {} shorter than patch length {}",
            seq, cfg.patch_len
        )));
    }
    if seq != cfg.seq_len {
        return Err(Error::shape(
            "model_forward",
            format!("model built for sequence length {}, got {}", cfg.seq_len, seq),
        ));
    }
    let d = cfg.hidden_size;
    let heads = cfg.heads;
    let dh = d / heads;

    let x = g.constant(patchify(batch, cfg.patch_len, cfg.patch_stride, l.patches))?;
    let x = linear(ctx, g, x, (l.embed_w, l.embed_b))?;
    let pos = g.constant(positions(l.patches, d))?;
    let x = g.add(x, pos)?;

    // attention sublayer
    let (g1, b1) = (ctx.bind(g, l.ln1.0)?, ctx.bind(g, l.ln1.1)?);
    let n1 = g.layer_norm(x, g1, b1, 2, LN_EPS)?;
    let q = linear(ctx, g, n1, l.q)?;
    let k = linear(ctx, g, n1, l.k)?;
    let v = linear(ctx, g, n1, l.v)?;
    let mut outs = Vec::with_capacity(heads);
    for hd in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice(q, 2, hd * dh, dh)?,
                g.slice(k, 2, hd * dh, dh)?,
                g.slice(v, 2, hd * dh, dh)?,
            )
        };
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let attn = g.softmax(scores, 2)?;
        outs.push(g.matmul(attn, vh)?);
    }
    let att = if heads == 1 { outs[0] } else { g.concat(&outs, 2)? };
    let att = linear(ctx, g, att, l.out)?;
    let x = g.add(x, att)?;

    // feed-forward sublayer
    let (g2, b2) = (ctx.bind(g, l.ln2.0)?, ctx.bind(g, l.ln2.1)?);
    let n2 = g.layer_norm(x, g2, b2, 2, LN_EPS)?;
    let hidden = linear(ctx, g, n2, l.fc1)?;
    let hidden = g.gelu(hidden)?;
    let ff = linear(ctx, g, hidden, l.fc2)?;
    let x = g.add(x, ff)?;

    let flat = g.reshape(x, vec![bsz, l.patches * d])?;
    let flat = ctx.dropout(g, flat, rng)?;
    linear(ctx, g, flat, (l.head_w, l.head_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_geometry() {
        assert_eq!(patch_count(7, 4, 2), 2);
        assert_eq!(patch_count(60, 4, 2), 29);
        assert_eq!(patch_count(4, 4, 2), 1);
        let x = Tensor::<f64>::from_f64(vec![1, 5, 1], &[0., 1., 2., 3., 4.]).unwrap();
        let p = patchify(&x, 2, 2, patch_count(5, 2, 2));
        assert_eq!(p.shape(), &[1, 2, 2]);
        assert_eq!(p.data(), &[0., 1., 2., 3.]);
    }
}
