use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

/// Compares analytic gradients against central finite differences.
///
/// `forward` builds the scalar loss on a fresh graph from the current
/// parameter values; it must bind parameters through
/// [`ParamStore::bind`]. Up to `samples` coordinates are drawn (without
/// replacement) from all parameters using `seed`. Returns the largest
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)` observed.
pub fn gradient_check<F>(
    params: &mut ParamStore<f64>,
    eps: f64,
    samples: usize,
    seed: u64,
    mut forward: F,
) -> Result<f64>
where
    F: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    fn eval<F>(forward: &mut F, params: &ParamStore<f64>) -> Result<f64>
    where
        F: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
    {
        let mut g = Graph::new();
        let loss = forward(&mut g, params)?;
        g.value(loss).item()
    }

    let a = eval(&mut forward, params)?;
    let b = eval(&mut forward, params)?;
    if a.to_bits() != b.to_bits() {
        return Err(Error::Determinism(format!(
            "two identical forward calls returned {a} and {b}"
        )));
    }

    let mut g = Graph::new();
    let loss = forward(&mut g, params)?;
    g.backward(loss)?;
    let mut analytic: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
    for &(id, v) in g.bindings() {
        if let Some(src) = g.grad(v) {
            for (d, &s) in analytic[id].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    drop(g);

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.value.len()).map(move |j| (i, j)))
        .collect();
    if coords.is_empty() {
        return Err(Error::Contract("no parameters to check".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, coords.len(), samples.min(coords.len()));

    let mut worst = 0.0f64;
    for k in picks.iter() {
        let (i, j) = coords[k];
        let orig = params.get(i).value.data()[j];
        params.get_mut(i).value.data_mut()[j] = orig + eps;
        let plus = eval(&mut forward, params);
        params.get_mut(i).value.data_mut()[j] = orig - eps;
        let minus = eval(&mut forward, params);
        params.get_mut(i).value.data_mut()[j] = orig;
        let numeric = (plus? - minus?) / (2.0 * eps);
        let an = analytic[i][j];
        let rel = (an - numeric).abs() / 1f64.max(an.abs()).max(numeric.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}
