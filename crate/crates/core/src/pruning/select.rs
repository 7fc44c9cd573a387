use super::{PruningState, TiePolicy};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::Real;

/// Raises the global pruned count to `floor(s_target · n_total)` by
/// switching off the smallest-magnitude active weights across all masked
/// parameters. Returns the number of newly pruned entries.
///
/// Nothing changes when the target is already met or when it would consume
/// every remaining active weight. The threshold τ is the k-th smallest
/// active magnitude (k = entries still to prune); everything strictly below
/// τ is pruned, and under [`TiePolicy::ExactCount`] entries equal to τ are
/// taken in traversal order (mask order, then flat index) until exactly k
/// have been pruned.
pub fn global_magnitude_prune<T: Real>(
    state: &mut PruningState,
    model: &Model<T>,
    s_target: f64,
) -> Result<usize> {
    if !(0.0..1.0).contains(&s_target) {
        return Err(Error::Contract(format!(
            "target sparsity {s_target} outside [0, 1)"
        )));
    }
    state.check(model)?;
    let params = model.params();
    let weights: Vec<&[T]> = state
        .masks
        .iter()
        .map(|m| params.get(m.param_id).value.data())
        .collect();
    if weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric { op: "prune" });
    }
    let policy = state.tie_policy();
    let mut bits: Vec<&mut [u8]> = state.masks.iter_mut().map(|m| m.bits.as_mut_slice()).collect();
    Ok(prune_pool(&weights, &mut bits, s_target, policy))
}

/// Model-free core of [`global_magnitude_prune`]: `weights[i]` and
/// `masks[i]` describe one layer, and layers are traversed in slice order.
/// Lengths must match pairwise.
pub fn prune_pool<T: Real>(
    weights: &[&[T]],
    masks: &mut [&mut [u8]],
    s_target: f64,
    policy: TiePolicy,
) -> usize {
    debug_assert_eq!(weights.len(), masks.len());
    let mut pool: Vec<T> = Vec::new();
    let mut n_total = 0usize;
    for (w, bits) in weights.iter().zip(masks.iter()) {
        n_total += bits.len();
        pool.extend(
            w.iter()
                .zip(bits.iter())
                .filter(|(_, &b)| b == 1)
                .map(|(v, _)| v.abs()),
        );
    }
    let n_active = pool.len();
    let n_pruned = n_total - n_active;
    let n_target = (s_target * n_total as f64).floor() as usize;
    let k = n_target.saturating_sub(n_pruned);
    if k == 0 || k >= n_active {
        return 0;
    }

    let (_, tau, _) = pool.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite weights"));
    let tau = *tau;
    drop(pool);

    let mut pruned = 0usize;
    for (w, bits) in weights.iter().zip(masks.iter_mut()) {
        for (b, v) in bits.iter_mut().zip(w.iter()) {
            if *b == 1 && v.abs() < tau {
                *b = 0;
                pruned += 1;
            }
        }
    }
    if policy == TiePolicy::ExactCount {
        'outer: for (w, bits) in weights.iter().zip(masks.iter_mut()) {
            for (b, v) in bits.iter_mut().zip(w.iter()) {
                if pruned == k {
                    break 'outer;
                }
                if *b == 1 && v.abs() == tau {
                    *b = 0;
                    pruned += 1;
                }
            }
        }
    }
    pruned
}
