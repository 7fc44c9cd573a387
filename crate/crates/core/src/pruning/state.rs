use std::collections::BTreeMap;

use super::{cubic_sparsity, global_magnitude_prune, ScheduleConfig};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::Real;

/// How entries tied with the selection threshold are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TiePolicy {
    /// Prune everything strictly below the threshold, then entries equal to
    /// it in parameter traversal order until the target count is exact.
    #[default]
    ExactCount,
    /// Prune strictly below the threshold only. The k-th entry itself stays
    /// active, so each prune undershoots its target by at least one.
    StrictBelow,
}

/// Binary mask for one prunable parameter. `1` = active, `0` = pruned.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamMask {
    pub param_id: usize,
    pub module_index: usize,
    pub module_class: &'static str,
    pub name: String,
    pub shape: Vec<usize>,
    pub bits: Vec<u8>,
}

impl ParamMask {
    pub fn pruned(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 0).count()
    }
}

#[derive(Clone, Debug)]
pub struct PruningState {
    pub(crate) masks: Vec<ParamMask>,
    by_param: BTreeMap<usize, usize>,
    batch_count: u64,
    schedule: ScheduleConfig,
    tie_policy: TiePolicy,
}

impl PruningState {
    pub fn masks(&self) -> &[ParamMask] {
        &self.masks
    }

    pub fn mask_for(&self, param_id: usize) -> Option<&[u8]> {
        self.by_param
            .get(&param_id)
            .map(|&i| self.masks[i].bits.as_slice())
    }

    pub fn batch_count(&self) -> u64 {
        self.batch_count
    }

    /// Clears the given flat entries of parameter `param_id`'s mask.
    /// Already-pruned entries stay pruned.
    pub fn prune_entries(&mut self, param_id: usize, indices: &[usize]) -> Result<()> {
        let &i = self
            .by_param
            .get(&param_id)
            .ok_or_else(|| Error::Contract(format!("parameter {param_id} has no mask")))?;
        let bits = &mut self.masks[i].bits;
        if let Some(&bad) = indices.iter().find(|&&j| j >= bits.len()) {
            return Err(Error::Contract(format!(
                "entry {bad} out of range for mask of {} entries",
                bits.len()
            )));
        }
        for &j in indices {
            bits[j] = 0;
        }
        Ok(())
    }

    pub fn schedule(&self) -> &ScheduleConfig {
        &self.schedule
    }

    pub fn tie_policy(&self) -> TiePolicy {
        self.tie_policy
    }

    pub fn with_tie_policy(mut self, policy: TiePolicy) -> Self {
        self.tie_policy = policy;
        self
    }

    pub fn total_weights(&self) -> usize {
        self.masks.iter().map(|m| m.bits.len()).sum()
    }

    pub fn pruned_weights(&self) -> usize {
        self.masks.iter().map(ParamMask::pruned).sum()
    }

    pub fn global_sparsity(&self) -> f64 {
        let total = self.total_weights();
        if total == 0 {
            0.0
        } else {
            self.pruned_weights() as f64 / total as f64
        }
    }

    pub fn bytes(&self) -> usize {
        self.total_weights()
    }

    /// Checks that every mask still matches the shape of its parameter.
    pub(crate) fn check<T: Real>(&self, model: &Model<T>) -> Result<()> {
        let params = model.params();
        for m in &self.masks {
            if m.param_id >= params.len() {
                return Err(Error::StateCorruption(format!(
                    "mask {} refers to missing parameter {}",
                    m.name, m.param_id
                )));
            }
            let p = params.get(m.param_id);
            if p.value.shape() != m.shape.as_slice() || m.bits.len() != p.value.len() {
                return Err(Error::StateCorruption(format!(
                    "mask {:?} for {}.{} does not match parameter shape {:?}",
                    m.shape,
                    p.module_class,
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }
}

/// One all-ones mask per prunable parameter; `batch_count` starts at zero.
pub fn init_masks<T: Real>(model: &Model<T>, schedule: ScheduleConfig) -> Result<PruningState> {
    schedule.validate()?;
    let ids = model.prunable_ids();
    if ids.is_empty() {
        return Err(Error::Config("model has no prunable parameters".into()));
    }
    let masks: Vec<ParamMask> = ids
        .iter()
        .map(|&id| {
            let p = model.params().get(id);
            ParamMask {
                param_id: id,
                module_index: p.module_index,
                module_class: p.module_class,
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                bits: vec![1; p.value.len()],
            }
        })
        .collect();
    let by_param = masks
        .iter()
        .enumerate()
        .map(|(i, m)| (m.param_id, i))
        .collect();
    Ok(PruningState {
        masks,
        by_param,
        batch_count: 0,
        schedule,
        tie_policy: TiePolicy::default(),
    })
}

/// Per-batch pruning hook, called after backward and before the optimizer
/// step. Advances the global batch counter; once `epoch >= t_warmup` and the
/// counter is a multiple of `f_prune`, prunes to `cubic_sparsity(epoch)`.
/// Returns whether a pruning round ran.
pub fn training_prune_hook<T: Real>(
    state: &mut PruningState,
    model: &Model<T>,
    epoch: u32,
) -> Result<bool> {
    state.batch_count += 1;
    let sched = state.schedule;
    if epoch >= sched.t_warmup && state.batch_count % sched.f_prune == 0 {
        let target = cubic_sparsity(epoch, &sched);
        global_magnitude_prune(state, model, target)?;
        return Ok(true);
    }
    Ok(false)
}

/// `θ ← θ ⊙ B` for every masked parameter. Pruned entries become `+0.0`.
pub fn apply_masks<T: Real>(model: &mut Model<T>, state: &PruningState) -> Result<()> {
    state.check(model)?;
    let params = model.params_mut();
    for m in &state.masks {
        let p = params.get_mut(m.param_id);
        for (w, &b) in p.value.data_mut().iter_mut().zip(&m.bits) {
            if b == 0 {
                *w = T::zero();
            }
        }
    }
    Ok(())
}

/// Mask enforcement after an optimizer step. Same effect as [`apply_masks`].
pub fn post_step_enforce<T: Real>(model: &mut Model<T>, state: &PruningState) -> Result<()> {
    apply_masks(model, state)
}


impl PruningState {
    #[cfg(test)]
    pub(crate) fn by_param_rebuild(&mut self) {
        self.by_param = self
            .masks
            .iter()
            .enumerate()
            .map(|(i, m)| (m.param_id, i))
            .collect();
    }
}
