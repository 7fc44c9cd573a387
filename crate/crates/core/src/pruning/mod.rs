//! Training-time global magnitude pruning.
//!
//! Each prunable weight matrix gets a binary mask. After a warmup period a
//! cubic schedule raises the target sparsity, and every `f_prune` batches
//! the lowest-magnitude active weights across the whole network are
//! switched off until the global pruned count matches the target. Masks
//! only ever lose ones, and pruned weights are forced back to exactly zero
//! after every optimizer step.

mod schedule;
mod select;
mod state;
mod stats;

pub use schedule::{cubic_sparsity, ScheduleConfig};
pub use select::{global_magnitude_prune, prune_pool};
pub use state::{
    apply_masks, init_masks, post_step_enforce, training_prune_hook, ParamMask, PruningState,
    TiePolicy,
};
pub use stats::{sparsity_stats, LayerSparsity, SparsityReport};
