//! Checkpoints, trainability masks and the two transfer workflows.

mod checkpoint;
mod workflow;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, LayerEntry, Manifest, NormalizationEntry, Provenance,
    FORMAT_VERSION, MANIFEST_FILE,
};
pub use workflow::{
    atl_transfer, ctl_apply, ctl_finetune, freeze, leading_fraction, unfreeze_all, Selector, TransferMode,
    TransferPlan, DEFAULT_SUBSET_FRACTION,
};
