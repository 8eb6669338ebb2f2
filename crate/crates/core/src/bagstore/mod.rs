//! Bag data model, dataset container, deterministic splits, the
//! coordinate-shuffle perturbation and the `RTMB` on-disk format.

mod bag;
mod format;
mod shuffle;
mod split;

pub use bag::{Bag, BagDataset, Label, TaskKind, SURVIVAL_INTERVALS};
pub(crate) use format::{Reader, Writer};
pub use format::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use shuffle::{shuffle_coords, shuffled_count};
pub use split::{split, SplitSpec, Splits};
