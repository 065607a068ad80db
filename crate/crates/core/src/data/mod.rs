//! MNIST ingestion, biased target sets, procedural non-target sets and the
//! condition vocabulary.

mod idx;
mod mnist;
mod sets;
mod vocab;

pub use idx::{
    byte_to_pixel, parse_idx, pixel_to_byte, read_maybe_gz, to_idx_bytes, IdxData, IMAGE_MAGIC,
    LABEL_MAGIC,
};
pub use mnist::{MnistFiles, MnistSplit, PIXELS, SIDE};
pub use sets::{
    build_target_set, build_test_groups, build_training_set, generate_nontarget, DatasetSpec,
    LabeledExample, Scenario, NON_TARGET, TARGET,
};
pub use vocab::ConditionVocab;
