//! Dataset ingestion and feature sources.

mod attr;
mod bank;
mod dataset;
mod lbp;
mod pgm;
mod split;
mod synth;

pub use attr::{parse_attr_file, render_attr_file, AttributeTable};
pub use bank::{load_bank, read_bank, save_bank, write_bank, FeatureBank, FBNK_MAGIC, FBNK_VERSION};
pub use dataset::{Column, ColumnMap, Dataset, Split};
pub use lbp::{lbp_code, lbp_dim, lbp_extract, uniform_bin, GrayImage, LBP_BINS};
pub use pgm::{encode_pgm, luma, parse_pnm};
pub use split::{parse_partition_file, render_partition_file, split_dataset, SplitSpec, SplitTag, SplitViews};
pub use synth::{synth_generate, SyntheticSpec, ViewSpec};
