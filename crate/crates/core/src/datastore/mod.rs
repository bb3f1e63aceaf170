//! Precomputed embedding storage (EMB1, CSV), datasets, splits and batching.

mod atomic;
mod csv;
mod dataset;
mod emb1;
mod split;

pub use self::csv::{parse_csv, read_csv, CsvTable};
pub use atomic::write_atomic;
pub use dataset::{check_dense_classes, EmbeddingDataset, TeacherView};
pub use emb1::{decode, encode, quantize, read_embeddings, write_embeddings, Labels, HEADER_LEN};
pub use split::{batch_indices, holdout_split, make_splits, SplitSpec, DEFAULT_RATIOS};
