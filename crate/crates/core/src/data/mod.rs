//! Loading, cleaning, encoding and balancing of flow tables.

mod balance;
mod encode;
mod table;

pub use balance::{random_undersample, smote_balance};
pub use encode::{
    encode_and_scale, encode_with, kfold_indices, split_train_test, EncodedDataset, FeatureStat,
    ScalerStat, SplitPair,
};
pub use table::{drop_high_nan_rows, impute_median, load_csv, merge_parts, write_csv, RawTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("file has no header row")]
    EmptyFile,
    #[error("duplicate header `{0}`")]
    DuplicateHeader(String),
    #[error("tables do not share a schema")]
    SchemaMismatch,
    #[error("column `{0}` has no non-missing values")]
    AllMissingColumn(String),
    #[error("unseen category `{value}` for feature `{feature}`")]
    UnseenCategory { feature: String, value: String },
    #[error("too few rows")]
    TooFewRows,
    #[error("minority class has fewer than two rows")]
    SingletonMinority,
    #[error("bad k for k-fold: need 2 <= k <= n")]
    BadK,
    #[error("invalid schema: {0}")]
    BadSchema(String),
    #[error("table still contains missing cells")]
    MissingCells,
    #[error("label value `{0}` is not 0 or 1")]
    BadLabel(String),
    #[error("cell `{value}` in numeric column `{column}` is not a number")]
    BadNumeric { column: String, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
