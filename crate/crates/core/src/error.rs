use std::io;

use thiserror::Error;

/// Errors produced by the ranking library.
#[derive(Debug, Error)]
pub enum RankError {
    #[error("dimension mismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("item index {index} out of range for {n_items} items (record {record})")]
    ItemOutOfRange {
        record: usize,
        index: usize,
        n_items: usize,
    },

    #[error("record {record} compares item {item} with itself")]
    SelfComparison { record: usize, item: usize },

    #[error("dataset must contain at least one comparison")]
    EmptyDataset,

    #[error("record {record} has non-finite value")]
    NonFiniteValue { record: usize },

    #[error("dataset is not dichotomous: record {record} has value {value}, expected +1 or -1")]
    NotDichotomous { record: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration needs {needed} subsets but the budget is {budget}; refusing to approximate")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RankError>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(RankError::DimensionMismatch { expected, actual })
    }
}
