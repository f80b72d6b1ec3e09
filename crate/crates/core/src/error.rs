use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error(
        "matrix columns are linearly dependent (pivot {pivot} of {rank_needed} below tolerance)"
    )]
    RankDeficient { pivot: usize, rank_needed: usize },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("fixed row {index} is linearly dependent on the other fixed rows")]
    DependentFixedRows { index: usize },

    #[error("row {index} has a zero projected norm and cannot be included")]
    ZeroPivot { index: usize },

    #[error("weighted Gram matrix is numerically singular")]
    SingularWeighting,

    #[error("node is infeasible: {available} rows with positive norm, {needed} needed")]
    InfeasibleNode { available: usize, needed: usize },

    #[error("no full-rank completion exists")]
    Infeasible,

    #[error("capped simplex is empty: {0}")]
    InfeasibleDomain(String),

    #[error("relaxation start point is singular even after ridge regularization")]
    StartSingular,

    #[error("bad graph dimensions: {0}")]
    BadDimensions(String),

    #[error("bad edge selection: {0}")]
    BadSubset(String),

    #[error("structural determinant 2^{structural} disagrees with direct determinant {direct}")]
    DeterminantMismatch { structural: usize, direct: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("matrix has numerical rank zero")]
    RankZero,

    #[error("kept {kept} independent columns but only {rows} rows; need more rows than columns")]
    NotTall { kept: usize, rows: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
