use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The restricted matrix lost column rank; `columns` lists the columns
    /// found to be linearly dependent on the ones before them.
    #[error("rank-deficient restricted matrix, dependent columns {columns:?}")]
    Conditioning { columns: Vec<usize> },

    #[error("BIHT iterate became non-finite with step size tau = {tau:e}")]
    Divergence { tau: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
