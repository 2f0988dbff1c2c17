use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid innovation law: {0}")]
    Innovation(String),
    #[error("invalid environment kernel: {0}")]
    Kernel(String),
    #[error("invalid walk kernel: {0}")]
    Walk(String),
    #[error("region error: {0}")]
    Region(String),
    #[error("non-finite value at (t={t}, x={x}) in layer {layer}")]
    NonFinite { t: i64, x: i64, layer: usize },
    #[error("enumeration ceiling exceeded: {0}")]
    Ceiling(String),
    #[error("cumulant order {0} not supported (max 6)")]
    Order(usize),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numerical fault: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
