use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {0:?} lies outside the closed unit cube")]
    OutOfDomain(Vec<f64>),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite {what} at t = {t}, node {node}")]
    NonFinite {
        what: &'static str,
        t: f64,
        node: usize,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{what} = {value} outside the admissible range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("refinement levels are not nested: {0}")]
    NonNested(String),

    #[error("profile support reaches the boundary before t = {0}")]
    SupportReachesBoundary(f64),

    #[error("malformed RPME1 stream: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
