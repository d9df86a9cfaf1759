use thiserror::Error;

use crate::geom::BBox;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box {0:?}: width and height must be positive and coordinates finite")]
    InvalidBox(BBox),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("region {region:?} lies outside the {width}x{height} frame")]
    RegionOutsideFrame { region: BBox, width: u32, height: u32 },

    #[error("processing scale must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    #[error("activation trace does not match the network: {0}")]
    StaleTrace(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("no training data")]
    EmptyData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("action grid is empty")]
    EmptyGrid,

    #[error("baseline {0} is zero; percentages are undefined")]
    ZeroBaseline(&'static str),

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("record format: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
