use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("shape mismatch at layer {layer}: {source}")]
    LayerShape {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("division by zero at flat index {index}")]
    ZeroDivisor { index: usize },

    #[error("empty tensor")]
    Empty,

    #[error("non-positive probability {value} at index {index} under negative log-likelihood")]
    NonPositiveProbability { index: usize, value: f64 },

    #[error("labels are required for {0}")]
    MissingLabels(&'static str),

    #[error("unit vector index {index} out of range 1..={dim}")]
    UnitIndex { index: usize, dim: usize },

    #[error("norm penalty gradient is undefined at a zero input-gradient")]
    ZeroNormGradient,

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown activation {0:?}")]
    UnknownActivation(String),

    #[error("invalid penalty spec: {0}")]
    InvalidPenalty(String),

    #[error("dimension guard exceeded: {rows}x{cols} (limit {limit})")]
    DimensionGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("json: {0}")]
    Json(String),
}

impl Error {
    pub(crate) fn shape(context: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            context,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn at_layer(self, layer: usize) -> Self {
        match self {
            e @ Error::LayerShape { .. } => e,
            e => Error::LayerShape {
                layer,
                source: Box::new(e),
            },
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
