use thiserror::Error;

pub type Result<T, E = SniError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SniError {
    #[error("polygon generation failed after {attempts} attempts")]
    PolygonGeneration { attempts: usize },

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("meshing failed: {0}")]
    Meshing(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("vertex set induces no triangle")]
    EmptySubmesh,

    #[error("specification error: {0}")]
    Specification(String),

    #[error("coercivity violated: {0}")]
    Coercivity(String),

    #[error("conjugate gradient stopped after {iterations} iterations at relative residual {residual:e}")]
    IterativeFailure { iterations: usize, residual: f64 },

    #[error("Picard iteration did not converge after {} iterations (last relative change {:e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    NonlinearFailure { history: Vec<f64> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unsupported transform: {0}")]
    UnsupportedTransform(String),

    #[error("normalizer: {0}")]
    Normalizer(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("surrogate model: {0}")]
    Model(String),

    #[error("unsupported by surrogate: {0}")]
    UnsupportedBySurrogate(String),

    #[error("subdomain {k}: {source}")]
    Subdomain {
        k: usize,
        #[source]
        source: Box<SniError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SniError {
    /// Short machine-readable category, used as the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            SniError::PolygonGeneration { .. } => "polygon-generation",
            SniError::InvalidPolygon(_) => "invalid-polygon",
            SniError::Meshing(_) => "meshing",
            SniError::InvalidMesh(_) => "invalid-mesh",
            SniError::EmptySubmesh => "empty-submesh",
            SniError::Specification(_) => "specification",
            SniError::Coercivity(_) => "coercivity",
            SniError::IterativeFailure { .. } => "iterative-failure",
            SniError::NonlinearFailure { .. } => "nonlinear-failure",
            SniError::UndefinedMetric(_) => "undefined-metric",
            SniError::Partition(_) => "partition",
            SniError::IndexOutOfRange { .. } => "index-out-of-range",
            SniError::LengthMismatch { .. } => "length-mismatch",
            SniError::UnsupportedTransform(_) => "unsupported-transform",
            SniError::Normalizer(_) => "normalizer",
            SniError::Config(_) => "config",
            SniError::Model(_) => "model",
            SniError::UnsupportedBySurrogate(_) => "unsupported-by-surrogate",
            SniError::Subdomain { source, .. } => source.kind(),
            SniError::Io(_) => "io",
            SniError::Json(_) => "json",
        }
    }

    pub(crate) fn in_subdomain(self, k: usize) -> Self {
        SniError::Subdomain {
            k,
            source: Box::new(self),
        }
    }
}
