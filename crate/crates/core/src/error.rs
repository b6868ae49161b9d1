use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} is outside the domain of `{generator}`")]
    Domain { generator: String, point: Vec<f64> },

    #[error("dual point {point:?} is outside the gradient range of `{generator}`")]
    DualDomain { generator: String, point: Vec<f64> },

    #[error("numeric solve did not converge: {0}")]
    Convergence(String),

    #[error("expected a {expected}-dimensional point, got {got} coordinates")]
    Dimension { expected: usize, got: usize },

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("invalid generator definition: {0}")]
    InvalidGenerator(String),

    #[error("generator `{generator}` is not admissible here: {reason}")]
    GeneratorNotAdmissible { generator: String, reason: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("edge `{edge}` references missing node `{node}`")]
    DanglingEndpoint { edge: String, node: String },

    #[error("derived coordinates form a cycle through node `{0}`")]
    CentroidCycle(String),

    #[error("derived node `{0}` has zero defining weight sum")]
    ZeroCentroidWeight(String),

    #[error("edge `{0}` appears in both networks")]
    EdgeOverlap(String),

    #[error("node `{0}` differs between the composed networks")]
    NodeConflict(String),

    #[error("networks use different generators (`{0}` and `{1}`)")]
    GeneratorMismatch(String, String),

    #[error("mass totals differ: sum(p) = {p}, sum(q) = {q}")]
    MassMismatch { p: f64, q: f64 },

    #[error("masses must be strictly positive")]
    NonPositive,

    #[error("stale match: {0}")]
    StaleMatch(String),

    #[error("network function not preserved{}: {detail}", step_suffix(*.step))]
    PhiViolation { step: Option<usize>, detail: String },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(i) => format!(" at step {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable machine-readable code for diagnostics and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain_error",
            Error::DualDomain { .. } => "dual_domain_error",
            Error::Convergence(_) => "convergence_error",
            Error::Dimension { .. } => "dimension_mismatch",
            Error::UnknownGenerator(_) => "unknown_generator",
            Error::InvalidGenerator(_) => "invalid_generator",
            Error::GeneratorNotAdmissible { .. } => "generator_not_admissible",
            Error::DuplicateId(_) => "duplicate_id",
            Error::DanglingEndpoint { .. } => "dangling_endpoint",
            Error::CentroidCycle(_) => "centroid_cycle",
            Error::ZeroCentroidWeight(_) => "zero_centroid_weight",
            Error::EdgeOverlap(_) => "edge_overlap",
            Error::NodeConflict(_) => "node_conflict",
            Error::GeneratorMismatch(..) => "generator_mismatch",
            Error::MassMismatch { .. } => "mass_mismatch",
            Error::NonPositive => "non_positive",
            Error::StaleMatch(_) => "stale_match",
            Error::PhiViolation { .. } => "phi_violation",
            Error::Constraint(_) => "constraint_error",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io(_) => "io_error",
            Error::Json(_) => "malformed_json",
        }
    }

    pub(crate) fn phi(detail: impl Into<String>) -> Self {
        Error::PhiViolation {
            step: None,
            detail: detail.into(),
        }
    }

    pub(crate) fn stale(detail: impl Into<String>) -> Self {
        Error::StaleMatch(detail.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
