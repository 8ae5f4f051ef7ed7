use thiserror::Error;

use crate::lattice::Site;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region is empty")]
    EmptyRegion,

    #[error("site {site} is not a vertex of a {len}-site lattice")]
    UnknownSite { site: Site, len: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("regions too close for disjoint membranes: d_AB = {distance}, need > {required}")]
    MembraneOverlap { distance: f64, required: f64 },

    #[error("operator support {support:?} is not contained in {target:?}")]
    BadSupport { support: Vec<Site>, target: Vec<Site> },

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("Hamiltonian is not Hermitian (max deviation {deviation:e})")]
    NonHermitianH { deviation: f64 },

    #[error("term support diameter {diameter} exceeds d* = {d_star}")]
    OversizedSupport { diameter: f64, d_star: f64 },

    #[error("term {index} has norm bound {bound} > 1; normalize the terms first")]
    UnnormalizedTerms { index: usize, bound: f64 },

    #[error("dimension {dim} exceeds the dense limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("{what} did not converge: residual {residual:e} (tolerance {tolerance:e})")]
    ConvergenceFailure {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("norm contraction violated: ratio {ratio} at t = {time}")]
    ContractionViolated {
        ratio: f64,
        time: f64,
        witness: Box<crate::operator::LocalOperator>,
    },

    #[error("fixed point is not unique: kernel dimension {kernel_dim}")]
    NonUniqueFixedPoint { kernel_dim: usize },

    #[error("iterative stationary-state solve stalled after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("spectral gap {gap:e} is below tolerance")]
    GapBelowTolerance { gap: f64 },

    #[error("eigenvector matrix is numerically defective (condition {condition:e})")]
    DefectivePencil { condition: f64 },

    #[error("convergence bound violated at t = {time}: {lhs:e} > {rhs:e}")]
    BoundViolated { time: f64, lhs: f64, rhs: f64 },

    #[error("insufficient data: {rows} rows in the fit window, need {required}")]
    InsufficientData { rows: usize, required: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("factorization violated at t = {time}: residual {residual:e}")]
    FactorizationViolated { time: f64, residual: f64 },

    #[error("invariant checks failed: {0}")]
    InvariantFailed(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid `{field}`{}: {reason}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Validation {
        field: String,
        line: Option<usize>,
        reason: String,
    },

    #[error("linear algebra backend: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::Io(_) => 2,
            Error::ConvergenceFailure { .. } | Error::NoConvergence { .. } => 4,
            _ => 3,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyRegion => "EmptyRegion",
            Error::UnknownSite { .. } => "UnknownSite",
            Error::InvalidLattice(_) => "InvalidLattice",
            Error::MembraneOverlap { .. } => "MembraneOverlap",
            Error::BadSupport { .. } => "BadSupport",
            Error::BadShape(_) => "BadShape",
            Error::NonHermitianH { .. } => "NonHermitianH",
            Error::OversizedSupport { .. } => "OversizedSupport",
            Error::UnnormalizedTerms { .. } => "UnnormalizedTerms",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::ContractionViolated { .. } => "ContractionViolated",
            Error::NonUniqueFixedPoint { .. } => "NonUniqueFixedPoint",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::GapBelowTolerance { .. } => "GapBelowTolerance",
            Error::DefectivePencil { .. } => "DefectivePencil",
            Error::BoundViolated { .. } => "BoundViolated",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::FactorizationViolated { .. } => "FactorizationViolated",
            Error::InvariantFailed(_) => "InvariantFailed",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::Linalg(_) => "Linalg",
            Error::Io(_) => "Io",
        }
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
