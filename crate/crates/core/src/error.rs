use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("curves are defined on different grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dataset is not centered (max pointwise mean {max_mean:e})")]
    CenteringRequired { max_mean: f64 },
    #[error("kernel is not symmetric (max asymmetry {asymmetry:e})")]
    InvalidKernel { asymmetry: f64 },
    #[error("all eigenvalues are zero")]
    DegenerateSpectrum,
    #[error("singular design (condition number {condition:e})")]
    SingularDesign { condition: f64 },
    #[error("shape component has zero projection on every target curve")]
    DegenerateShape,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coefficient vector has zero norm")]
    ZeroCoefficient,
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("empty sample")]
    EmptySample,
    #[error("{dropped} of {reps} bootstrap replications failed")]
    BandUnreliable { dropped: usize, reps: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("io error: {0}")]
    Io(String),
    #[error("domain {domain}: {source}")]
    InDomain {
        domain: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_domain(self, domain: usize) -> Self {
        match self {
            e @ Error::InDomain { .. } => e,
            e => Error::InDomain {
                domain,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with any domain annotation removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InDomain { source, .. } => source.root(),
            e => e,
        }
    }

    /// Variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self.root() {
            Error::GridMismatch => "GridMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::NonFinite(_) => "NonFinite",
            Error::CenteringRequired { .. } => "CenteringRequired",
            Error::InvalidKernel { .. } => "InvalidKernel",
            Error::DegenerateSpectrum => "DegenerateSpectrum",
            Error::SingularDesign { .. } => "SingularDesign",
            Error::DegenerateShape => "DegenerateShape",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ZeroCoefficient => "ZeroCoefficient",
            Error::InvalidPenalty(_) => "InvalidPenalty",
            Error::EmptySample => "EmptySample",
            Error::BandUnreliable { .. } => "BandUnreliable",
            Error::InvalidSplit(_) => "InvalidSplit",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::InDomain { .. } => unreachable!(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
