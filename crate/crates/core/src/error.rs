use std::fmt;

/// Errors shared across the crate.
#[derive(Debug)]
pub enum Error {
    /// Malformed numeric field in a CSV row.
    Parse { line: usize, message: String },
    /// Row with a different number of columns than the first row.
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    /// Mismatched dimensions between two inputs.
    Dimension { expected: usize, found: usize },
    /// Degenerate scale, e.g. zero per-coordinate standard deviation.
    Bandwidth(String),
    /// Moment fit outside the valid parameter region.
    MomentFit(String),
    /// Orthogonalization or recurrence lost positivity.
    Instability(String),
    /// Rank-deficient column during orthogonalization.
    RankDeficient { column: usize },
    /// Kernel outside the admissible class (not symmetric, spectrum out of [0,1], ...).
    Admissibility(String),
    /// Requested cardinality exceeds what the spectrum supports.
    Cardinality { requested: usize, available: usize },
    /// Stratification bins with no data points.
    EmptyBins(Vec<usize>),
    /// Stratified size must be a d-th power.
    NotDthPower { m: usize, d: usize },
    /// Exact distribution found negative mass: the kernel does not define a point process.
    InvalidKernel(String),
    /// Point outside the evaluation domain.
    Domain(String),
    /// Config file problem.
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Arity {
                line,
                expected,
                found,
            } => write!(
                f,
                "arity error at line {line}: expected {expected} columns, found {found}"
            ),
            Error::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::Bandwidth(msg) => write!(f, "bandwidth error: {msg}"),
            Error::MomentFit(msg) => write!(f, "moment fit error: {msg}"),
            Error::Instability(msg) => write!(f, "numerical instability: {msg}"),
            Error::RankDeficient { column } => {
                write!(f, "rank deficiency at column {column}")
            }
            Error::Admissibility(msg) => write!(f, "inadmissible kernel: {msg}"),
            Error::Cardinality {
                requested,
                available,
            } => write!(
                f,
                "cardinality {requested} exceeds the {available} available modes"
            ),
            Error::EmptyBins(bins) => write!(f, "empty stratification bins: {bins:?}"),
            Error::NotDthPower { m, d } => {
                write!(f, "stratified size {m} is not a perfect {d}-th power")
            }
            Error::InvalidKernel(msg) => write!(f, "invalid kernel: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
