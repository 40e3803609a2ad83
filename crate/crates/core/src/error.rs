use thiserror::Error;

/// Errors raised by model construction, the solvers and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("impedance dimension mismatch: expected {expected}x{expected}, found {rows}x{cols}")]
    ImpedanceDimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },

    #[error("pattern dimension mismatch: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    PatternDimension {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("non-reciprocal impedance matrix (relative asymmetry {asymmetry:.3e})")]
    NonReciprocal { asymmetry: f64 },

    #[error("non-passive impedance matrix (smallest eigenvalue of Re(Z) is {min_eigenvalue:.3e})")]
    NonPassive { min_eigenvalue: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("ill-conditioned port network (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("open-circuit pattern matrix has no positive singular value")]
    ZeroPattern,

    #[error("degenerate antenna coder: pattern coder vanishes before normalization")]
    DegenerateCoder,

    #[error("antenna coder has length {found}, expected {expected}")]
    CoderLength { expected: usize, found: usize },

    #[error("transmit patterns are not orthonormal (Gram deviation {deviation:.3e})")]
    NonOrthonormal { deviation: f64 },

    #[error("rank-deficient effective channel (Gram condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("bisection bracket failure: multiplier exceeded {limit:.0e}")]
    BisectionBracket { limit: f64 },

    #[error("every codebook candidate is rank-deficient for user {user}")]
    NoFeasibleCandidate { user: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
