use thiserror::Error;

/// Errors raised by the geometry, expression and envelope engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected C^{expected}, found C^{found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0} (only n = 1 and n = 2 are supported)")]
    UnsupportedDimension(usize),

    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },

    #[error("unknown identifier `{name}` at column {column}")]
    UnknownIdentifier { name: String, column: usize },

    #[error("`{name}` at column {column} expects {expected} argument(s), found {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        column: usize,
    },

    #[error("indeterminate extended-real arithmetic: {0}")]
    Indeterminate(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("argument outside the domain of `{0}`")]
    OutOfDomain(String),

    #[error("objective evaluated to +inf")]
    PositiveInfinity,

    #[error("point is not in the closure of the sampled set")]
    NotInClosure,

    #[error("point lies outside {0}")]
    OutsideDomain(String),

    #[error("|z| = {0} exceeds the closed unit disc")]
    OutsideUnitDisc(f64),

    #[error("disc is infeasible: {0}")]
    InfeasibleDisc(String),

    #[error("grid has no interior node")]
    EmptyGrid,

    #[error("composite nesting depth {0} is not supported for boundary sampling")]
    UnsupportedNesting(usize),

    #[error("nearest grid node is {distance} away from the query point (grid step {step}); refine the grid")]
    RefineGrid { distance: f64, step: f64 },

    #[error("query rejected: {0}")]
    Rejected(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
