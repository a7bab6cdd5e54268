use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {location}")]
    NonFinite { location: String },
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("basis became numerically singular and could not be repaired")]
    Singular,
}
