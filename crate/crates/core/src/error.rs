use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("{what} {id} refers to unknown bus {bus}")]
    UnresolvedBus { what: &'static str, id: usize, bus: usize },

    #[error("cost curve of generator {0} is not convex")]
    NonConvexCost(usize),

    #[error("no slack bus in the island containing bus {0}")]
    NoSlack(usize),

    #[error("island containing bus {bus} has {count} slack buses")]
    MultipleSlack { bus: usize, count: usize },

    #[error("duplicate {what} id {id}")]
    DuplicateId { what: &'static str, id: usize },

    #[error("branch {0} has zero reactance")]
    ZeroReactance(usize),

    #[error("invalid model: {0}")]
    Invalid(String),

    #[error("power flow did not converge in {iterations} iterations (max mismatch {mismatch:.3e} pu)")]
    NotConverged { iterations: usize, mismatch: f64 },

    #[error("buses {0:?} carry load or generation but are cut off from the slack bus")]
    IsolatedIsland(Vec<usize>),

    #[error("singular network matrix: {0}")]
    Singular(String),

    #[error("degenerate limit: reactive flow {q} MVar exceeds rating {rating} MVA")]
    DegenerateLimit { rating: f64, q: f64 },

    #[error(transparent)]
    Lp(#[from] ems_lp::LpError),

    #[error("dispatch problem is infeasible; rows in violation: {}", .0.join(", "))]
    Infeasible(Vec<String>),

    #[error("dispatch problem is unbounded (variable {0})")]
    Unbounded(String),

    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}
