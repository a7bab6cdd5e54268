//! Linear programming for dispatch problems.
//!
//! [`LinearProgram`] holds a minimization problem with bounded variables and
//! bounded rows. [`solve_lp`] runs a bounded revised simplex method and returns
//! the optimal basic solution together with row duals and reduced costs.
//!
//! Dual sign convention: a row dual is the derivative of the optimal objective
//! with respect to the row's active bound. A binding `<=` row in a
//! minimization therefore has a non-positive dual, a binding `>=` row a
//! non-negative one.

mod error;
mod factor;
mod lp_format;
mod problem;
mod simplex;

pub use error::LpError;
pub use lp_format::write_lp_format;
pub use problem::{LinearProgram, RowId, Sense, VarId};
pub use simplex::{solve_lp, solve_lp_with, KktResiduals, LpSolution, SimplexOptions, Status};
