pub mod cts;
pub mod error;
pub mod export;
pub mod linalg;
pub mod market;
pub mod matpower;
pub mod model;
pub mod native;
pub mod pipeline;
pub mod powerflow;
pub mod rtca;
pub mod sced;
pub mod sensitivity;
pub mod topology;

pub use error::{Error, Result};
