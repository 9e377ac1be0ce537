//! Large neighborhood search for binary integer programs with a
//! rank-weighted variable selection rule and a learned neighborhood size.

pub mod bench;
pub mod error;
pub mod generators;
pub mod gnn;
pub mod ilp;
pub mod lns;
pub mod nn;
pub mod pool;
pub mod rl;
pub mod size_policy;
pub mod subsolver;

pub use error::{Error, Result};
