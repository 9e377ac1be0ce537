//! Binary integer programs: data model, evaluation, graph encoding and files.

mod graph;
pub mod io;
mod model;
pub mod mps;

pub use graph::{
    build_bipartite, cons_col, var_col, BipartiteGraph, CONS_FEATURES, EDGE_FEATURES,
    VAR_FEATURES,
};
pub use io::{read_instance, write_instance, FileFormat};
pub use model::{Assignment, Constraint, Direction, IlpInstance, Sense, Violation};
