//! Dense f64 matrices, a reverse-mode tape, MLPs and Adam.

mod adam;
mod matrix;
mod mlp;
mod params;
mod tape;

pub use adam::Adam;
pub use matrix::Matrix;
pub use mlp::{Activation, Linear, Mlp};
pub(crate) use params::ParamFile;
pub use params::{ParamId, ParamStore, PARAMS_FORMAT};
pub use tape::{GradBuffer, Grads, Tape, Var};
