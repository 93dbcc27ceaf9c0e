//! Reverse-mode automatic differentiation over dense row-major `f64`
//! arrays, plus the network and optimizer built on it.

mod adam;
mod array;
mod kernel;
mod nn;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use array::Array;
pub use nn::{Linear, LinearVars, Mlp, MlpVars};
pub use tape::{Gradients, Tape, Var};
