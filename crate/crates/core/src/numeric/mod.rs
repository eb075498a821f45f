//! Dense matrices, reverse-mode differentiation, seeded randomness and a
//! finite-difference gradient oracle. Everything above this layer computes
//! through it.

mod gradcheck;
mod graph;
mod matrix;
mod rng;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use graph::{sigmoid, Activation, Graph, Mode, Node, SoftmaxMask, Var};
pub use matrix::{Matrix, SMALL_ROWS};
pub use rng::{Purpose, Rng};
