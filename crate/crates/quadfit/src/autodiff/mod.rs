//! Reverse-mode differentiation, Adam, and finite-difference verification.

mod check;
mod optim;
mod real;
mod tape;

pub use check::{finite_diff_check, fnv1a, rel_err, FdReport, ScalarFn};
pub use optim::{AdamParams, AdamState};
pub use real::{mean, stable_sigmoid, sum, Real};
pub use tape::{Grads, Tape, Var};
