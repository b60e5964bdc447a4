//! Minimal reverse-mode tensor engine.
//!
//! Supplies exactly the operations the detector, grouper, assembler and
//! chart2x heads need: dense tensors, an eager tape graph with VJPs, a
//! finite-difference gradient checker, seeded initializers and Adam.
//!
//! Training runs at 32-bit; gradient checks run the same graph code at
//! 64-bit, where central differences are trustworthy.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod real;
pub mod tensor;

pub use gradcheck::{grad_check, standard_suite, GradCheckError, GradCheckReport};
pub use graph::{Graph, Var};
pub use optim::{Adam, ParamStore};
pub use real::Real;
pub use tensor::Tensor;
