//! Textual SMT-LIB 2 layer: s-expressions and the solver session.

pub mod sexp;
pub mod session;

pub use session::{CheckResult, Session, SolverConfig, SolverError, SolverFactory, Want};
