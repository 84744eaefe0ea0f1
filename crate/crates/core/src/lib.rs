//! Model checking of transition systems over arrays by counterexample-guided
//! prophecy: arrays are abstracted to uninterpreted functions and refined with
//! lazily instantiated array axioms, introducing history and prophecy
//! variables when an axiom instance spans non-adjacent time steps.

pub mod abstraction;
pub mod axioms;
pub mod bmc;
pub mod driver;
pub mod model;
pub mod prover;
pub mod refiner;
pub mod smt;
pub mod sts;
pub mod terms;
pub mod vmt;

pub use model::{CexModel, Value};
pub use terms::{Op, Sort, SortId, TermId, TermStore, VarId, VarKind};
