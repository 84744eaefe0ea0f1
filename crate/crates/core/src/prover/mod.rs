//! The unbounded prove step: a builtin BMC plus k-induction engine with
//! Houdini-style strengthening, an adapter for external engines, and
//! independent checks of certificates and counterexample traces.

mod candidates;
pub mod certificate;
pub mod external;
pub mod kind;

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::model::CexModel;
use crate::smt::SolverError;
use crate::sts::StsError;
use crate::terms::{TermError, TermId};

pub use certificate::{check_certificate, check_invariant, replay_trace};
pub use kind::prove;

#[derive(Error, Debug)]
pub enum ProverError {
    #[error("external engine failed: {0}")]
    EngineCrashed(String),
    #[error("trace is empty")]
    InvalidTrace,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Sts(#[from] StsError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Engine {
    /// BMC interleaved with k-induction.
    KInduction,
    /// Bug finding only.
    BmcOnly,
    External(PathBuf),
}

#[derive(Clone, Debug)]
pub struct ProveOptions {
    pub engine: Engine,
    pub max_k: u32,
    /// Assume the original property in every pre-state.
    pub assume_prestate: bool,
    /// Wall-clock budget for an external engine run.
    pub engine_timeout: Option<Duration>,
}

impl Default for ProveOptions {
    fn default() -> Self {
        ProveOptions {
            engine: Engine::KInduction,
            max_k: 25,
            assume_prestate: true,
            engine_timeout: None,
        }
    }
}

/// Evidence that the property holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Certificate {
    /// `inv` is inductive and implies the property.
    Inductive { inv: TermId },
    /// `strengthening` is inductive and, assumed at every state, makes the
    /// property `depth`-inductive.
    KInductive { depth: u32, strengthening: TermId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub cert: Certificate,
    /// Formula assumed in every pre-state of a transition (the original
    /// property), if any.
    pub assumption: Option<TermId>,
}

#[derive(Clone, Debug)]
pub enum ProveResult {
    Proven(Option<Proof>),
    /// Counterexample of path length `k`.
    Falsified { k: u32, model: CexModel },
    Unknown(String),
}
