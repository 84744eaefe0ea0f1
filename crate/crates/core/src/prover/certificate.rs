//! Independent checks of proofs and counterexamples, run in a fresh solver
//! with the full array theory available.

use super::{Certificate, Proof, ProverError};
use crate::bmc::{self, time_term, UnrollOptions};
use crate::model::Value;
use crate::refiner::Trace;
use crate::smt::{Session, SolverFactory, Want};
use crate::sts::{Property, TransitionSystem};
use crate::terms::{TermId, TermStore};

fn unsat(session: &mut Session, store: &TermStore, asserts: &[TermId]) -> Result<bool, ProverError> {
    let named: Vec<(Option<String>, TermId)> = asserts.iter().map(|&t| (None, t)).collect();
    Ok(session.check(store, &named, Want::Nothing)?.is_unsat())
}

/// Initiation, consecution (assuming `assumption` in the pre-state) and
/// safety of `inv`.
pub fn check_invariant(
    factory: &SolverFactory,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: TermId,
    inv: TermId,
    assumption: Option<TermId>,
) -> Result<bool, ProverError> {
    let mut s = factory.open("ALL")?;
    let init = sys.init_term(store)?;
    let not_inv = store.not(inv)?;
    if !unsat(&mut s, store, &[init, not_inv])? {
        return Ok(false);
    }
    let trans = sys.trans_term(store)?;
    let inv_next = sys.prime(store, inv)?;
    let not_inv_next = store.not(inv_next)?;
    let mut pre = vec![inv, trans, not_inv_next];
    pre.extend(assumption);
    if !unsat(&mut s, store, &pre)? {
        return Ok(false);
    }
    let not_p = store.not(prop)?;
    unsat(&mut s, store, &[inv, not_p])
}

pub fn check_certificate(
    factory: &SolverFactory,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: TermId,
    proof: &Proof,
) -> Result<bool, ProverError> {
    match proof.cert {
        Certificate::Inductive { inv } => check_invariant(factory, store, sys, prop, inv, proof.assumption),
        Certificate::KInductive { depth, strengthening } => {
            let tru = store.tru();
            if !check_invariant(factory, store, sys, tru, strengthening, proof.assumption)? {
                return Ok(false);
            }
            let p = Property {
                formula: prop,
                original: proof.assumption.unwrap_or(tru),
            };
            let uopts = UnrollOptions {
                assume_prestate: proof.assumption.is_some(),
            };
            let mut s = factory.open("ALL")?;
            for k in 1..=depth {
                let u = bmc::unroll(store, sys, &p, k, &[], uopts)?;
                let terms: Vec<TermId> = u.assertions.iter().map(|a| a.term).collect();
                if !unsat(&mut s, store, &terms)? {
                    return Ok(false);
                }
            }
            let mut asserts = Vec::new();
            for n in 0..depth {
                let mut pre = vec![prop, strengthening];
                pre.extend(proof.assumption);
                let pre = store.and_all(pre)?;
                asserts.push(time_term(store, pre, n)?);
                for &c in &sys.trans {
                    asserts.push(time_term(store, c, n)?);
                }
            }
            let bad = store.not(prop)?;
            asserts.push(time_term(store, bad, depth)?);
            unsat(&mut s, store, &asserts)
        }
    }
}

/// True iff the trace's scalar values extend to a path of `sys` that starts
/// in an initial state and ends in a state violating `prop`.
pub fn replay_trace(
    factory: &SolverFactory,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: TermId,
    trace: &Trace,
) -> Result<bool, ProverError> {
    if trace.is_empty() {
        return Err(ProverError::InvalidTrace);
    }
    let k = trace.len() as u32;
    let p = Property::new(prop);
    let u = bmc::unroll(store, sys, &p, k, &[], UnrollOptions::default())?;
    let mut asserts: Vec<TermId> = u.assertions.iter().map(|a| a.term).collect();
    for (n, state) in trace.iter().enumerate() {
        for (&v, val) in state {
            if !sys.is_state(v) && !sys.is_input(v) {
                continue;
            }
            let lit = match val {
                Value::Bool(b) => store.bool_lit(*b),
                Value::Int(i) => store.int(i.clone()),
                Value::Opaque(_) => continue,
            };
            let tv = store.timed_term(v, n as u32);
            asserts.push(store.eq(tv, lit)?);
        }
    }
    let mut s = factory.open("ALL")?;
    let named: Vec<(Option<String>, TermId)> = asserts.iter().map(|&t| (None, t)).collect();
    Ok(s.check(store, &named, Want::Nothing)?.is_sat())
}
