//! Builtin engine: Houdini strengthening, then BMC interleaved with
//! k-induction.

use std::collections::BTreeSet;

use log::debug;

use super::{candidates, external, Certificate, Engine, Proof, ProveOptions, ProveResult, ProverError};
use crate::bmc::{self, time_term, UnrollOptions};
use crate::smt::{CheckResult, Session, SolverError, SolverFactory, Want};
use crate::sts::{Property, TransitionSystem};
use crate::terms::{TermId, TermStore};

pub fn prove(
    factory: &SolverFactory,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: Property,
    opts: &ProveOptions,
) -> Result<ProveResult, ProverError> {
    if let Engine::External(path) = &opts.engine {
        return external::prove_external(path, store, sys, prop, opts);
    }
    let mut session = factory.open("ALL")?;
    let assumption = opts.assume_prestate.then_some(prop.original);
    let mut strengthening = store.tru();
    if opts.engine == Engine::KInduction {
        match houdini(&mut session, store, sys, &prop, assumption) {
            Ok(inv) => {
                let conj = store.and_all(inv.clone())?;
                if inv.contains(&prop.formula) {
                    return Ok(ProveResult::Proven(Some(Proof {
                        cert: Certificate::Inductive { inv: conj },
                        assumption,
                    })));
                }
                strengthening = conj;
            }
            Err(ProverError::Solver(SolverError::Timeout)) => {}
            Err(e) => return Err(e),
        }
    }
    let uopts = UnrollOptions {
        assume_prestate: opts.assume_prestate,
    };
    for k in 1..=opts.max_k {
        if factory.past_deadline() {
            return Ok(ProveResult::Unknown("time budget exhausted".into()));
        }
        let u = bmc::unroll(store, sys, &prop, k, &[], uopts)?;
        match bmc::bmc_check(&mut session, store, &u, Want::Model)? {
            CheckResult::Sat(model) => return Ok(ProveResult::Falsified { k, model }),
            CheckResult::Unknown(r) => return Ok(ProveResult::Unknown(r)),
            CheckResult::Unsat(_) => {}
        }
        if opts.engine != Engine::KInduction {
            continue;
        }
        match step_query(&mut session, store, sys, &prop, assumption, strengthening, k) {
            Ok(true) => {
                return Ok(ProveResult::Proven(Some(Proof {
                    cert: Certificate::KInductive {
                        depth: k,
                        strengthening,
                    },
                    assumption,
                })))
            }
            Ok(false) | Err(ProverError::Solver(SolverError::Timeout)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ProveResult::Unknown(format!("no proof or counterexample up to bound {}", opts.max_k)))
}

/// Unsat of: `P ∧ C ∧ A` at states `0..depth-1`, transitions up to `depth`,
/// `¬P` at `depth`.
pub(crate) fn step_query(
    session: &mut Session,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: &Property,
    assumption: Option<TermId>,
    strengthening: TermId,
    depth: u32,
) -> Result<bool, ProverError> {
    let mut asserts = Vec::new();
    for n in 0..depth {
        let mut pre = vec![prop.formula, strengthening];
        pre.extend(assumption);
        let pre = store.and_all(pre)?;
        asserts.push((None, time_term(store, pre, n)?));
        for &c in &sys.trans {
            asserts.push((None, time_term(store, c, n)?));
        }
    }
    let bad = store.not(prop.formula)?;
    asserts.push((None, time_term(store, bad, depth)?));
    Ok(session.check(store, &asserts, Want::Nothing)?.is_unsat())
}

/// The largest subset of the candidates that holds initially and is
/// inductive relative to `assumption`.
pub(crate) fn houdini(
    session: &mut Session,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: &Property,
    assumption: Option<TermId>,
) -> Result<Vec<TermId>, ProverError> {
    let mut cands = candidates::generate(store, sys, prop)?;
    debug!("houdini: {} candidates", cands.len());
    let init = sys.init_term(store)?;
    loop {
        if cands.is_empty() {
            return Ok(cands);
        }
        let all = store.and_all(cands.clone())?;
        let bad = store.not(all)?;
        match session.check(store, &[(None, init), (None, bad)], Want::Nothing)? {
            CheckResult::Unsat(_) => break,
            CheckResult::Unknown(r) => return Err(ProverError::Io(format!("houdini initiation: {r}"))),
            CheckResult::Sat(_) => {
                let vals = session.get_values(store, &cands)?;
                let before = cands.len();
                cands = keep_true(&cands, &vals);
                if cands.len() == before {
                    return Ok(Vec::new());
                }
            }
        }
    }
    let trans = sys.trans_term(store)?;
    loop {
        if cands.is_empty() {
            return Ok(cands);
        }
        let primed: Vec<TermId> = cands
            .iter()
            .map(|&c| sys.prime(store, c))
            .collect::<Result<_, _>>()?;
        let mut pre = cands.clone();
        pre.extend(assumption);
        let pre = store.and_all(pre)?;
        let post = store.and_all(primed.clone())?;
        let bad = store.not(post)?;
        match session.check(store, &[(None, pre), (None, trans), (None, bad)], Want::Nothing)? {
            CheckResult::Unsat(_) => return Ok(cands),
            CheckResult::Unknown(r) => return Err(ProverError::Io(format!("houdini consecution: {r}"))),
            CheckResult::Sat(_) => {
                let vals = session.get_values(store, &primed)?;
                let keep: BTreeSet<usize> = vals
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.as_bool() == Some(true))
                    .map(|(i, _)| i)
                    .collect();
                if keep.len() == cands.len() {
                    return Ok(Vec::new());
                }
                cands = cands
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| keep.contains(i))
                    .map(|(_, &c)| c)
                    .collect();
            }
        }
    }
}

fn keep_true(cands: &[TermId], vals: &[crate::model::Value]) -> Vec<TermId> {
    cands
        .iter()
        .zip(vals)
        .filter(|(_, v)| v.as_bool() == Some(true))
        .map(|(&c, _)| c)
        .collect()
}
