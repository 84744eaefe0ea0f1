//! Bounded unrolling of a transition system. A path of length `k` has states
//! `@0 .. @k-1`; the goal is the negated property at the last state.

use std::collections::HashMap;

use crate::smt::{CheckResult, Session, SolverError, Want};
use crate::sts::{Property, TransitionSystem};
use crate::terms::{TermError, TermId, TermStore, VarId, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    /// Conjunct `idx` of `init`.
    Init(usize),
    /// Conjunct `conj` of `trans` between `step` and `step + 1`.
    Trans { conj: usize, step: u32 },
    Goal,
    /// Original property assumed at a pre-state.
    Assume(u32),
    Side(usize),
}

#[derive(Clone, Debug)]
pub struct Assertion {
    pub name: String,
    pub term: TermId,
    pub origin: Origin,
    /// Untimed formula and the step it was timed at (`None` for side
    /// constraints, which come timed already).
    pub source: Option<(TermId, u32)>,
}

#[derive(Clone, Debug)]
pub struct Unrolling {
    pub k: u32,
    pub assertions: Vec<Assertion>,
}

impl Unrolling {
    pub fn named(&self) -> Vec<(Option<String>, TermId)> {
        self.assertions
            .iter()
            .map(|a| (Some(a.name.clone()), a.term))
            .collect()
    }

    pub fn origin_of(&self, name: &str) -> Option<Origin> {
        self.assertions.iter().find(|a| a.name == name).map(|a| a.origin)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UnrollOptions {
    /// Assert the original property at every state before the last.
    pub assume_prestate: bool,
}

/// `t` at step `n`: next-state variables go to `n + 1`, every other untimed
/// variable to `n`.
pub fn time_term(store: &mut TermStore, t: TermId, n: u32) -> Result<TermId, TermError> {
    let mut map = HashMap::new();
    for v in store.free_vars(t) {
        let to = match store.var(v).kind {
            VarKind::Timed { .. } => continue,
            VarKind::Next { of } => store.timed_term(of, n + 1),
            _ => store.timed_term(v, n),
        };
        map.insert(v, to);
    }
    store.substitute_vars(t, &map)
}

/// Inverse of [`time_term`] for a formula over steps `n` and `n + 1`.
pub fn untime_term(store: &mut TermStore, t: TermId, n: u32) -> Result<TermId, TermError> {
    let mut map: HashMap<VarId, TermId> = HashMap::new();
    for v in store.free_vars(t) {
        if let Some((base, step)) = store.timed_parts(v) {
            let to = if step == n {
                store.var_term(base)
            } else if step == n + 1 {
                let nx = store.next_of(base);
                store.var_term(nx)
            } else {
                continue;
            };
            map.insert(v, to);
        }
    }
    store.substitute_vars(t, &map)
}

pub fn unroll(
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: &Property,
    k: u32,
    side: &[TermId],
    opts: UnrollOptions,
) -> Result<Unrolling, TermError> {
    assert!(k >= 1, "path length must be positive");
    let mut assertions = Vec::new();
    for (i, &c) in sys.init.iter().enumerate() {
        assertions.push(Assertion {
            name: format!("init.{i}"),
            term: time_term(store, c, 0)?,
            origin: Origin::Init(i),
            source: Some((c, 0)),
        });
    }
    for step in 0..k - 1 {
        for (j, &c) in sys.trans.iter().enumerate() {
            assertions.push(Assertion {
                name: format!("trans.{step}.{j}"),
                term: time_term(store, c, step)?,
                origin: Origin::Trans { conj: j, step },
                source: Some((c, step)),
            });
        }
        if opts.assume_prestate {
            assertions.push(Assertion {
                name: format!("assume.{step}"),
                term: time_term(store, prop.original, step)?,
                origin: Origin::Assume(step),
                source: Some((prop.original, step)),
            });
        }
    }
    let bad = store.not(prop.formula)?;
    assertions.push(Assertion {
        name: "goal".into(),
        term: time_term(store, bad, k - 1)?,
        origin: Origin::Goal,
        source: Some((bad, k - 1)),
    });
    for (i, &s) in side.iter().enumerate() {
        assertions.push(Assertion {
            name: format!("side.{i}"),
            term: s,
            origin: Origin::Side(i),
            source: None,
        });
    }
    Ok(Unrolling { k, assertions })
}

/// Decides the unrolling. Sat models cover every timed variable and every
/// uninterpreted application of the query.
pub fn bmc_check(
    session: &mut Session,
    store: &TermStore,
    u: &Unrolling,
    want: Want,
) -> Result<CheckResult, SolverError> {
    session.check(store, &u.named(), want)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_vars_shift_one_step() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let x = st.new_var("x", int, VarKind::State).unwrap();
        let xn = st.next_of(x);
        let (xt, xnt) = (st.var_term(x), st.var_term(xn));
        let f = st.lt(xt, xnt).unwrap();
        let timed = time_term(&mut st, f, 2).unwrap();
        assert_eq!(st.times_of(timed).into_iter().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(untime_term(&mut st, timed, 2).unwrap(), f);
    }

    #[test]
    fn path_of_one_state_has_no_transition() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let mut sys = TransitionSystem::new();
        let x = st.new_var("x", int, VarKind::State).unwrap();
        sys.add_state_var(&mut st, x);
        let xt = st.var_term(x);
        let zero = st.int(0);
        sys.init.push(st.eq(xt, zero).unwrap());
        let xn = st.next_of(x);
        let xnt = st.var_term(xn);
        sys.trans.push(st.eq(xnt, xt).unwrap());
        let prop = Property::new(st.le(zero, xt).unwrap());
        let u = unroll(&mut st, &sys, &prop, 1, &[], UnrollOptions::default()).unwrap();
        assert!(u.assertions.iter().all(|a| !matches!(a.origin, Origin::Trans { .. })));
        let u3 = unroll(&mut st, &sys, &prop, 3, &[], UnrollOptions { assume_prestate: true }).unwrap();
        let steps: Vec<u32> = u3
            .assertions
            .iter()
            .filter_map(|a| match a.origin {
                Origin::Trans { step, .. } => Some(step),
                _ => None,
            })
            .collect();
        assert_eq!(steps, vec![0, 1]);
        assert_eq!(u3.assertions.iter().filter(|a| matches!(a.origin, Origin::Assume(_))).count(), 2);
    }
}
