//! Symbolic transition systems and the two invariance-preserving
//! transformations that add auxiliary variables: `delay` (history chains)
//! and `prophecize` (frozen prophecy variables).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::terms::{Node, TermError, TermId, TermStore, VarId, VarKind};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StsError {
    #[error("history depth must be positive")]
    InvalidDepth,
    #[error("target `{0}` may only mention current-state and input variables")]
    ScopeError(String),
    #[error("`{0}` is not a state variable of the system")]
    UnknownVariable(String),
    #[error("target `{0}` mentions a prophecy variable")]
    ProphecyTarget(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuxRecord {
    /// `var` holds the value `target` had `depth` steps ago.
    History { var: VarId, target: TermId, depth: u32 },
    /// Frozen `var` predicting `target` delayed by `delay` steps.
    Prophecy { var: VarId, target: TermId, delay: u32 },
    /// A variable that became a state variable during refinement
    /// (input used by a lemma, equality witness, or fresh index).
    Promoted { var: VarId, frozen: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Property {
    pub formula: TermId,
    /// The property before any prophecy weakening.
    pub original: TermId,
}

impl Property {
    pub fn new(formula: TermId) -> Self {
        Property {
            formula,
            original: formula,
        }
    }
}

/// `⟨X, I, T⟩` with inputs. `init` and `trans` are kept as conjunct lists.
#[derive(Clone, Debug, Default)]
pub struct TransitionSystem {
    pub state_vars: Vec<VarId>,
    pub input_vars: Vec<VarId>,
    pub init: Vec<TermId>,
    pub trans: Vec<TermId>,
    pub frozen: BTreeSet<VarId>,
    pub aux_log: Vec<AuxRecord>,
    history: BTreeMap<TermId, Vec<VarId>>,
    prophecies: BTreeMap<(TermId, u32), VarId>,
}

impl TransitionSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_state(&self, v: VarId) -> bool {
        self.state_vars.contains(&v)
    }

    pub fn is_input(&self, v: VarId) -> bool {
        self.input_vars.contains(&v)
    }

    pub fn add_state_var(&mut self, store: &mut TermStore, v: VarId) {
        if !self.state_vars.contains(&v) {
            store.next_of(v);
            self.state_vars.push(v);
        }
    }

    pub fn add_input_var(&mut self, v: VarId) {
        if !self.input_vars.contains(&v) {
            self.input_vars.push(v);
        }
    }

    /// Adds `v` as a state variable with the conjunct `v' = v`.
    pub fn add_frozen_var(&mut self, store: &mut TermStore, v: VarId) -> Result<(), StsError> {
        self.add_state_var(store, v);
        if self.frozen.insert(v) {
            let nv = store.next_of(v);
            let (a, b) = (store.var_term(nv), store.var_term(v));
            let eq = store.eq(a, b)?;
            self.trans.push(eq);
        }
        Ok(())
    }

    /// Turns an input into an unconstrained state variable.
    pub fn promote_input(&mut self, store: &mut TermStore, v: VarId) {
        self.input_vars.retain(|&u| u != v);
        self.add_state_var(store, v);
        self.aux_log.push(AuxRecord::Promoted { var: v, frozen: false });
    }

    pub fn add_init(&mut self, t: TermId) -> bool {
        if self.init.contains(&t) {
            return false;
        }
        self.init.push(t);
        true
    }

    pub fn add_trans(&mut self, t: TermId) -> bool {
        if self.trans.contains(&t) {
            return false;
        }
        self.trans.push(t);
        true
    }

    pub fn init_term(&self, store: &mut TermStore) -> Result<TermId, TermError> {
        store.and_all(self.init.clone())
    }

    pub fn trans_term(&self, store: &mut TermStore) -> Result<TermId, TermError> {
        store.and_all(self.trans.clone())
    }

    pub fn is_frozen(&self, store: &TermStore, v: VarId) -> Result<bool, StsError> {
        if !self.is_state(v) {
            return Err(StsError::UnknownVariable(store.var(v).name.clone()));
        }
        Ok(self.frozen.contains(&v))
    }

    /// `t` with every state variable replaced by its primed copy.
    pub fn prime(&self, store: &mut TermStore, t: TermId) -> Result<TermId, TermError> {
        let map: HashMap<VarId, TermId> = store
            .free_vars(t)
            .into_iter()
            .filter(|v| self.is_state(*v))
            .map(|v| {
                let n = store.next_of(v);
                (v, store.var_term(n))
            })
            .collect();
        store.substitute_vars(t, &map)
    }

    pub fn history_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.aux_log.iter().filter_map(|r| match r {
            AuxRecord::History { var, .. } => Some(*var),
            _ => None,
        })
    }

    pub fn prophecy_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.aux_log.iter().filter_map(|r| match r {
            AuxRecord::Prophecy { var, .. } => Some(*var),
            _ => None,
        })
    }

    fn check_target(&self, store: &TermStore, t: TermId) -> Result<(), StsError> {
        for v in store.free_vars(t) {
            let info = store.var(v);
            match info.kind {
                VarKind::Next { .. } | VarKind::Timed { .. } => {
                    return Err(StsError::ScopeError(store.display(t).to_string()))
                }
                VarKind::Prophecy { .. } => return Err(StsError::ProphecyTarget(store.display(t).to_string())),
                _ => {}
            }
            if !self.is_state(v) && !self.is_input(v) {
                return Err(StsError::ScopeError(store.display(t).to_string()));
            }
        }
        Ok(())
    }

    fn root_name(store: &TermStore, t: TermId) -> String {
        match store.node(t) {
            Node::Var(v) => store.var(*v).name.replace(['@', '|', '\\'], "_"),
            _ => store.digest(t),
        }
    }

    /// Adds (or reuses) the history chain `h¹_t .. hⁿ_t` and returns `hⁿ_t`.
    pub fn delay(&mut self, store: &mut TermStore, t: TermId, n: u32) -> Result<VarId, StsError> {
        if n == 0 {
            return Err(StsError::InvalidDepth);
        }
        self.check_target(store, t)?;
        let existing = self.history.get(&t).map_or(0, |c| c.len()) as u32;
        let root = Self::root_name(store, t);
        let sort = store.sort_of(t);
        for depth in existing + 1..=n {
            let h = store.fresh_var(&format!("__hist_{root}_{depth}"), sort, VarKind::History { target: t, depth });
            self.add_state_var(store, h);
            let hn = store.next_of(h);
            let prev = if depth == 1 {
                t
            } else {
                store.var_term(self.history[&t][depth as usize - 2])
            };
            let hn_t = store.var_term(hn);
            let link = store.eq(hn_t, prev)?;
            self.trans.push(link);
            self.history.entry(t).or_default().push(h);
            self.aux_log.push(AuxRecord::History { var: h, target: t, depth });
        }
        Ok(self.history[&t][n as usize - 1])
    }

    /// Introduces a frozen prophecy variable for `t` delayed by `n` steps and
    /// weakens the property to `p = hⁿ_t ⟹ P` (`p = t ⟹ P` when `n = 0`).
    /// Repeated calls with the same target and delay change nothing.
    pub fn prophecize(
        &mut self,
        store: &mut TermStore,
        prop: Property,
        t: TermId,
        n: u32,
    ) -> Result<(Property, VarId), StsError> {
        let (t, n) = self.normalize_target(store, t, n);
        self.check_target(store, t)?;
        if let Some(&p) = self.prophecies.get(&(t, n)) {
            return Ok((prop, p));
        }
        let target = if n == 0 {
            t
        } else {
            let h = self.delay(store, t, n)?;
            store.var_term(h)
        };
        let root = Self::root_name(store, t);
        let sort = store.sort_of(t);
        let p = store.fresh_var(&format!("__proph_{root}_{n}"), sort, VarKind::Prophecy { target: t, delay: n });
        self.add_frozen_var(store, p)?;
        let pt = store.var_term(p);
        let guard = store.eq(pt, target)?;
        let formula = store.implies(guard, prop.formula)?;
        self.prophecies.insert((t, n), p);
        self.aux_log.push(AuxRecord::Prophecy { var: p, target: t, delay: n });
        Ok((
            Property {
                formula,
                original: prop.original,
            },
            p,
        ))
    }

    /// A history variable as target means its underlying term, further delayed.
    fn normalize_target(&self, store: &TermStore, t: TermId, n: u32) -> (TermId, u32) {
        if let Node::Var(v) = store.node(t) {
            if let VarKind::History { target, depth } = store.var(*v).kind {
                if self.is_state(*v) {
                    return self.normalize_target(store, target, n + depth);
                }
            }
        }
        (t, n)
    }

    pub fn prophecy_for(&self, t: TermId, n: u32) -> Option<VarId> {
        self.prophecies.get(&(t, n)).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_adds_history_link() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let mut sys = TransitionSystem::new();
        let ir = st.new_var("ir", int, VarKind::State).unwrap();
        sys.add_state_var(&mut st, ir);
        let irt = st.var_term(ir);
        let h = sys.delay(&mut st, irt, 1).unwrap();
        let hn = st.existing_next(h).unwrap();
        let hn_t = st.var_term(hn);
        let link = st.eq(hn_t, irt).unwrap();
        assert!(sys.trans.contains(&link));
        assert!(sys.init.is_empty());
        let n_before = sys.state_vars.len();
        assert_eq!(sys.delay(&mut st, irt, 1).unwrap(), h);
        assert_eq!(sys.state_vars.len(), n_before);
    }

    #[test]
    fn delay_rejects_zero_and_next_targets() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let mut sys = TransitionSystem::new();
        let x = st.new_var("x", int, VarKind::State).unwrap();
        sys.add_state_var(&mut st, x);
        let xt = st.var_term(x);
        assert_eq!(sys.delay(&mut st, xt, 0), Err(StsError::InvalidDepth));
        let xn = st.next_of(x);
        let xnt = st.var_term(xn);
        assert!(matches!(sys.delay(&mut st, xnt, 1), Err(StsError::ScopeError(_))));
    }

    #[test]
    fn prophecize_grows_by_n_plus_one_once() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let mut sys = TransitionSystem::new();
        let x = st.new_var("x", int, VarKind::State).unwrap();
        sys.add_state_var(&mut st, x);
        let xt = st.var_term(x);
        let zero = st.int(0);
        let p = Property::new(st.le(zero, xt).unwrap());
        let before = sys.state_vars.len();
        let (p2, pv) = sys.prophecize(&mut st, p, xt, 2).unwrap();
        assert_eq!(sys.state_vars.len(), before + 3);
        assert!(sys.is_frozen(&st, pv).unwrap());
        let (p3, pv2) = sys.prophecize(&mut st, p2, xt, 2).unwrap();
        assert_eq!((p3, pv2), (p2, pv));
        assert_eq!(sys.state_vars.len(), before + 3);
        assert_eq!(p2.original, p.formula);
    }

    #[test]
    fn prophecize_zero_delay_uses_target_directly() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let mut sys = TransitionSystem::new();
        let x = st.new_var("x", int, VarKind::State).unwrap();
        sys.add_state_var(&mut st, x);
        let xt = st.var_term(x);
        let zero = st.int(0);
        let prop = Property::new(st.le(zero, xt).unwrap());
        let (p2, pv) = sys.prophecize(&mut st, prop, xt, 0).unwrap();
        let pt = st.var_term(pv);
        let g = st.eq(pt, xt).unwrap();
        let expected = st.implies(g, prop.formula).unwrap();
        assert_eq!(p2.formula, expected);
        assert_eq!(sys.history_vars().count(), 0);
    }

    #[test]
    fn is_frozen_unknown_variable() {
        let mut st = TermStore::new();
        let sys = TransitionSystem::new();
        let v = st.new_var("ghost", st.int_sort(), VarKind::State).unwrap();
        assert!(matches!(sys.is_frozen(&st, v), Err(StsError::UnknownVariable(_))));
    }
}
