//! Replacing arrays by uninterpreted sorts and functions, and the inverse
//! mapping used to check certificates and traces against the array theory.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::sts::{Property, StsError, TransitionSystem};
use crate::terms::{FunId, Node, Op, Sort, SortId, TermError, TermId, TermStore, VarId, VarKind};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("array sort {0} has a finite index sort; only Int or uninterpreted indices are supported")]
    FiniteIndexSort(String),
    #[error("nested array sort {0} is not supported")]
    NestedArray(String),
    #[error("constant array element `{0}` is not a ground term")]
    NonGroundConstant(String),
    #[error("`{0}` has no concrete counterpart")]
    UnmappedSymbol(String),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Sts(#[from] StsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// Array equality is an uninterpreted predicate checked by congruence.
    #[default]
    Weak,
    Strong,
}

/// Vocabulary for one abstracted array sort.
#[derive(Clone, Debug)]
pub struct ArrayOps {
    pub concrete: SortId,
    pub abs_sort: SortId,
    pub index: SortId,
    pub element: SortId,
    pub read: FunId,
    pub write: FunId,
    pub eq: Option<FunId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FunRole {
    Read,
    Write,
    Eq,
}

#[derive(Clone, Debug, Default)]
pub struct AbstractionMap {
    pub mode: Mode,
    /// Keyed by the concrete array sort.
    pub sorts: BTreeMap<SortId, ArrayOps>,
    abs_to_concrete_sort: BTreeMap<SortId, SortId>,
    pub var_map: BTreeMap<VarId, VarId>,
    var_inv: BTreeMap<VarId, VarId>,
    /// Abstract frozen variable of each constant array, with its element.
    pub constarr: BTreeMap<VarId, (TermId, SortId)>,
    const_by_term: HashMap<TermId, VarId>,
    roles: HashMap<FunId, (FunRole, SortId)>,
    /// `c' = c` conjuncts of constant-array variables; not user equalities.
    pub frozen_eqs: BTreeSet<TermId>,
    /// Equality witness per untimed equality term (stable across rounds).
    pub witnesses: BTreeMap<TermId, VarId>,
    /// The fresh index per index sort.
    pub lambdas: BTreeMap<SortId, VarId>,
}

impl AbstractionMap {
    pub fn ops_for_abs(&self, abs_sort: SortId) -> Option<&ArrayOps> {
        self.abs_to_concrete_sort.get(&abs_sort).map(|c| &self.sorts[c])
    }

    pub fn is_abstract_array_sort(&self, s: SortId) -> bool {
        self.abs_to_concrete_sort.contains_key(&s)
    }

    pub fn is_read(&self, f: FunId) -> bool {
        matches!(self.roles.get(&f), Some((FunRole::Read, _)))
    }

    pub fn is_write(&self, f: FunId) -> bool {
        matches!(self.roles.get(&f), Some((FunRole::Write, _)))
    }

    pub fn is_eq(&self, f: FunId) -> bool {
        matches!(self.roles.get(&f), Some((FunRole::Eq, _)))
    }

    pub fn abstract_var(&self, concrete: VarId) -> Option<VarId> {
        self.var_map.get(&concrete).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.sorts.is_empty()
    }

    /// Array equality occurrences: `eqᴬ(a, b)` or `a = b` over abstract arrays.
    pub fn array_eq_args(&self, store: &TermStore, t: TermId) -> Option<(TermId, TermId)> {
        match store.node(t) {
            Node::App(Op::Apply(f), cs) if self.is_eq(*f) => Some((cs[0], cs[1])),
            Node::App(Op::Eq, cs) if self.is_abstract_array_sort(store.sort_of(cs[0])) => Some((cs[0], cs[1])),
            _ => None,
        }
    }

    /// Witness variable for an untimed array equality, created on first use.
    pub fn witness_for(&mut self, store: &mut TermStore, eq: TermId) -> VarId {
        if let Some(&w) = self.witnesses.get(&eq) {
            return w;
        }
        let (a, _) = self.array_eq_args(store, eq).expect("not an array equality");
        let ops = self.ops_for_abs(store.sort_of(a)).unwrap();
        let idx = ops.index;
        let w = store.fresh_var(&format!("__w{}", self.witnesses.len()), idx, VarKind::Witness);
        self.witnesses.insert(eq, w);
        w
    }

    pub fn lambda_for(&mut self, store: &mut TermStore, sort: SortId) -> VarId {
        if let Some(&l) = self.lambdas.get(&sort) {
            return l;
        }
        let name = match store.sort(sort) {
            Sort::Int => "__lambda_Int".to_string(),
            Sort::Uninterpreted(n) => format!("__lambda_{n}"),
            _ => "__lambda".to_string(),
        };
        let l = store.fresh_var(&name, sort, VarKind::Lambda);
        self.lambdas.insert(sort, l);
        l
    }

    fn ops(&mut self, store: &mut TermStore, concrete: SortId) -> Result<ArrayOps, AbstractionError> {
        if let Some(ops) = self.sorts.get(&concrete) {
            return Ok(ops.clone());
        }
        let Some((index, element)) = store.array_parts(concrete) else {
            unreachable!("ops for non-array sort");
        };
        let name = store.sort_name(concrete);
        match store.sort(index) {
            Sort::Int | Sort::Uninterpreted(_) => {}
            Sort::Bool => return Err(AbstractionError::FiniteIndexSort(name)),
            Sort::Array { .. } => return Err(AbstractionError::NestedArray(name)),
        }
        if store.is_array_sort(element) {
            return Err(AbstractionError::NestedArray(name));
        }
        let tag = sort_tag(store, concrete);
        let abs_sort = store.uninterpreted_sort(&format!("Arr_{tag}"));
        let read_name = store.fresh_fun_name(&format!("read_{tag}"));
        let read = store.declare_fun(&read_name, vec![abs_sort, index], element)?;
        let write_name = store.fresh_fun_name(&format!("write_{tag}"));
        let write = store.declare_fun(&write_name, vec![abs_sort, index, element], abs_sort)?;
        let eq = if self.mode == Mode::Weak {
            let eq_name = store.fresh_fun_name(&format!("eq_{tag}"));
            let b = store.bool_sort();
            Some(store.declare_fun(&eq_name, vec![abs_sort, abs_sort], b)?)
        } else {
            None
        };
        let ops = ArrayOps {
            concrete,
            abs_sort,
            index,
            element,
            read,
            write,
            eq,
        };
        self.roles.insert(read, (FunRole::Read, concrete));
        self.roles.insert(write, (FunRole::Write, concrete));
        if let Some(e) = eq {
            self.roles.insert(e, (FunRole::Eq, concrete));
        }
        self.abs_to_concrete_sort.insert(abs_sort, concrete);
        self.sorts.insert(concrete, ops.clone());
        Ok(ops)
    }

    fn abs_sort(&mut self, store: &mut TermStore, s: SortId) -> Result<SortId, AbstractionError> {
        if store.is_array_sort(s) {
            Ok(self.ops(store, s)?.abs_sort)
        } else {
            Ok(s)
        }
    }

    fn abs_var(&mut self, store: &mut TermStore, v: VarId) -> Result<VarId, AbstractionError> {
        if let Some(&a) = self.var_map.get(&v) {
            return Ok(a);
        }
        let info = store.var(v).clone();
        let abs_sort = self.abs_sort(store, info.sort)?;
        let a = match info.kind {
            VarKind::Next { of } => {
                let base = self.abs_var(store, of)?;
                store.next_of(base)
            }
            VarKind::Timed { base, step } => {
                let b = self.abs_var(store, base)?;
                store.timed(b, step)
            }
            kind => store.fresh_var(&format!("abs.{}", info.name), abs_sort, kind),
        };
        self.var_map.insert(v, a);
        self.var_inv.insert(a, v);
        Ok(a)
    }

    /// Rewrites a concrete term into the abstract vocabulary. New constant
    /// arrays become frozen variables of `sys`.
    pub fn abstract_term(
        &mut self,
        store: &mut TermStore,
        sys: &mut TransitionSystem,
        t: TermId,
    ) -> Result<TermId, AbstractionError> {
        let mut memo: HashMap<TermId, TermId> = HashMap::new();
        for u in store.subterms(t) {
            let out = match store.node(u).clone() {
                Node::Var(v) => {
                    if store.is_array_sort(store.var(v).sort) {
                        let a = self.abs_var(store, v)?;
                        store.var_term(a)
                    } else {
                        u
                    }
                }
                Node::Int(_) | Node::Bool(_) => u,
                Node::App(op, cs) => {
                    let ncs: Vec<TermId> = cs.iter().map(|c| memo[c]).collect();
                    match op {
                        Op::Read => {
                            let ops = self.ops(store, store.sort_of(cs[0]))?;
                            store.apply(ops.read, ncs)?
                        }
                        Op::Write => {
                            let ops = self.ops(store, store.sort_of(cs[0]))?;
                            store.apply(ops.write, ncs)?
                        }
                        Op::ConstArray(s) => self.const_var(store, sys, u, s, cs[0])?,
                        Op::Eq if store.is_array_sort(store.sort_of(cs[0])) => {
                            let ops = self.ops(store, store.sort_of(cs[0]))?;
                            match ops.eq {
                                Some(e) => store.apply(e, ncs)?,
                                None => store.mk(Op::Eq, ncs)?,
                            }
                        }
                        _ => {
                            if ncs == cs {
                                u
                            } else {
                                store.mk(op, ncs)?
                            }
                        }
                    }
                }
            };
            memo.insert(u, out);
        }
        Ok(memo[&t])
    }

    fn const_var(
        &mut self,
        store: &mut TermStore,
        sys: &mut TransitionSystem,
        term: TermId,
        sort: SortId,
        element: TermId,
    ) -> Result<TermId, AbstractionError> {
        if let Some(&v) = self.const_by_term.get(&term) {
            return Ok(store.var_term(v));
        }
        if !store.free_vars(element).is_empty() {
            return Err(AbstractionError::NonGroundConstant(store.display(element).to_string()));
        }
        let abs = self.ops(store, sort)?.abs_sort;
        let v = store.fresh_var(&format!("constarr{}", self.constarr.len()), abs, VarKind::State);
        sys.add_frozen_var(store, v)?;
        self.frozen_eqs.insert(*sys.trans.last().unwrap());
        self.constarr.insert(v, (element, sort));
        self.const_by_term.insert(term, v);
        Ok(store.var_term(v))
    }

    /// Maps an abstract term back to the array theory.
    pub fn concretize(&self, store: &mut TermStore, t: TermId) -> Result<TermId, AbstractionError> {
        let mut memo: HashMap<TermId, TermId> = HashMap::new();
        for u in store.subterms(t) {
            let out = match store.node(u).clone() {
                Node::Var(v) => self.concretize_var(store, v)?,
                Node::Int(_) | Node::Bool(_) => u,
                Node::App(op, cs) => {
                    let ncs: Vec<TermId> = cs.iter().map(|c| memo[c]).collect();
                    match op {
                        Op::Apply(f) => match self.roles.get(&f) {
                            Some((FunRole::Read, _)) => store.mk(Op::Read, ncs)?,
                            Some((FunRole::Write, _)) => store.mk(Op::Write, ncs)?,
                            Some((FunRole::Eq, _)) => store.mk(Op::Eq, ncs)?,
                            None => store.mk(op, ncs)?,
                        },
                        _ => {
                            if ncs == cs {
                                u
                            } else {
                                store.mk(op, ncs)?
                            }
                        }
                    }
                }
            };
            memo.insert(u, out);
        }
        Ok(memo[&t])
    }

    fn concretize_var(&self, store: &mut TermStore, v: VarId) -> Result<TermId, AbstractionError> {
        if !self.is_abstract_array_sort(store.var(v).sort) {
            return Ok(store.var_term(v));
        }
        if let Some(&c) = self.var_inv.get(&v) {
            return Ok(store.var_term(c));
        }
        let kind = store.var(v).kind;
        let base = match kind {
            VarKind::Timed { base, .. } | VarKind::Next { of: base } => base,
            _ => v,
        };
        if let Some(&(elem, sort)) = self.constarr.get(&base) {
            return Ok(store.const_array(sort, elem)?);
        }
        if let Some(&c) = self.var_inv.get(&base) {
            let out = match kind {
                VarKind::Timed { step, .. } => store.timed(c, step),
                VarKind::Next { .. } => store.next_of(c),
                _ => c,
            };
            return Ok(store.var_term(out));
        }
        Err(AbstractionError::UnmappedSymbol(store.var(v).name.clone()))
    }
}

fn sort_tag(store: &TermStore, s: SortId) -> String {
    match store.sort(s) {
        Sort::Bool => "Bool".into(),
        Sort::Int => "Int".into(),
        Sort::Uninterpreted(n) => n.replace(|c: char| !c.is_ascii_alphanumeric(), "_"),
        Sort::Array { index, element } => format!("{}_{}", sort_tag(store, *index), sort_tag(store, *element)),
    }
}

/// Abstracts every array of `sys` and `prop`. Systems without arrays are
/// returned unchanged with an empty map.
pub fn abstract_arrays(
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: Property,
    mode: Mode,
) -> Result<(TransitionSystem, Property, AbstractionMap), AbstractionError> {
    let mut map = AbstractionMap {
        mode,
        ..Default::default()
    };
    let mut out = TransitionSystem::new();
    for &v in &sys.state_vars {
        let a = if store.is_array_sort(store.var(v).sort) {
            map.abs_var(store, v)?
        } else {
            v
        };
        out.add_state_var(store, a);
        if sys.frozen.contains(&v) {
            out.frozen.insert(a);
        }
    }
    for &v in &sys.input_vars {
        let a = if store.is_array_sort(store.var(v).sort) {
            map.abs_var(store, v)?
        } else {
            v
        };
        out.add_input_var(a);
    }
    for &c in &sys.init {
        let a = map.abstract_term(store, &mut out, c)?;
        out.init.push(a);
    }
    for &c in &sys.trans {
        let a = map.abstract_term(store, &mut out, c)?;
        out.trans.push(a);
    }
    let formula = map.abstract_term(store, &mut out, prop.formula)?;
    let original = map.abstract_term(store, &mut out, prop.original)?;
    Ok((out, Property { formula, original }, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_free_system_is_unchanged() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let mut sys = TransitionSystem::new();
        let x = st.new_var("x", int, VarKind::State).unwrap();
        sys.add_state_var(&mut st, x);
        let xt = st.var_term(x);
        let xn = st.next_of(x);
        let xnt = st.var_term(xn);
        let one = st.int(1);
        let inc = st.add(vec![xt, one]).unwrap();
        sys.trans.push(st.eq(xnt, inc).unwrap());
        let zero = st.int(0);
        sys.init.push(st.eq(xt, zero).unwrap());
        let prop = Property::new(st.le(zero, xt).unwrap());
        let (abs, aprop, map) = abstract_arrays(&mut st, &sys, prop, Mode::Weak).unwrap();
        assert!(map.is_empty());
        assert_eq!(abs.init, sys.init);
        assert_eq!(abs.trans, sys.trans);
        assert_eq!(aprop, prop);
    }

    #[test]
    fn bool_index_is_rejected() {
        let mut st = TermStore::new();
        let b = st.bool_sort();
        let int = st.int_sort();
        let arr = st.array_sort(b, int);
        let mut sys = TransitionSystem::new();
        let a = st.new_var("a", arr, VarKind::State).unwrap();
        sys.add_state_var(&mut st, a);
        let prop = Property::new(st.tru());
        assert!(matches!(
            abstract_arrays(&mut st, &sys, prop, Mode::Weak),
            Err(AbstractionError::FiniteIndexSort(_))
        ));
    }

    #[test]
    fn weak_mode_equality_becomes_predicate_and_round_trips() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let arr = st.array_sort(int, int);
        let mut sys = TransitionSystem::new();
        let a = st.new_var("a", arr, VarKind::State).unwrap();
        sys.add_state_var(&mut st, a);
        let at = st.var_term(a);
        let zero = st.int(0);
        let c0 = st.const_array(arr, zero).unwrap();
        let init = st.eq(at, c0).unwrap();
        sys.init.push(init);
        let prop = Property::new(st.tru());
        let (abs, _, map) = abstract_arrays(&mut st, &sys, prop, Mode::Weak).unwrap();
        let ai = abs.init[0];
        match st.node(ai) {
            Node::App(Op::Apply(f), _) => assert!(map.is_eq(*f)),
            other => panic!("{other:?}"),
        }
        assert_eq!(map.concretize(&mut st, ai).unwrap(), init);
        assert_eq!(map.constarr.len(), 1);
        let c = *map.constarr.keys().next().unwrap();
        assert!(abs.frozen.contains(&c));
    }
}
