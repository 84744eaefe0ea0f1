//! Candidate invariants for Houdini: atoms of the system and property,
//! their one-step preimages, copies with indices replaced by prophecy
//! variables, and range facts for counters.

use std::collections::{BTreeSet, HashMap};

use crate::sts::{Property, TransitionSystem};
use crate::terms::{Node, Op, TermError, TermId, TermStore, VarId, VarKind};

const MAX_CANDIDATES: usize = 600;

struct Gen<'a> {
    store: &'a mut TermStore,
    sys: &'a TransitionSystem,
    out: Vec<TermId>,
    seen: BTreeSet<TermId>,
}

impl Gen<'_> {
    fn state_only(&self, t: TermId) -> bool {
        self.store.free_vars(t).into_iter().all(|v| self.sys.is_state(v))
    }

    fn add(&mut self, t: TermId) {
        if self.out.len() < MAX_CANDIDATES
            && t != self.store.tru()
            && t != self.store.fls()
            && self.state_only(t)
            && self.seen.insert(t)
        {
            self.out.push(t);
        }
    }
}

fn is_atom(store: &TermStore, t: TermId) -> bool {
    if store.sort_of(t) != store.bool_sort() {
        return false;
    }
    match store.node(t) {
        Node::Var(_) => true,
        Node::App(Op::Eq, cs) => store.sort_of(cs[0]) != store.bool_sort(),
        Node::App(Op::Lt | Op::Le | Op::Apply(_), _) => true,
        _ => false,
    }
}

fn atoms(store: &TermStore, t: TermId, out: &mut BTreeSet<TermId>) {
    for u in store.subterms(t) {
        if is_atom(store, u) {
            out.insert(u);
        }
    }
}

/// `x' = e` conjuncts with `e` over state variables.
fn definitions(store: &mut TermStore, sys: &TransitionSystem) -> HashMap<VarId, TermId> {
    let mut defs = HashMap::new();
    for &c in &sys.trans {
        let Node::App(Op::Eq, cs) = store.node(c).clone() else { continue };
        for (l, r) in [(cs[0], cs[1]), (cs[1], cs[0])] {
            let Some(v) = store.as_var(l) else { continue };
            let VarKind::Next { of } = store.var(v).kind else { continue };
            if !sys.is_state(of) || sys.is_frozen(store, of).unwrap_or(false) {
                continue;
            }
            if store.free_vars(r).into_iter().all(|u| sys.is_state(u)) {
                defs.entry(of).or_insert(r);
            }
        }
    }
    defs
}

/// Counters `v' = v + 1` (possibly guarded) with their initial value.
fn counters(store: &TermStore, sys: &TransitionSystem) -> Vec<(VarId, TermId)> {
    let mut out = Vec::new();
    for &c in &sys.trans {
        let body = match store.node(c) {
            Node::App(Op::Implies, cs) => cs[1],
            _ => c,
        };
        let Node::App(Op::Eq, cs) = store.node(body) else { continue };
        for (l, r) in [(cs[0], cs[1]), (cs[1], cs[0])] {
            let Some(n) = store.as_var(l) else { continue };
            let VarKind::Next { of } = store.var(n).kind else { continue };
            let Node::App(Op::Add, args) = store.node(r) else { continue };
            let vt = store.var_term(of);
            let inc = args.len() == 2
                && args.contains(&vt)
                && args.iter().any(|&a| store.as_int(a).is_some_and(|k| *k == 1.into()));
            if !inc {
                continue;
            }
            for &i in &sys.init {
                if let Node::App(Op::Eq, ics) = store.node(i) {
                    let init_val = if ics[0] == vt {
                        ics[1]
                    } else if ics[1] == vt {
                        ics[0]
                    } else {
                        continue;
                    };
                    if store.as_int(init_val).is_some() && !out.contains(&(of, init_val)) {
                        out.push((of, init_val));
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn generate(
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: &Property,
) -> Result<Vec<TermId>, TermError> {
    let mut atom_set = BTreeSet::new();
    atoms(store, prop.formula, &mut atom_set);
    atoms(store, prop.original, &mut atom_set);
    for &c in sys.init.iter().chain(&sys.trans) {
        atoms(store, c, &mut atom_set);
    }
    let mut g = Gen {
        store,
        sys,
        out: Vec::new(),
        seen: BTreeSet::new(),
    };
    g.add(prop.formula);
    g.add(prop.original);
    for &c in &sys.init {
        g.add(c);
    }
    let base: Vec<TermId> = atom_set.into_iter().filter(|&a| g.state_only(a)).collect();

    let defs = definitions(g.store, sys);
    let mut pre = Vec::new();
    if !defs.is_empty() {
        let map: HashMap<VarId, TermId> = defs;
        for &a in &base {
            let p = g.store.substitute_vars(a, &map)?;
            if p != a {
                pre.push(p);
            }
        }
    }
    let mut lits: Vec<TermId> = base.iter().chain(&pre).copied().collect();

    let prophecies: Vec<VarId> = sys.prophecy_vars().filter(|&p| sys.is_state(p)).collect();
    let mut generalized = Vec::new();
    for &a in &lits {
        for &p in &prophecies {
            let pt = g.store.var_term(p);
            let psort = g.store.sort_of(pt);
            let mut map = HashMap::new();
            for u in g.store.subterms(a) {
                let args = match g.store.node(u) {
                    Node::App(Op::Apply(_) | Op::Read, cs) if cs.len() >= 2 => cs[1..].to_vec(),
                    _ => continue,
                };
                for i in args {
                    let is_proph = g
                        .store
                        .as_var(i)
                        .is_some_and(|v| matches!(g.store.var(v).kind, VarKind::Prophecy { .. }));
                    if !is_proph && g.store.sort_of(i) == psort && g.store.free_vars(i).len() <= 1 {
                        map.insert(i, pt);
                    }
                }
            }
            if !map.is_empty() {
                let t = g.store.substitute(a, &map)?;
                generalized.push(t);
            }
        }
    }
    lits.extend(generalized.iter().copied());

    for &a in &lits {
        g.add(a);
        let n = g.store.not(a)?;
        g.add(n);
    }

    let int = g.store.int_sort();
    for (v, c0) in counters(g.store, sys) {
        let vt = g.store.var_term(v);
        let lo = g.store.le(c0, vt)?;
        g.add(lo);
        for &p in &prophecies {
            if g.store.var(p).sort != int {
                continue;
            }
            let pt = g.store.var_term(p);
            let ge = g.store.le(c0, pt)?;
            let below = g.store.lt(pt, vt)?;
            let range = g.store.and2(ge, below)?;
            for &a in &generalized {
                if g.store.free_vars(a).contains(&p) && !g.store.free_vars(a).contains(&v) {
                    let t = g.store.implies(range, a)?;
                    g.add(t);
                }
            }
        }
    }
    Ok(g.out)
}
