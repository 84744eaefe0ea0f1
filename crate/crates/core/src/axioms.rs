//! Index sets and lazy array-axiom instantiation against an abstract
//! counterexample.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::abstraction::{AbstractionMap, Mode};
use crate::bmc::{time_term, untime_term, UnrollOptions, Unrolling};
use crate::smt::{Session, SolverError};
use crate::sts::{Property, TransitionSystem};
use crate::terms::{Node, Op, SortId, TermError, TermId, TermStore, VarId, VarKind};

#[derive(Error, Debug)]
pub enum AxiomError {
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver returned a non-Boolean value for an axiom instance")]
    Evaluation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    ReadIdx,
    WriteIdx,
    Witness,
    Lambda,
    ProphecyAdded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    /// Timed term.
    pub term: TermId,
    pub untimed: TermId,
    pub step: u32,
    pub provenance: Provenance,
    /// Same value at every step, so any single copy represents all of them.
    pub frozen: bool,
}

#[derive(Clone, Debug, Default)]
pub struct IndexSet {
    pub k: u32,
    /// Entries per index sort, deduplicated by timed term.
    pub entries: BTreeMap<SortId, Vec<IndexEntry>>,
    pub lambdas: BTreeMap<SortId, TermId>,
    /// Distinctness of each λ from the other entries of its sort.
    pub side: Vec<TermId>,
}

impl IndexSet {
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn terms(&self) -> BTreeSet<TermId> {
        self.entries.values().flatten().map(|e| e.term).collect()
    }

    /// Representative copy of `e` at step `n` (frozen entries only).
    fn at_step(&self, store: &mut TermStore, e: &IndexEntry, n: u32) -> Result<TermId, TermError> {
        if e.frozen {
            time_term(store, e.untimed, n)
        } else {
            Ok(e.term)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Schema {
    ConstCase,
    ExtWitness,
    WriteCase,
    CongruenceWA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Consecutive,
    NonConsecutive { index: TermId, step: u32 },
}

#[derive(Clone, Debug)]
pub struct AxiomInstance {
    pub schema: Schema,
    /// Timed formula.
    pub formula: TermId,
    pub trigger: TermId,
    pub inst_index: Option<IndexEntry>,
    pub classification: Classification,
}

impl AxiomInstance {
    pub fn is_consecutive(&self) -> bool {
        self.classification == Classification::Consecutive
    }
}

/// `Consecutive` iff the steps of `f` span at most one.
pub fn classify(store: &TermStore, f: TermId, inst_index: Option<&IndexEntry>) -> Classification {
    let ts = store.times_of(f);
    let span = match (ts.first(), ts.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    };
    match inst_index {
        Some(e) if span > 1 => Classification::NonConsecutive {
            index: e.term,
            step: e.step,
        },
        _ => Classification::Consecutive,
    }
}

fn span(store: &TermStore, f: TermId) -> u32 {
    let ts = store.times_of(f);
    match (ts.first(), ts.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    }
}

fn is_frozen_like(store: &TermStore, sys: &TransitionSystem, t: TermId) -> bool {
    store.free_vars(t).into_iter().all(|v| {
        sys.frozen.contains(&v) || matches!(store.var(v).kind, VarKind::Prophecy { .. } | VarKind::Lambda)
    })
}

fn has_next(store: &TermStore, t: TermId) -> bool {
    store.contains_var(t, |_, info| matches!(info.kind, VarKind::Next { .. }))
}

/// Untimed key of a timed array equality: the equality shifted back to its
/// earliest step.
fn canonical_eq(store: &mut TermStore, timed: TermId) -> Result<TermId, TermError> {
    let n = store.times_of(timed).first().copied().unwrap_or(0);
    untime_term(store, timed, n)
}

struct Builder {
    set: IndexSet,
    seen: HashSet<TermId>,
}

impl Builder {
    fn push(&mut self, store: &TermStore, e: IndexEntry) {
        if self.seen.insert(e.term) {
            let s = store.sort_of(e.term);
            self.set.entries.entry(s).or_default().push(e);
        }
    }
}

/// Index terms of the unrolling at bound `k`: read/write indices, one
/// witness per array equality, one λ per index sort, and prophecy copies.
pub fn compute_indices(
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: &Property,
    map: &mut AbstractionMap,
    k: u32,
    opts: UnrollOptions,
) -> Result<IndexSet, AxiomError> {
    let mut b = Builder {
        set: IndexSet {
            k,
            ..Default::default()
        },
        seen: HashSet::new(),
    };
    if map.is_empty() {
        return Ok(b.set);
    }
    // (untimed formula, steps it is timed at)
    let mut sources: Vec<(TermId, Vec<u32>)> = Vec::new();
    for &c in &sys.init {
        sources.push((c, vec![0]));
    }
    for &c in &sys.trans {
        sources.push((c, (0..k.saturating_sub(1)).collect()));
    }
    sources.push((prop.formula, vec![k - 1]));
    if opts.assume_prestate {
        sources.push((prop.original, (0..k - 1).collect()));
    }
    let mut idx_terms: BTreeMap<TermId, (Provenance, Vec<u32>)> = BTreeMap::new();
    let mut eq_terms: BTreeSet<TermId> = BTreeSet::new();
    for (f, steps) in &sources {
        for u in store.subterms(*f) {
            if let Node::App(Op::Apply(fun), cs) = store.node(u) {
                let prov = if map.is_read(*fun) {
                    Some(Provenance::ReadIdx)
                } else if map.is_write(*fun) {
                    Some(Provenance::WriteIdx)
                } else {
                    None
                };
                if let Some(p) = prov {
                    let e = idx_terms.entry(cs[1]).or_insert((p, Vec::new()));
                    e.1.extend(steps.iter().copied());
                }
            }
            if map.array_eq_args(store, u).is_some() {
                for &s in steps {
                    let timed = time_term(store, u, s)?;
                    let key = canonical_eq(store, timed)?;
                    if !map.frozen_eqs.contains(&key) {
                        eq_terms.insert(key);
                    }
                }
            }
        }
    }
    let all_steps: Vec<u32> = (0..k).collect();
    for (&t, (prov, steps)) in &idx_terms {
        let fresh = |v: VarId| matches!(store.var(v).kind, VarKind::Lambda | VarKind::Witness);
        if store.free_vars(t).into_iter().any(|v| match store.var(v).kind {
            VarKind::Next { of } => fresh(of),
            _ => fresh(v),
        }) {
            continue;
        }
        let frozen = !has_next(store, t) && is_frozen_like(store, sys, t);
        let prov = if store.contains_var(t, |_, info| matches!(info.kind, VarKind::Prophecy { .. })) {
            Provenance::ProphecyAdded
        } else {
            *prov
        };
        let steps: Vec<u32> = if has_next(store, t) {
            let mut s = steps.clone();
            s.sort_unstable();
            s.dedup();
            s
        } else {
            all_steps.clone()
        };
        for s in steps {
            let term = time_term(store, t, s)?;
            b.push(
                store,
                IndexEntry {
                    term,
                    untimed: t,
                    step: s,
                    provenance: prov,
                    frozen,
                },
            );
        }
    }
    for &eq in &eq_terms {
        let w = map.witness_for(store, eq);
        let wt = store.var_term(w);
        for &s in &all_steps {
            let term = store.timed_term(w, s);
            b.push(
                store,
                IndexEntry {
                    term,
                    untimed: wt,
                    step: s,
                    provenance: Provenance::Witness,
                    frozen: false,
                },
            );
        }
    }
    let index_sorts: BTreeSet<SortId> = map.sorts.values().map(|o| o.index).collect();
    let proph: Vec<_> = sys
        .prophecy_vars()
        .filter(|&p| index_sorts.contains(&store.var(p).sort))
        .collect();
    for p in proph {
        let pt = store.var_term(p);
        for &s in &all_steps {
            let term = store.timed_term(p, s);
            b.push(
                store,
                IndexEntry {
                    term,
                    untimed: pt,
                    step: s,
                    provenance: Provenance::ProphecyAdded,
                    frozen: true,
                },
            );
        }
    }
    for &sort in &index_sorts {
        let l = map.lambda_for(store, sort);
        let lt = store.var_term(l);
        let others: Vec<TermId> = b
            .set
            .entries
            .get(&sort)
            .map(|es| es.iter().map(|e| e.term).collect())
            .unwrap_or_default();
        let l0 = store.timed_term(l, 0);
        for &s in &all_steps {
            let term = store.timed_term(l, s);
            if s > 0 {
                let same = store.eq(term, l0)?;
                b.set.side.push(same);
            }
            b.push(
                store,
                IndexEntry {
                    term,
                    untimed: lt,
                    step: s,
                    provenance: Provenance::Lambda,
                    frozen: true,
                },
            );
        }
        for o in others {
            let d = store.neq(l0, o)?;
            b.set.side.push(d);
        }
        b.set.lambdas.insert(sort, lt);
    }
    Ok(b.set)
}

/// Violated instances split into consecutive and non-consecutive ones.
#[derive(Clone, Debug, Default)]
pub struct Violations {
    pub ca: Vec<AxiomInstance>,
    pub nca: Vec<AxiomInstance>,
    /// Number of instances constructed and evaluated.
    pub checked: usize,
    /// Every instance constructed, violated or not, including wide
    /// congruence instances that were not evaluated.
    pub all: Vec<AxiomInstance>,
}

impl Violations {
    pub fn is_empty(&self) -> bool {
        self.ca.is_empty() && self.nca.is_empty()
    }
}

struct Candidates {
    list: Vec<AxiomInstance>,
    seen: HashSet<TermId>,
}

impl Candidates {
    fn push(&mut self, store: &TermStore, schema: Schema, formula: TermId, trigger: TermId, e: Option<IndexEntry>) {
        if formula == store.tru() || !self.seen.insert(formula) {
            return;
        }
        let classification = classify(store, formula, e.as_ref());
        self.list.push(AxiomInstance {
            schema,
            formula,
            trigger,
            inst_index: e,
            classification,
        });
    }
}

/// Instantiates the array axioms over the index set and keeps the instances
/// the current model of `session` falsifies.
pub fn check_array_axioms(
    session: &mut Session,
    store: &mut TermStore,
    map: &AbstractionMap,
    idx: &IndexSet,
    u: &Unrolling,
) -> Result<Violations, AxiomError> {
    let mut writes: BTreeSet<TermId> = BTreeSet::new();
    let mut eqs: BTreeSet<TermId> = BTreeSet::new();
    for a in &u.assertions {
        for t in store.subterms(a.term) {
            match store.node(t) {
                Node::App(Op::Apply(f), _) if map.is_write(*f) => {
                    writes.insert(t);
                }
                _ => {
                    if map.array_eq_args(store, t).is_some() {
                        let key = canonical_eq(store, t)?;
                        if !map.frozen_eqs.contains(&key) {
                            eqs.insert(t);
                        }
                    }
                }
            }
        }
    }
    let mut cands = Candidates {
        list: Vec::new(),
        seen: HashSet::new(),
    };
    for (&c, &(elem, _)) in &map.constarr {
        let abs = store.var(c).sort;
        let Some(ops) = map.ops_for_abs(abs).cloned() else { continue };
        for e in idx.entries.get(&ops.index).into_iter().flatten() {
            let s = if e.frozen { 0 } else { e.step };
            let ct = store.timed_term(c, s);
            let i = idx.at_step(store, e, s)?;
            let r = store.apply(ops.read, vec![ct, i])?;
            let f = store.eq(r, elem)?;
            cands.push(store, Schema::ConstCase, f, ct, Some(*e));
        }
    }

    for &eq in &eqs {
        let (a, bb) = map.array_eq_args(store, eq).unwrap();
        let ops = map.ops_for_abs(store.sort_of(a)).unwrap().clone();
        let key = canonical_eq(store, eq)?;
        let Some(&w) = map.witnesses.get(&key) else { continue };
        let s = store.times_of(eq).first().copied().unwrap_or(0);
        let ws = store.timed_term(w, s);
        let ra = store.apply(ops.read, vec![a, ws])?;
        let rb = store.apply(ops.read, vec![bb, ws])?;
        let ne = store.not(eq)?;
        let diff = store.neq(ra, rb)?;
        let f = store.implies(ne, diff)?;
        cands.push(store, Schema::ExtWitness, f, eq, None);
    }

    let mut write_cands = Vec::new();
    for &wt in &writes {
        let cs = store.children(wt).to_vec();
        let (a, j, v) = (cs[0], cs[1], cs[2]);
        let ops = map.ops_for_abs(store.sort_of(a)).unwrap().clone();
        let smin = store.times_of(wt).first().copied().unwrap_or(0);
        for e in idx.entries.get(&ops.index).into_iter().flatten() {
            let i = idx.at_step(store, e, smin)?;
            let r = store.apply(ops.read, vec![wt, i])?;
            let same = store.eq(i, j)?;
            let hit = store.eq(r, v)?;
            let c1 = store.implies(same, hit)?;
            let differ = store.not(same)?;
            let ra = store.apply(ops.read, vec![a, i])?;
            let keep = store.eq(r, ra)?;
            let c2 = store.implies(differ, keep)?;
            let f = store.and2(c1, c2)?;
            write_cands.push((span(store, f), f, wt, *e));
        }
    }
    write_cands.sort_by_key(|c| (c.0, c.1));
    for (_, f, wt, e) in write_cands {
        cands.push(store, Schema::WriteCase, f, wt, Some(e));
    }

    let mut wide = Vec::new();
    if map.mode == Mode::Weak {
        let mut narrow = Vec::new();
        for &eq in &eqs {
            let Node::App(Op::Apply(_), cs) = store.node(eq).clone() else { continue };
            let ops = map.ops_for_abs(store.sort_of(cs[0])).unwrap().clone();
            let ts = store.times_of(eq);
            let (lo, hi) = (
                ts.first().copied().unwrap_or(0),
                ts.last().copied().unwrap_or(0),
            );
            for e in idx.entries.get(&ops.index).into_iter().flatten() {
                let i = idx.at_step(store, e, lo)?;
                let ra = store.apply(ops.read, vec![cs[0], i])?;
                let rb = store.apply(ops.read, vec![cs[1], i])?;
                let same = store.eq(ra, rb)?;
                let f = store.implies(eq, same)?;
                let s = if e.frozen { lo } else { e.step };
                let near = s.max(hi) - s.min(lo) <= 1;
                let item = (span(store, f), f, eq, *e);
                if near {
                    narrow.push(item);
                } else {
                    wide.push(item);
                }
            }
        }
        narrow.sort_by_key(|c| (c.0, c.1));
        for (_, f, eq, e) in narrow {
            cands.push(store, Schema::CongruenceWA, f, eq, Some(e));
        }
    }

    let mut out = Violations::default();
    evaluate_into(session, store, &cands.list, &mut out)?;
    out.checked = cands.list.len();
    wide.sort_by_key(|c| (c.0, c.1));
    let start = cands.list.len();
    for (_, f, eq, e) in wide {
        cands.push(store, Schema::CongruenceWA, f, eq, Some(e));
    }
    if out.is_empty() && cands.list.len() > start {
        evaluate_into(session, store, &cands.list[start..], &mut out)?;
        out.checked = cands.list.len();
    }
    out.all = cands.list;
    Ok(out)
}

fn evaluate_into(
    session: &mut Session,
    store: &TermStore,
    list: &[AxiomInstance],
    out: &mut Violations,
) -> Result<(), AxiomError> {
    let formulas: Vec<TermId> = list.iter().map(|c| c.formula).collect();
    let values = session.get_values(store, &formulas)?;
    for (c, v) in list.iter().zip(values) {
        match v.as_bool() {
            Some(true) => {}
            Some(false) => {
                if c.is_consecutive() {
                    out.ca.push(c.clone());
                } else {
                    out.nca.push(c.clone());
                }
            }
            None => return Err(AxiomError::Evaluation),
        }
    }
    Ok(())
}

/// Map from timed terms to the `IndexEntry` they came from.
pub fn entry_lookup(idx: &IndexSet) -> HashMap<TermId, IndexEntry> {
    idx.entries.values().flatten().map(|e| (e.term, *e)).collect()
}
