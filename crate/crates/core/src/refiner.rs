//! Refinement of the abstract system at a fixed bound: check the abstract
//! counterexample against the array axioms, turn non-consecutive violations
//! into consecutive ones with prophecy variables, and lift the result into
//! the initial-state and transition formulas.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::debug;
use thiserror::Error;

use crate::abstraction::AbstractionMap;
use crate::axioms::{self, AxiomError, AxiomInstance, Classification, IndexEntry, Provenance};
use crate::bmc::{self, untime_term, Origin, UnrollOptions, Unrolling};
use crate::model::Value;
use crate::smt::{CheckResult, Session, SolverError, SolverFactory, Want};
use crate::sts::{AuxRecord, Property, StsError, TransitionSystem};
use crate::terms::{TermError, TermId, TermStore, VarId, VarKind};

#[derive(Error, Debug)]
pub enum RefineError {
    #[error("refinement at bound {k} made no progress")]
    RefinementStuck { k: u32 },
    #[error("refinement at bound {k} gave up after {iters} iterations")]
    ResourceOut { k: u32, iters: u32 },
    #[error("solver could not decide the bound-{k} query: {reason}")]
    SolverUnknown { k: u32, reason: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Sts(#[from] StsError),
    #[error(transparent)]
    Axiom(AxiomError),
}

impl From<AxiomError> for RefineError {
    fn from(e: AxiomError) -> Self {
        match e {
            AxiomError::Solver(s) => RefineError::Solver(s),
            AxiomError::Term(t) => RefineError::Term(t),
            e => RefineError::Axiom(e),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Placement {
    Init,
    /// Single-step lemma, conjoined over `X` and over `X'`.
    Trans1,
    /// Lemma over `X` and `X'`.
    Trans2,
}

#[derive(Clone, Copy, Debug)]
pub struct RefineOptions {
    pub unroll: UnrollOptions,
    /// Minimise the non-consecutive instances before introducing prophecies.
    pub prophecy_reduction: bool,
    /// Minimise consecutive instances with an unsat core before lifting.
    pub unsat_core_reduction: bool,
    /// On success keep only this call's lemmas that occur in the unsat core.
    pub axiom_reduction: bool,
    pub max_iters: u32,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            unroll: UnrollOptions { assume_prestate: true },
            prophecy_reduction: true,
            unsat_core_reduction: true,
            axiom_reduction: true,
            max_iters: 200,
        }
    }
}

/// Scalar values per step, keyed by untimed variable.
pub type Trace = Vec<BTreeMap<VarId, Value>>;

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub system: TransitionSystem,
    pub property: Property,
    pub refined: bool,
    pub added_aux: Vec<AuxRecord>,
    pub added_lemmas: Vec<(TermId, Placement)>,
    /// The counterexample when `refined` is false.
    pub trace: Option<Trace>,
    /// Every violated instance found, as timed formulas.
    pub instances: Vec<TermId>,
    pub iterations: u32,
}

/// Refines `sys` until the bound-`k` query is unsatisfiable or a genuine
/// counterexample is found.
pub fn refine_arrays(
    factory: &SolverFactory,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: Property,
    map: &mut AbstractionMap,
    k: u32,
    opts: RefineOptions,
) -> Result<RefineOutcome, RefineError> {
    let mut session = factory.open("ALL")?;
    let mut r = Refiner {
        store,
        map,
        k,
        sys: sys.clone(),
        prop,
        lemmas: Vec::new(),
        instances: Vec::new(),
        aux_start: sys.aux_log.len(),
    };
    for iter in 1..=opts.max_iters {
        let idx = axioms::compute_indices(r.store, &r.sys, &r.prop, r.map, k, opts.unroll)?;
        let u = bmc::unroll(r.store, &r.sys, &r.prop, k, &idx.side, opts.unroll)?;
        let want = if opts.axiom_reduction { Want::Core } else { Want::Nothing };
        match bmc::bmc_check(&mut session, r.store, &u, want)? {
            CheckResult::Unknown(reason) => return Err(RefineError::SolverUnknown { k, reason }),
            CheckResult::Unsat(core) => {
                if opts.axiom_reduction {
                    r.filter_lemmas(&u, &core);
                }
                return Ok(r.finish(true, None, iter));
            }
            CheckResult::Sat(_) => {}
        }
        let viol = axioms::check_array_axioms(&mut session, r.store, r.map, &idx, &u)?;
        debug!(
            "k={k} iter={iter}: {} consecutive, {} non-consecutive of {} instances",
            viol.ca.len(),
            viol.nca.len(),
            viol.checked
        );
        if viol.is_empty() {
            let trace = r.extract_trace(&mut session)?;
            return Ok(r.finish(false, Some(trace), iter));
        }
        r.instances.extend(viol.ca.iter().chain(&viol.nca).map(|a| a.formula));
        let before = (r.sys.init.len(), r.sys.trans.len(), r.sys.aux_log.len());
        if !viol.ca.is_empty() {
            let ca = if opts.unsat_core_reduction {
                let keep = reduce_axioms(&mut session, r.store, &u, &viol.ca, false)?
                    .unwrap_or_else(|| (0..viol.ca.len()).collect());
                keep.into_iter().map(|i| viol.ca[i].clone()).collect()
            } else {
                viol.ca
            };
            for ax in &ca {
                r.lift(ax.formula)?;
            }
        } else {
            let chosen: Vec<AxiomInstance> = if !opts.prophecy_reduction {
                viol.nca
            } else if let Some(keep) = reduce_axioms(&mut session, r.store, &u, &viol.all, true)? {
                // Minimising over every instance of the index set, not only
                // the violated ones, lets later instantiations replace
                // earlier ones.
                keep.into_iter().map(|i| viol.all[i].clone()).collect()
            } else if let Some(keep) = reduce_axioms(&mut session, r.store, &u, &viol.nca, true)? {
                keep.into_iter().map(|i| viol.nca[i].clone()).collect()
            } else {
                let keep = r.best_group(&viol.nca);
                keep.into_iter().map(|i| viol.nca[i].clone()).collect()
            };
            debug!(
                "resolving {} instances: {:?}",
                chosen.len(),
                chosen
                    .iter()
                    .map(|a| a.inst_index.map(|e| r.store.display(e.term).to_string()))
                    .collect::<Vec<_>>()
            );
            for ax in &chosen {
                if ax.is_consecutive() {
                    r.lift(ax.formula)?;
                } else {
                    r.resolve_nonconsecutive(ax)?;
                }
            }
        }
        if (r.sys.init.len(), r.sys.trans.len(), r.sys.aux_log.len()) == before {
            return Err(RefineError::RefinementStuck { k });
        }
    }
    Err(RefineError::ResourceOut {
        k,
        iters: opts.max_iters,
    })
}

struct Refiner<'a> {
    store: &'a mut TermStore,
    map: &'a mut AbstractionMap,
    k: u32,
    sys: TransitionSystem,
    prop: Property,
    /// Conjuncts added by this call: (term, placement, in init, lifted
    /// lemma it came from).
    lemmas: Vec<(TermId, Placement, bool, TermId)>,
    instances: Vec<TermId>,
    aux_start: usize,
}

impl Refiner<'_> {
    fn finish(self, refined: bool, trace: Option<Trace>, iterations: u32) -> RefineOutcome {
        let mut added_lemmas: Vec<(TermId, Placement)> = Vec::new();
        for &(t, p, _, _) in &self.lemmas {
            if !added_lemmas.contains(&(t, p)) {
                added_lemmas.push((t, p));
            }
        }
        RefineOutcome {
            added_aux: self.sys.aux_log[self.aux_start..].to_vec(),
            system: self.sys,
            property: self.prop,
            refined,
            added_lemmas,
            trace,
            instances: self.instances,
            iterations,
        }
    }

    /// Drops this call's lemmas that do not occur in `core`.
    fn filter_lemmas(&mut self, u: &Unrolling, core: &[String]) {
        let mut used_init = BTreeSet::new();
        let mut used_trans = BTreeSet::new();
        for name in core {
            match u.origin_of(name) {
                Some(Origin::Init(i)) => {
                    used_init.insert(self.sys.init[i]);
                }
                Some(Origin::Trans { conj, .. }) => {
                    used_trans.insert(self.sys.trans[conj]);
                }
                _ => {}
            }
        }
        let used: BTreeSet<TermId> = self
            .lemmas
            .iter()
            .filter(|&&(t, _, init, _)| if init { used_init.contains(&t) } else { used_trans.contains(&t) })
            .map(|&(_, _, _, origin)| origin)
            .collect();
        // The copies of one lemma are kept or dropped together.
        let dropped: BTreeSet<(TermId, bool)> = self
            .lemmas
            .iter()
            .filter(|&&(_, _, _, origin)| !used.contains(&origin))
            .map(|&(t, _, init, _)| (t, init))
            .collect();
        if dropped.is_empty() {
            return;
        }
        self.sys.init.retain(|t| !dropped.contains(&(*t, true)));
        self.sys.trans.retain(|t| !dropped.contains(&(*t, false)));
        self.lemmas.retain(|&(t, _, init, _)| !dropped.contains(&(t, init)));
    }

    fn extract_trace(&mut self, session: &mut Session) -> Result<Trace, RefineError> {
        let vars: Vec<VarId> = self
            .sys
            .state_vars
            .iter()
            .chain(&self.sys.input_vars)
            .copied()
            .filter(|&v| !self.map.is_abstract_array_sort(self.store.var(v).sort))
            .collect();
        let mut keys = Vec::new();
        let mut terms = Vec::new();
        for n in 0..self.k {
            for &v in &vars {
                let tv = self.store.timed(v, n);
                if session.is_declared(tv) {
                    keys.push((n, v));
                    terms.push(self.store.var_term(tv));
                }
            }
        }
        let values = session.get_values(self.store, &terms)?;
        let mut trace: Trace = vec![BTreeMap::new(); self.k as usize];
        for ((n, v), val) in keys.into_iter().zip(values) {
            trace[n as usize].insert(v, val);
        }
        Ok(trace)
    }

    /// Makes every untimed base variable of `ax` a state variable.
    fn promote_vars(&mut self, ax: TermId) -> Result<(), RefineError> {
        for v in self.store.free_vars(ax) {
            let Some((base, _)) = self.store.timed_parts(v) else { continue };
            if self.sys.is_state(base) {
                continue;
            }
            if self.sys.is_input(base) {
                self.sys.promote_input(self.store, base);
                continue;
            }
            match self.store.var(base).kind {
                VarKind::Witness => {
                    self.sys.add_state_var(self.store, base);
                    self.sys.aux_log.push(AuxRecord::Promoted { var: base, frozen: false });
                }
                VarKind::Lambda => {
                    self.sys.add_frozen_var(self.store, base)?;
                    self.sys.aux_log.push(AuxRecord::Promoted { var: base, frozen: true });
                }
                _ => {
                    self.sys.add_state_var(self.store, base);
                    self.sys.aux_log.push(AuxRecord::Promoted { var: base, frozen: false });
                }
            }
        }
        Ok(())
    }

    /// Lifts a consecutive timed formula into `init` or `trans`.
    fn lift(&mut self, ax: TermId) -> Result<(), RefineError> {
        let ts = self.store.times_of(ax);
        let lo = ts.first().copied().unwrap_or(0);
        let hi = ts.last().copied().unwrap_or(lo);
        assert!(hi - lo <= 1, "lifting a non-consecutive formula");
        self.promote_vars(ax)?;
        let l = untime_term(self.store, ax, lo)?;
        if self.k == 1 {
            if self.sys.add_init(l) {
                self.lemmas.push((l, Placement::Init, true, l));
            }
        } else if lo == hi {
            let lp = self.sys.prime(self.store, l)?;
            if self.sys.add_trans(l) {
                self.lemmas.push((l, Placement::Trans1, false, l));
            }
            if self.sys.add_trans(lp) {
                self.lemmas.push((lp, Placement::Trans1, false, l));
            }
            if self.sys.add_init(l) {
                self.lemmas.push((l, Placement::Init, true, l));
            }
        } else if self.sys.add_trans(l) {
            self.lemmas.push((l, Placement::Trans2, false, l));
        }
        Ok(())
    }

    fn resolve_nonconsecutive(&mut self, ax: &AxiomInstance) -> Result<(), RefineError> {
        let (Classification::NonConsecutive { index, step: n_i }, Some(entry)) = (ax.classification, ax.inst_index)
        else {
            return self.lift(ax.formula);
        };
        if !self.resolvable(&entry) {
            return Ok(());
        }
        let t = entry.untimed;
        let st = &*self.store;
        let witnesses: Vec<VarId> = st
            .free_vars(t)
            .into_iter()
            .filter(|&v| st.var(v).kind == VarKind::Witness)
            .collect();
        for v in witnesses {
            if !self.sys.is_state(v) {
                self.sys.add_state_var(self.store, v);
                self.sys.aux_log.push(AuxRecord::Promoted { var: v, frozen: false });
            }
        }
        let delay = (self.k - 1) - n_i;
        let fresh = self.sys.prophecy_for(t, delay).is_none();
        let (prop, p) = self.sys.prophecize(self.store, self.prop, t, delay)?;
        self.prop = prop;
        if fresh {
            self.const_at(p)?;
        }
        let mut others = self.store.times_of(ax.formula);
        others.remove(&n_i);
        let n_min = others.first().copied().unwrap_or(n_i);
        let pt = self.store.timed_term(p, n_min);
        let axc = self.store.substitute(ax.formula, &HashMap::from([(index, pt)]))?;
        if self.span(axc) <= 1 {
            self.lift(axc)
        } else {
            debug!("substituted instance still spans more than one step; skipped");
            Ok(())
        }
    }

    /// Lifts the constant-array instances at a new prophecy variable. The
    /// unrolling never needs them, since the prophecy equals a syntactic
    /// index there, but initiation of an invariant over the prophecy does.
    fn const_at(&mut self, p: VarId) -> Result<(), RefineError> {
        let psort = self.store.var(p).sort;
        let consts: Vec<(VarId, TermId)> = self.map.constarr.iter().map(|(&c, &(e, _))| (c, e)).collect();
        for (c, elem) in consts {
            let Some(ops) = self.map.ops_for_abs(self.store.var(c).sort).cloned() else { continue };
            if ops.index != psort {
                continue;
            }
            let ct = self.store.timed_term(c, 0);
            let pt = self.store.timed_term(p, 0);
            let r = self.store.apply(ops.read, vec![ct, pt])?;
            let f = self.store.eq(r, elem)?;
            self.lift(f)?;
        }
        Ok(())
    }

    /// Instances sharing the resolvable index term and step with the most
    /// violations; later steps and syntactic indices win ties.
    fn best_group(&self, nca: &[AxiomInstance]) -> Vec<usize> {
        let mut groups: BTreeMap<(TermId, u32), Vec<usize>> = BTreeMap::new();
        for (i, ax) in nca.iter().enumerate() {
            let (Classification::NonConsecutive { step, .. }, Some(e)) = (ax.classification, ax.inst_index) else {
                continue;
            };
            if self.resolvable(&e) {
                groups.entry((e.untimed, step)).or_default().push(i);
            }
        }
        let rank = |i: usize| match nca[i].inst_index.map(|e| e.provenance) {
            Some(Provenance::ReadIdx) => 3,
            Some(Provenance::WriteIdx) => 2,
            Some(Provenance::Witness) => 1,
            _ => 0,
        };
        groups
            .into_iter()
            .max_by_key(|((_, step), is)| (is.len(), *step, rank(is[0])))
            .map(|(_, is)| is)
            .unwrap_or_else(|| (0..nca.len()).collect())
    }

    fn resolvable(&self, e: &IndexEntry) -> bool {
        !e.frozen
            && !self.store.contains_var(e.untimed, |_, info| {
                matches!(info.kind, VarKind::Next { .. } | VarKind::Lambda | VarKind::Prophecy { .. })
            })
    }

    fn span(&self, f: TermId) -> u32 {
        let ts = self.store.times_of(f);
        match (ts.first(), ts.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }
}

/// A subset of `cands` that, conjoined with `u`, is still unsatisfiable, or
/// `None` when the conjunction of all of them is satisfiable or the solver
/// gives up. For non-consecutive candidates, instances instantiated at
/// earlier steps are dropped first.
pub fn reduce_axioms(
    session: &mut Session,
    store: &TermStore,
    u: &Unrolling,
    cands: &[AxiomInstance],
    nonconsecutive: bool,
) -> Result<Option<Vec<usize>>, RefineError> {
    let all: Vec<usize> = (0..cands.len()).collect();
    if cands.len() <= 1 {
        return Ok(Some(all));
    }
    let query = |session: &mut Session, keep: &[usize], want: Want| -> Result<CheckResult, SolverError> {
        let mut asserts = u.named();
        for &i in keep {
            asserts.push((Some(format!("ax.{i}")), cands[i].formula));
        }
        session.check(store, &asserts, want)
    };
    let mut base = all.clone();
    let core = match query(session, &all, Want::Core) {
        Ok(CheckResult::Unsat(core)) => core,
        Ok(_) | Err(SolverError::Timeout) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut core = core;
    if nonconsecutive {
        // Drop whole steps of non-consecutive instances, earliest first,
        // before the core can settle on early instantiations.
        let steps: BTreeSet<u32> = cands
            .iter()
            .filter_map(|c| match c.classification {
                Classification::NonConsecutive { step, .. } => Some(step),
                Classification::Consecutive => None,
            })
            .collect();
        for s in steps {
            let trial: Vec<usize> = base
                .iter()
                .copied()
                .filter(|&i| !matches!(cands[i].classification, Classification::NonConsecutive { step, .. } if step == s))
                .collect();
            if trial.len() == base.len() {
                continue;
            }
            match query(session, &trial, Want::Core) {
                Ok(CheckResult::Unsat(c)) => {
                    base = trial;
                    core = c;
                }
                Ok(_) | Err(SolverError::Timeout) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    let mut keep: Vec<usize> = core
        .iter()
        .filter_map(|n| n.strip_prefix("ax.").and_then(|i| i.parse().ok()))
        .collect();
    keep.sort_unstable();
    if keep.is_empty() {
        return Ok(Some(vec![0]));
    }
    if !nonconsecutive {
        return Ok(Some(keep));
    }
    let step_of = |i: usize| match cands[i].classification {
        Classification::NonConsecutive { step, .. } => step,
        Classification::Consecutive => u32::MAX,
    };
    let prov_rank = |e: Option<IndexEntry>| -> u8 {
        match e.map(|e| e.provenance) {
            Some(Provenance::Witness) | Some(Provenance::Lambda) => 0,
            _ => 1,
        }
    };
    let from_core = |core: &[String]| -> Vec<usize> {
        let mut k: Vec<usize> = core
            .iter()
            .filter_map(|n| n.strip_prefix("ax.").and_then(|i| i.parse().ok()))
            .collect();
        k.sort_unstable();
        k
    };
    // Whole groups of instances sharing an index term and step first, so
    // that the surviving instances need few prophecy variables.
    let mut groups: BTreeMap<(u32, u8, TermId), Vec<usize>> = BTreeMap::new();
    for &i in &keep {
        if let (Classification::NonConsecutive { step, .. }, Some(e)) = (cands[i].classification, cands[i].inst_index) {
            groups
                .entry((step, prov_rank(Some(e)), e.untimed))
                .or_default()
                .push(i);
        }
    }
    const MAX_DELETION_QUERIES: usize = 48;
    let mut queries = 0;
    for g in groups.values() {
        if queries >= MAX_DELETION_QUERIES {
            break;
        }
        if !g.iter().any(|i| keep.contains(i)) {
            continue;
        }
        let trial: Vec<usize> = keep.iter().copied().filter(|j| !g.contains(j)).collect();
        if trial.is_empty() {
            continue;
        }
        queries += 1;
        match query(session, &trial, Want::Core) {
            Ok(CheckResult::Unsat(core)) => {
                let shrunk = from_core(&core);
                keep = if shrunk.is_empty() { trial } else { shrunk };
            }
            Ok(_) | Err(SolverError::Timeout) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let mut order: Vec<usize> = keep.iter().copied().filter(|&i| !cands[i].is_consecutive()).collect();
    order.sort_by_key(|&i| (step_of(i), prov_rank(cands[i].inst_index), i));
    for &i in order.iter().take(MAX_DELETION_QUERIES.saturating_sub(queries)) {
        if keep.len() <= 1 || !keep.contains(&i) {
            continue;
        }
        let trial: Vec<usize> = keep.iter().copied().filter(|&j| j != i).collect();
        match query(session, &trial, Want::Nothing) {
            Ok(CheckResult::Unsat(_)) => keep = trial,
            Ok(_) | Err(SolverError::Timeout) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(keep))
}
