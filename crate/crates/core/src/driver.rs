//! The abstraction-refinement loop: abstract arrays, prove, refine at the
//! refuted bound, repeat. Wrapped in a value abstraction that replaces large
//! integer literals by frozen variables and restores them when a
//! counterexample does not replay.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use log::info;
use num_bigint::BigInt;
use serde::Serialize;
use thiserror::Error;

use crate::abstraction::{abstract_arrays, AbstractionError, AbstractionMap, Mode};
use crate::bmc::UnrollOptions;
use crate::model::Value;
use crate::prover::{self, Certificate, Engine, Proof, ProveOptions, ProveResult, ProverError};
use crate::refiner::{self, RefineError, RefineOptions, Trace};
use crate::smt::{SolverConfig, SolverError, SolverFactory};
use crate::sts::{AuxRecord, Property, StsError, TransitionSystem};
use crate::terms::{quote_symbol, Node, Op, TermError, TermId, TermStore, VarId, VarKind};

#[derive(Error, Debug)]
pub enum DriverError {
    #[error("certificate failed the independent check")]
    CertificateRejected,
    #[error("counterexample failed to replay on the concrete system")]
    TraceRejected,
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Sts(#[from] StsError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Prover(ProverError),
    #[error(transparent)]
    Refine(RefineError),
}

impl From<SolverError> for DriverError {
    fn from(e: SolverError) -> Self {
        DriverError::Solver(e)
    }
}

impl From<ProverError> for DriverError {
    fn from(e: ProverError) -> Self {
        match e {
            ProverError::Solver(s) => DriverError::Solver(s),
            e => DriverError::Prover(e),
        }
    }
}

impl From<RefineError> for DriverError {
    fn from(e: RefineError) -> Self {
        match e {
            RefineError::Solver(s) => DriverError::Solver(s),
            e => DriverError::Refine(e),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub mode: Mode,
    pub engine: Engine,
    pub max_k: u32,
    /// Refinement rounds across all bounds.
    pub max_refinements: u32,
    /// Solver iterations within one refinement call.
    pub max_refine_iters: u32,
    /// Literals with a larger magnitude are abstracted; `None` disables the
    /// value abstraction.
    pub value_threshold: Option<u64>,
    pub assume_prestate: bool,
    pub prophecy_reduction: bool,
    pub unsat_core_reduction: bool,
    pub axiom_reduction: bool,
    pub solver: Option<String>,
    pub timeout: Option<Duration>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: Mode::Weak,
            engine: Engine::KInduction,
            max_k: 25,
            max_refinements: 50,
            max_refine_iters: 200,
            value_threshold: Some(10),
            assume_prestate: true,
            prophecy_reduction: true,
            unsat_core_reduction: true,
            axiom_reduction: true,
            solver: None,
            timeout: None,
        }
    }
}

/// A proof over the concrete system extended with the auxiliary variables
/// and lemmas of the final abstraction.
#[derive(Clone, Debug)]
pub struct SafeCertificate {
    pub system: TransitionSystem,
    /// The (possibly prophecy-weakened) property the proof establishes.
    pub property: TermId,
    pub proof: Proof,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Safe(Box<SafeCertificate>),
    /// Counterexample of path length `bound`.
    Unsafe { trace: Trace, bound: u32 },
    Unknown(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Safe(_) => "safe",
            Verdict::Unsafe { .. } => "unsafe",
            Verdict::Unknown(_) => "unknown",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Safe(_) => 0,
            Verdict::Unsafe { .. } => 1,
            Verdict::Unknown(_) => 2,
        }
    }
}

/// Work done at one refuted bound.
#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct BoundRecord {
    pub k: u32,
    pub rounds: u32,
    pub n_prophecy_added: usize,
    pub n_history_added: usize,
    pub n_lemmas_added: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Stats {
    pub verdict: String,
    /// Largest refuted bound, or the counterexample length.
    pub bound: Option<u32>,
    pub n_prophecy: usize,
    pub n_history: usize,
    pub n_lemmas: usize,
    pub n_refine_rounds: u32,
    pub n_solver_queries: u64,
    pub time_ms: u64,
    pub value_abstraction_restarts: u32,
    pub bounds: Vec<BoundRecord>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub verdict: Verdict,
    pub stats: Stats,
    /// The final abstract system, including auxiliary variables and lemmas.
    pub system: TransitionSystem,
}

/// Large literals replaced by frozen variables.
#[derive(Clone, Debug, Default)]
struct ValueAbstraction {
    consts: BTreeMap<VarId, BigInt>,
}

impl ValueAbstraction {
    fn apply(
        store: &mut TermStore,
        sys: &TransitionSystem,
        prop: Property,
        threshold: u64,
    ) -> Result<(TransitionSystem, Property, Self), DriverError> {
        let bound = BigInt::from(threshold);
        let mut lits = BTreeSet::new();
        let roots: Vec<TermId> = sys
            .init
            .iter()
            .chain(&sys.trans)
            .copied()
            .chain([prop.formula, prop.original])
            .collect();
        for &t in &roots {
            collect_literals(store, t, &bound, &mut lits);
        }
        let mut va = ValueAbstraction::default();
        if lits.is_empty() {
            return Ok((sys.clone(), prop, va));
        }
        let mut out = sys.clone();
        let int = store.int_sort();
        let mut repl: HashMap<BigInt, TermId> = HashMap::new();
        let mut ordered = Vec::new();
        for c in &lits {
            let tag = c.to_string().replace('-', "m");
            let v = store.fresh_var(&format!("__const_{tag}"), int, VarKind::State);
            out.add_frozen_var(store, v)?;
            va.consts.insert(v, c.clone());
            let vt = store.var_term(v);
            repl.insert(c.clone(), vt);
            ordered.push(vt);
        }
        let mut facts = Vec::new();
        for w in ordered.windows(2) {
            facts.push(store.lt(w[0], w[1])?);
        }
        for (c, &vt) in lits.iter().zip(&ordered) {
            let f = if *c > bound {
                let b = store.int(bound.clone());
                store.lt(b, vt)?
            } else {
                let b = store.int(-bound.clone());
                store.lt(vt, b)?
            };
            facts.push(f);
        }
        let rewrite = |store: &mut TermStore, t| replace_literals(store, t, &bound, &repl);
        out.init = sys.init.iter().map(|&t| rewrite(store, t)).collect::<Result<_, _>>()?;
        let frozen_links: Vec<TermId> = out.trans[sys.trans.len()..].to_vec();
        out.trans = sys.trans.iter().map(|&t| rewrite(store, t)).collect::<Result<_, _>>()?;
        out.trans.extend(frozen_links);
        for f in facts {
            out.add_init(f);
            out.add_trans(f);
        }
        let prop = Property {
            formula: rewrite(store, prop.formula)?,
            original: rewrite(store, prop.original)?,
        };
        Ok((out, prop, va))
    }

    /// Substitution of the literals back for the constant variables and
    /// their next-state copies.
    fn restore_map(&self, store: &mut TermStore) -> HashMap<VarId, TermId> {
        let mut m = HashMap::new();
        for (&v, c) in &self.consts {
            let lit = store.int(c.clone());
            m.insert(v, lit);
            let n = store.next_of(v);
            m.insert(n, lit);
        }
        m
    }
}

fn collect_literals(store: &TermStore, t: TermId, bound: &BigInt, out: &mut BTreeSet<BigInt>) {
    let mut stack = vec![t];
    let mut seen = BTreeSet::new();
    while let Some(u) = stack.pop() {
        if !seen.insert(u) {
            continue;
        }
        match store.node(u) {
            Node::Int(c) if c.magnitude() > bound.magnitude() => {
                out.insert(c.clone());
            }
            Node::App(Op::ConstArray(_), _) => {}
            Node::App(Op::Mul, cs) => stack.extend(&cs[1..]),
            Node::App(_, cs) => stack.extend(cs),
            _ => {}
        }
    }
}

fn replace_literals(
    store: &mut TermStore,
    t: TermId,
    bound: &BigInt,
    repl: &HashMap<BigInt, TermId>,
) -> Result<TermId, TermError> {
    match store.node(t).clone() {
        Node::Int(c) if c.magnitude() > bound.magnitude() => Ok(repl[&c]),
        Node::App(Op::ConstArray(_), _) => Ok(t),
        Node::App(op, cs) => {
            let mut ncs = Vec::with_capacity(cs.len());
            for (i, &c) in cs.iter().enumerate() {
                if op == Op::Mul && i == 0 {
                    ncs.push(c);
                } else {
                    ncs.push(replace_literals(store, c, bound, repl)?);
                }
            }
            if ncs == cs {
                Ok(t)
            } else {
                store.mk(op, ncs)
            }
        }
        _ => Ok(t),
    }
}

enum Inner {
    Safe {
        sys: TransitionSystem,
        prop: Property,
        map: Box<AbstractionMap>,
        proof: Proof,
    },
    Cex {
        sys: TransitionSystem,
        trace: Trace,
        k: u32,
    },
    Unknown {
        sys: TransitionSystem,
        reason: String,
    },
}

struct Run<'a> {
    cfg: &'a EngineConfig,
    factory: SolverFactory,
    stats: Stats,
}

fn is_timeout(e: &DriverError) -> bool {
    matches!(e, DriverError::Solver(SolverError::Timeout))
}

impl Run<'_> {
    fn prove_options(&self) -> ProveOptions {
        ProveOptions {
            engine: self.cfg.engine.clone(),
            max_k: self.cfg.max_k,
            assume_prestate: self.cfg.assume_prestate,
            engine_timeout: self.factory.deadline.map(|d| d.saturating_duration_since(Instant::now())),
        }
    }

    fn refine_options(&self) -> RefineOptions {
        RefineOptions {
            unroll: UnrollOptions {
                assume_prestate: self.cfg.assume_prestate,
            },
            prophecy_reduction: self.cfg.prophecy_reduction,
            unsat_core_reduction: self.cfg.unsat_core_reduction,
            axiom_reduction: self.cfg.axiom_reduction,
            max_iters: self.cfg.max_refine_iters,
        }
    }

    fn cegar(&mut self, store: &mut TermStore, sys: &TransitionSystem, prop: Property) -> Result<Inner, DriverError> {
        let (mut asys, mut aprop, mut map) = abstract_arrays(store, sys, prop, self.cfg.mode)?;
        let popts = self.prove_options();
        let ropts = self.refine_options();
        loop {
            if self.factory.past_deadline() {
                return Ok(Inner::Unknown {
                    sys: asys,
                    reason: "time budget exhausted".into(),
                });
            }
            if log::log_enabled!(log::Level::Trace) {
                log::trace!("abstract system:\n{}", crate::vmt::emit_vmt(store, &asys, &[aprop]));
            }
            let res = match prover::prove(&self.factory, store, &asys, aprop, &popts) {
                Ok(r) => r,
                Err(ProverError::Solver(SolverError::Timeout)) => {
                    return Ok(Inner::Unknown {
                        sys: asys,
                        reason: "time budget exhausted".into(),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            let k = match res {
                ProveResult::Proven(Some(proof)) => {
                    return Ok(Inner::Safe {
                        sys: asys,
                        prop: aprop,
                        map: Box::new(map),
                        proof,
                    })
                }
                ProveResult::Proven(None) => {
                    return Ok(Inner::Unknown {
                        sys: asys,
                        reason: "engine reported safe without a checkable invariant".into(),
                    })
                }
                ProveResult::Unknown(reason) => return Ok(Inner::Unknown { sys: asys, reason }),
                ProveResult::Falsified { k, .. } => k,
            };
            if self.stats.n_refine_rounds >= self.cfg.max_refinements {
                return Ok(Inner::Unknown {
                    sys: asys,
                    reason: format!("refinement budget of {} rounds exhausted", self.cfg.max_refinements),
                });
            }
            info!("abstract counterexample at bound {k}, refining");
            let out = match refiner::refine_arrays(&self.factory, store, &asys, aprop, &mut map, k, ropts) {
                Ok(o) => o,
                Err(RefineError::Solver(SolverError::Timeout)) => {
                    return Ok(Inner::Unknown {
                        sys: asys,
                        reason: "time budget exhausted".into(),
                    })
                }
                Err(
                    e @ (RefineError::RefinementStuck { .. }
                    | RefineError::ResourceOut { .. }
                    | RefineError::SolverUnknown { .. }),
                ) => {
                    return Ok(Inner::Unknown {
                        sys: asys,
                        reason: e.to_string(),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            if !out.refined {
                let trace = out.trace.unwrap_or_default();
                return Ok(Inner::Cex { sys: out.system, trace, k });
            }
            if out.added_aux.is_empty() && out.added_lemmas.is_empty() {
                return Ok(Inner::Unknown {
                    sys: asys,
                    reason: format!("refinement at bound {k} made no progress"),
                });
            }
            self.stats.n_refine_rounds += 1;
            self.record(k, &out.added_aux, out.added_lemmas.len());
            asys = out.system;
            aprop = out.property;
        }
    }

    fn record(&mut self, k: u32, aux: &[AuxRecord], lemmas: usize) {
        let np = aux.iter().filter(|r| matches!(r, AuxRecord::Prophecy { .. })).count();
        let nh = aux.iter().filter(|r| matches!(r, AuxRecord::History { .. })).count();
        self.stats.n_lemmas += lemmas;
        self.stats.bound = Some(self.stats.bound.map_or(k, |b| b.max(k)));
        match self.stats.bounds.last_mut() {
            Some(b) if b.k == k => {
                b.rounds += 1;
                b.n_prophecy_added += np;
                b.n_history_added += nh;
                b.n_lemmas_added += lemmas;
            }
            _ => self.stats.bounds.push(BoundRecord {
                k,
                rounds: 1,
                n_prophecy_added: np,
                n_history_added: nh,
                n_lemmas_added: lemmas,
            }),
        }
    }
}

/// Concretizes the final abstract system and proof, restoring abstracted
/// literals.
fn concrete_certificate(
    store: &mut TermStore,
    asys: &TransitionSystem,
    aprop: Property,
    map: &AbstractionMap,
    va: &ValueAbstraction,
    proof: &Proof,
) -> Result<SafeCertificate, DriverError> {
    let restore = va.restore_map(store);
    let conc = |store: &mut TermStore, t: TermId| -> Result<TermId, DriverError> {
        let c = map.concretize(store, t)?;
        Ok(store.substitute_vars(c, &restore)?)
    };
    let mut sys = TransitionSystem::new();
    let map_var = |store: &mut TermStore, v: VarId| -> Result<Option<VarId>, DriverError> {
        if va.consts.contains_key(&v) || map.constarr.contains_key(&v) {
            return Ok(None);
        }
        let vt = store.var_term(v);
        let c = map.concretize(store, vt)?;
        Ok(store.as_var(c))
    };
    for &v in &asys.state_vars {
        if let Some(c) = map_var(store, v)? {
            sys.add_state_var(store, c);
            if asys.frozen.contains(&v) {
                sys.frozen.insert(c);
            }
        }
    }
    for &v in &asys.input_vars {
        if let Some(c) = map_var(store, v)? {
            sys.add_input_var(c);
        }
    }
    for &t in &asys.init {
        let c = conc(store, t)?;
        if c != store.tru() {
            sys.add_init(c);
        }
    }
    for &t in &asys.trans {
        let c = conc(store, t)?;
        if c != store.tru() {
            sys.add_trans(c);
        }
    }
    sys.aux_log = asys.aux_log.clone();
    let property = conc(store, aprop.formula)?;
    let cert = match proof.cert {
        Certificate::Inductive { inv } => Certificate::Inductive { inv: conc(store, inv)? },
        Certificate::KInductive { depth, strengthening } => Certificate::KInductive {
            depth,
            strengthening: conc(store, strengthening)?,
        },
    };
    let assumption = proof.assumption.map(|a| conc(store, a)).transpose()?;
    Ok(SafeCertificate {
        system: sys,
        property,
        proof: Proof { cert, assumption },
    })
}

/// Runs the full loop on `sys` and `prop`.
pub fn run(
    cfg: &EngineConfig,
    store: &mut TermStore,
    sys: &TransitionSystem,
    prop: Property,
) -> Result<RunResult, DriverError> {
    let start = Instant::now();
    let mut factory = SolverFactory::new(SolverConfig::resolve(cfg.solver.as_deref()));
    factory.deadline = cfg.timeout.map(|t| start + t);
    // Gates run to completion regardless of the budget.
    let mut gate = factory.clone();
    gate.deadline = None;
    let mut r = Run {
        cfg,
        factory,
        stats: Stats::default(),
    };
    let mut threshold = cfg.value_threshold;
    let (verdict, system) = loop {
        let (vsys, vprop, va) = match threshold {
            Some(t) => ValueAbstraction::apply(store, sys, prop, t)?,
            None => (sys.clone(), prop, ValueAbstraction::default()),
        };
        let inner = match r.cegar(store, &vsys, vprop) {
            Ok(i) => i,
            Err(e) if is_timeout(&e) => Inner::Unknown {
                sys: vsys,
                reason: "time budget exhausted".into(),
            },
            Err(e) => return Err(e),
        };
        match inner {
            Inner::Safe {
                sys: asys,
                prop: aprop,
                map,
                proof,
            } => {
                let cert = concrete_certificate(store, &asys, aprop, &map, &va, &proof)?;
                if !prover::check_certificate(&gate, store, &cert.system, cert.property, &cert.proof)? {
                    return Err(DriverError::CertificateRejected);
                }
                break (Verdict::Safe(Box::new(cert)), asys);
            }
            Inner::Cex { sys: asys, trace, k } => {
                if !trace.is_empty() && prover::replay_trace(&gate, store, sys, prop.original, &trace)? {
                    break (Verdict::Unsafe { trace, bound: k }, asys);
                }
                if threshold.is_some() && !va.consts.is_empty() {
                    info!("counterexample does not replay with concrete literals, restarting without value abstraction");
                    r.stats.value_abstraction_restarts += 1;
                    threshold = None;
                    continue;
                }
                return Err(DriverError::TraceRejected);
            }
            Inner::Unknown { sys: asys, reason } => break (Verdict::Unknown(reason), asys),
        }
    };
    r.stats.verdict = verdict.name().into();
    if let Verdict::Unsafe { bound, .. } = verdict {
        r.stats.bound = Some(bound);
    }
    r.stats.n_prophecy = system.prophecy_vars().count();
    r.stats.n_history = system.history_vars().count();
    r.stats.n_solver_queries = r.factory.query_count();
    r.stats.time_ms = start.elapsed().as_millis() as u64;
    Ok(RunResult {
        verdict,
        stats: r.stats,
        system,
    })
}

fn value_text(v: &Value) -> String {
    match v {
        Value::Int(i) if i.sign() == num_bigint::Sign::Minus => format!("(- {})", i.magnitude()),
        v => v.to_string(),
    }
}

/// SMT-LIB text for a Safe or Unsafe verdict; `None` for Unknown.
pub fn emit_witness(store: &TermStore, verdict: &Verdict) -> Option<String> {
    let name = |v: VarId| quote_symbol(&store.var(v).name);
    let mut out = String::new();
    match verdict {
        Verdict::Safe(cert) => {
            let sys = &cert.system;
            for r in &sys.aux_log {
                let _ = match r {
                    AuxRecord::History { var, target, depth } => {
                        writeln!(out, "; history {} = {} delayed {depth}", name(*var), store.display(*target))
                    }
                    AuxRecord::Prophecy { var, target, delay } => {
                        writeln!(out, "; prophecy {} for {} delayed {delay}", name(*var), store.display(*target))
                    }
                    AuxRecord::Promoted { var, frozen } => {
                        writeln!(out, "; promoted {}{}", name(*var), if *frozen { " (frozen)" } else { "" })
                    }
                };
            }
            for &v in sys.state_vars.iter().chain(&sys.input_vars) {
                let _ = writeln!(out, "(declare-fun {} () {})", name(v), store.sort_name(store.var(v).sort));
            }
            let smt = |t: TermId| {
                let mut s = String::new();
                store.write_smt(t, &name, &mut s);
                s
            };
            match cert.proof.cert {
                Certificate::Inductive { inv } => {
                    let _ = writeln!(out, "(define-fun invariant () Bool {})", smt(inv));
                }
                Certificate::KInductive { depth, strengthening } => {
                    let _ = writeln!(out, "; property is {depth}-inductive relative to the invariant");
                    let _ = writeln!(out, "(define-fun invariant () Bool {})", smt(strengthening));
                }
            }
            let _ = writeln!(out, "(define-fun property () Bool {})", smt(cert.property));
            if let Some(a) = cert.proof.assumption {
                let _ = writeln!(out, "(define-fun assumption () Bool {})", smt(a));
            }
        }
        Verdict::Unsafe { trace, .. } => {
            for (i, state) in trace.iter().enumerate() {
                let _ = write!(out, "(state {i}");
                for (&v, val) in state {
                    if store.var(v).name.starts_with("__") {
                        continue;
                    }
                    let _ = write!(out, " ({} {})", name(v), value_text(val));
                }
                out.push_str(")\n");
            }
        }
        Verdict::Unknown(_) => return None,
    }
    Some(out)
}
