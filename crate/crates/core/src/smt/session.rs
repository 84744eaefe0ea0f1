//! SMT-LIB 2 client for an external solver process.

use std::cell::Cell;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::rc::Rc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{CexModel, Value};
use crate::smt::sexp::{self, paren_balance, Sexp, SexpKind};
use crate::terms::{quote_symbol, FunId, Node, Op, Sort, SortId, TermId, TermStore, VarId};

#[derive(Error, Debug)]
pub enum SolverError {
    #[error("cannot start solver `{path}`: {msg}")]
    Spawn { path: String, msg: String },
    #[error("solver process died: {stderr}")]
    SolverCrashed { stderr: String },
    #[error("unexpected solver response to `{command}`: {response}")]
    ProtocolError { command: String, response: String },
    #[error("solver query timed out")]
    Timeout,
    #[error("term mentions `{0}` which was never declared in this session")]
    Undeclared(String),
}

/// How to start the solver.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub path: PathBuf,
    pub args: Vec<String>,
}

impl SolverConfig {
    /// `path`, else `$PROPHIC_SOLVER`, else `z3` on the search path.
    pub fn resolve(path: Option<&str>) -> Self {
        let path = path
            .map(str::to_string)
            .or_else(|| std::env::var("PROPHIC_SOLVER").ok())
            .unwrap_or_else(|| "z3".to_string());
        let base = std::path::Path::new(&path)
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let args = if base.contains("z3") {
            vec!["-in".into(), "-smt2".into()]
        } else if base.contains("cvc5") {
            vec!["--incremental".into(), "--lang=smt2".into()]
        } else {
            Vec::new()
        };
        SolverConfig {
            path: path.into(),
            args,
        }
    }
}

/// Opens sessions and counts queries across all of them.
#[derive(Clone, Debug)]
pub struct SolverFactory {
    pub config: SolverConfig,
    queries: Rc<Cell<u64>>,
    pub query_timeout: Option<Duration>,
    pub deadline: Option<Instant>,
}

impl SolverFactory {
    pub fn new(config: SolverConfig) -> Self {
        SolverFactory {
            config,
            queries: Rc::new(Cell::new(0)),
            query_timeout: None,
            deadline: None,
        }
    }

    pub fn open(&self, logic: &str) -> Result<Session, SolverError> {
        Session::start(self, logic)
    }

    pub fn query_count(&self) -> u64 {
        self.queries.get()
    }

    pub fn past_deadline(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Want {
    Model,
    Core,
    Nothing,
}

#[derive(Clone, Debug)]
pub enum CheckResult {
    Sat(CexModel),
    /// Names of the assertions in the unsat core (empty unless requested).
    Unsat(Vec<String>),
    Unknown(String),
}

impl CheckResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, CheckResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, CheckResult::Unsat(_))
    }
}

pub struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    var_names: HashMap<VarId, String>,
    used_names: HashSet<String>,
    declared_funs: HashSet<FunId>,
    declared_sorts: HashSet<SortId>,
    in_scope: bool,
    core_names: HashMap<String, String>,
    queries: Rc<Cell<u64>>,
    query_timeout: Option<Duration>,
    deadline: Option<Instant>,
    current_timeout_ms: Option<u64>,
    log: Option<std::fs::File>,
    last_assertions: Vec<TermId>,
}

impl Session {
    fn start(factory: &SolverFactory, logic: &str) -> Result<Self, SolverError> {
        let cfg = &factory.config;
        let mut child = Command::new(&cfg.path)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SolverError::Spawn {
                path: cfg.path.display().to_string(),
                msg: e.to_string(),
            })?;
        let stdin = child.stdin.take().unwrap();
        let stdout = BufReader::new(child.stdout.take().unwrap());
        let log = std::env::var("PROPHIC_SMT_LOG").ok().and_then(|p| {
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .ok()
        });
        let mut s = Session {
            child,
            stdin,
            stdout,
            var_names: HashMap::new(),
            used_names: HashSet::new(),
            declared_funs: HashSet::new(),
            declared_sorts: HashSet::new(),
            in_scope: false,
            core_names: HashMap::new(),
            queries: factory.queries.clone(),
            query_timeout: factory.query_timeout,
            deadline: factory.deadline,
            current_timeout_ms: None,
            log,
            last_assertions: Vec::new(),
        };
        s.send_raw("(set-option :print-success true)")?;
        s.expect_success("(set-option :print-success true)")?;
        s.command("(set-option :produce-models true)")?;
        s.command("(set-option :produce-unsat-cores true)")?;
        s.command(&format!("(set-logic {logic})"))?;
        Ok(s)
    }

    fn send_raw(&mut self, text: &str) -> Result<(), SolverError> {
        if let Some(log) = self.log.as_mut() {
            let _ = writeln!(log, "{text}");
        }
        if writeln!(self.stdin, "{text}").and_then(|_| self.stdin.flush()).is_err() {
            return Err(self.crashed());
        }
        Ok(())
    }

    fn crashed(&mut self) -> SolverError {
        let _ = self.child.kill();
        let mut stderr = String::new();
        if let Some(mut e) = self.child.stderr.take() {
            let _ = e.read_to_string(&mut stderr);
        }
        SolverError::SolverCrashed { stderr }
    }

    fn read_response(&mut self) -> Result<String, SolverError> {
        let mut acc = String::new();
        loop {
            let mut line = String::new();
            match self.stdout.read_line(&mut line) {
                Ok(0) | Err(_) => return Err(self.crashed()),
                Ok(_) => {}
            }
            acc.push_str(&line);
            if !acc.trim().is_empty() && paren_balance(&acc) <= 0 {
                if let Some(log) = self.log.as_mut() {
                    let _ = writeln!(log, "; => {}", acc.trim());
                }
                return Ok(acc.trim().to_string());
            }
        }
    }

    fn expect_success(&mut self, command: &str) -> Result<(), SolverError> {
        let resp = self.read_response()?;
        if resp == "success" {
            Ok(())
        } else {
            Err(SolverError::ProtocolError {
                command: command.to_string(),
                response: resp,
            })
        }
    }

    fn command(&mut self, text: &str) -> Result<(), SolverError> {
        self.send_raw(text)?;
        self.expect_success(text)
    }

    fn query(&mut self, text: &str) -> Result<String, SolverError> {
        self.send_raw(text)?;
        let resp = self.read_response()?;
        if resp.starts_with("(error") {
            return Err(SolverError::ProtocolError {
                command: text.to_string(),
                response: resp,
            });
        }
        Ok(resp)
    }

    // ----------------------------------------------------------- naming

    /// The symbol emitted for `v` (timed `x@n` becomes `x.n`).
    pub fn var_symbol(&mut self, store: &TermStore, v: VarId) -> String {
        if let Some(n) = self.var_names.get(&v) {
            return n.clone();
        }
        let base = store.var(v).name.replace('@', ".");
        let mut name = base.clone();
        let mut i = 1;
        while self.used_names.contains(&name) || store.fun_by_name(&name).is_some() {
            name = format!("{base}_{i}");
            i += 1;
        }
        self.used_names.insert(name.clone());
        let sym = quote_symbol(&name);
        self.var_names.insert(v, sym.clone());
        sym
    }

    pub fn is_declared(&self, v: VarId) -> bool {
        self.var_names.contains_key(&v)
    }

    pub fn emit(&mut self, store: &TermStore, t: TermId) -> String {
        for v in store.free_vars(t) {
            self.var_symbol(store, v);
        }
        let names = &self.var_names;
        let mut out = String::new();
        store.write_smt(t, &|v| names[&v].clone(), &mut out);
        out
    }

    fn declare_sort(&mut self, store: &TermStore, s: SortId) -> Result<(), SolverError> {
        match store.sort(s).clone() {
            Sort::Uninterpreted(name) => {
                if self.declared_sorts.insert(s) {
                    self.command(&format!("(declare-sort {} 0)", quote_symbol(&name)))?;
                }
            }
            Sort::Array { index, element } => {
                self.declare_sort(store, index)?;
                self.declare_sort(store, element)?;
            }
            Sort::Bool | Sort::Int => {}
        }
        Ok(())
    }

    /// Declares every symbol of `terms` not yet known. Must run outside scopes.
    fn declare_symbols(&mut self, store: &TermStore, terms: &[TermId]) -> Result<(), SolverError> {
        let mut vars = BTreeSet::new();
        let mut funs = BTreeSet::new();
        for &t in terms {
            for u in store.subterms(t) {
                match store.node(u) {
                    Node::Var(v) => {
                        vars.insert(*v);
                    }
                    Node::App(Op::Apply(f), _) => {
                        funs.insert(*f);
                    }
                    _ => {}
                }
            }
        }
        for f in funs {
            if self.declared_funs.contains(&f) {
                continue;
            }
            let decl = store.fun(f).clone();
            for &s in decl.args.iter().chain(std::iter::once(&decl.ret)) {
                self.declare_sort(store, s)?;
            }
            let args: Vec<String> = decl.args.iter().map(|&s| store.sort_name(s)).collect();
            self.command(&format!(
                "(declare-fun {} ({}) {})",
                quote_symbol(&decl.name),
                args.join(" "),
                store.sort_name(decl.ret)
            ))?;
            self.declared_funs.insert(f);
        }
        for v in vars {
            if self.var_names.contains_key(&v) {
                continue;
            }
            let sort = store.var(v).sort;
            self.declare_sort(store, sort)?;
            let sym = self.var_symbol(store, v);
            self.command(&format!("(declare-fun {} () {})", sym, store.sort_name(sort)))?;
        }
        Ok(())
    }

    fn set_timeout(&mut self) -> Result<(), SolverError> {
        let mut limit = self.query_timeout;
        if let Some(d) = self.deadline {
            let now = Instant::now();
            if now >= d {
                return Err(SolverError::Timeout);
            }
            let rem = d - now;
            limit = Some(limit.map_or(rem, |l| l.min(rem)));
        }
        let ms = limit.map(|l| l.as_millis().max(1) as u64);
        if ms != self.current_timeout_ms {
            if let Some(ms) = ms {
                let cmd = format!("(set-option :timeout {ms})");
                self.send_raw(&cmd)?;
                let resp = self.read_response()?;
                if resp != "success" && resp != "unsupported" {
                    return Err(SolverError::ProtocolError {
                        command: cmd,
                        response: resp,
                    });
                }
            }
            self.current_timeout_ms = ms;
        }
        Ok(())
    }

    // ---------------------------------------------------------- queries

    /// Checks the conjunction of `assertions` in a fresh scope. Named
    /// assertions take part in unsat cores. The scope stays open afterwards
    /// so that `get_values` refers to this query's model.
    pub fn check(
        &mut self,
        store: &TermStore,
        assertions: &[(Option<String>, TermId)],
        want: Want,
    ) -> Result<CheckResult, SolverError> {
        if self.in_scope {
            self.command("(pop 1)")?;
            self.in_scope = false;
        }
        let terms: Vec<TermId> = assertions.iter().map(|(_, t)| *t).collect();
        self.declare_symbols(store, &terms)?;
        self.set_timeout()?;
        self.command("(push 1)")?;
        self.in_scope = true;
        self.core_names.clear();
        for (i, (name, t)) in assertions.iter().enumerate() {
            let body = self.emit(store, *t);
            match name {
                Some(user) => {
                    let emitted = format!("a!{i}");
                    self.core_names.insert(emitted.clone(), user.clone());
                    self.command(&format!("(assert (! {body} :named {}))", quote_symbol(&emitted)))?;
                }
                None => self.command(&format!("(assert {body})"))?,
            }
        }
        self.last_assertions = terms;
        self.queries.set(self.queries.get() + 1);
        let resp = self.query("(check-sat)")?;
        match resp.as_str() {
            "sat" => {
                let model = if want == Want::Model {
                    self.extract_model(store)?
                } else {
                    CexModel::default()
                };
                Ok(CheckResult::Sat(model))
            }
            "unsat" => {
                let core = if want == Want::Core {
                    self.unsat_core()?
                } else {
                    Vec::new()
                };
                Ok(CheckResult::Unsat(core))
            }
            "unknown" | "timeout" => {
                let reason = self
                    .query("(get-info :reason-unknown)")
                    .unwrap_or_else(|_| "unknown".into());
                if reason.contains("timeout") || reason.contains("canceled") {
                    return Err(SolverError::Timeout);
                }
                Ok(CheckResult::Unknown(reason))
            }
            _ => Err(SolverError::ProtocolError {
                command: "(check-sat)".into(),
                response: resp,
            }),
        }
    }

    fn unsat_core(&mut self) -> Result<Vec<String>, SolverError> {
        let resp = self.query("(get-unsat-core)")?;
        let parsed = sexp::parse_one(&resp).map_err(|e| SolverError::ProtocolError {
            command: "(get-unsat-core)".into(),
            response: format!("{resp} ({e})"),
        })?;
        let mut out = Vec::new();
        for item in parsed.list().unwrap_or(&[]) {
            if let Some(sym) = item.symbol() {
                if let Some(user) = self.core_names.get(sym) {
                    out.push(user.clone());
                }
            }
        }
        Ok(out)
    }

    /// Values of `terms` in the model of the last satisfiable check.
    pub fn get_values(&mut self, store: &TermStore, terms: &[TermId]) -> Result<Vec<Value>, SolverError> {
        if terms.is_empty() {
            return Ok(Vec::new());
        }
        for &t in terms {
            for v in store.free_vars(t) {
                if !self.is_declared(v) {
                    return Err(SolverError::Undeclared(store.var(v).name.clone()));
                }
            }
        }
        let mut out = Vec::with_capacity(terms.len());
        for chunk in terms.chunks(200) {
            let body: Vec<String> = chunk.iter().map(|&t| self.emit(store, t)).collect();
            let cmd = format!("(get-value ({}))", body.join(" "));
            let resp = self.query(&cmd)?;
            let parsed = sexp::parse_one(&resp).map_err(|e| SolverError::ProtocolError {
                command: "(get-value ...)".into(),
                response: format!("{resp} ({e})"),
            })?;
            let pairs = parsed.list().unwrap_or(&[]);
            if pairs.len() != chunk.len() {
                return Err(SolverError::ProtocolError {
                    command: "(get-value ...)".into(),
                    response: resp,
                });
            }
            for p in pairs {
                let val = p.list().and_then(|l| l.get(1)).ok_or_else(|| SolverError::ProtocolError {
                    command: "(get-value ...)".into(),
                    response: p.to_string(),
                })?;
                out.push(value_of_sexp(val));
            }
        }
        Ok(out)
    }

    /// Model restricted to the variables and uninterpreted applications of
    /// the last query.
    fn extract_model(&mut self, store: &TermStore) -> Result<CexModel, SolverError> {
        let mut vars = BTreeSet::new();
        let mut apps = BTreeSet::new();
        for &t in &self.last_assertions {
            for u in store.subterms(t) {
                match store.node(u) {
                    Node::Var(v) => {
                        vars.insert(*v);
                    }
                    Node::App(Op::Apply(_), cs) => {
                        apps.insert(u);
                        apps.extend(cs.iter().copied());
                    }
                    _ => {}
                }
            }
        }
        let var_terms: Vec<TermId> = vars.iter().map(|&v| store.var_term(v)).collect();
        let app_terms: Vec<TermId> = apps.into_iter().collect();
        let var_vals = self.get_values(store, &var_terms)?;
        let app_vals = self.get_values(store, &app_terms)?;
        let mut model = CexModel::default();
        for (v, val) in vars.into_iter().zip(var_vals) {
            model.set_scalar(v, val);
        }
        let by_term: HashMap<TermId, Value> = app_terms.iter().copied().zip(app_vals).collect();
        for (&t, val) in &by_term {
            if let Node::App(Op::Apply(f), cs) = store.node(t) {
                let args: Vec<Value> = cs.iter().map(|c| by_term[c].clone()).collect();
                model.set_entry(*f, args, val.clone());
            }
        }
        Ok(model)
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "(exit)");
        let _ = self.stdin.flush();
        let deadline = Instant::now() + Duration::from_millis(200);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Converts a solver value to a [`Value`]; anything that is not a Boolean
/// or integer becomes an opaque token.
pub fn value_of_sexp(s: &Sexp) -> Value {
    match &s.kind {
        SexpKind::Symbol(b) if b == "true" => Value::Bool(true),
        SexpKind::Symbol(b) if b == "false" => Value::Bool(false),
        SexpKind::Numeral(n) => Value::Int(n.clone()),
        SexpKind::List(items) if items.len() == 2 && items[0].is_symbol("-") => {
            if let SexpKind::Numeral(n) = &items[1].kind {
                Value::Int(-n.clone())
            } else {
                Value::Opaque(s.to_string())
            }
        }
        _ => Value::Opaque(s.to_string()),
    }
}
