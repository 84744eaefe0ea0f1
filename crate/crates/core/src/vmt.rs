//! Reading and writing the VMT format: SMT-LIB 2 scripts whose `define-fun`
//! bodies carry `:next`, `:init`, `:trans` and `:invar-property` annotations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::smt::sexp::{self, Sexp, SexpKind};
use crate::sts::{Property, TransitionSystem};
use crate::terms::{quote_symbol, FunId, Node, Op, Sort, SortId, TermError, TermId, TermStore, VarId, VarKind};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum VmtError {
    #[error("parse error at {line}:{col}: {msg}")]
    ParseError { line: usize, col: usize, msg: String },
    #[error("unsupported at {line}:{col}: {msg}")]
    UnsupportedLogic { line: usize, col: usize, msg: String },
    #[error("missing section: {0}")]
    MissingSection(String),
    #[error("section given more than once: {0}")]
    DuplicateSection(String),
}

/// A parsed VMT script: the system and its properties by index.
#[derive(Clone, Debug)]
pub struct VmtProblem {
    pub system: TransitionSystem,
    pub properties: BTreeMap<u32, Property>,
}

impl VmtProblem {
    pub fn property(&self, idx: u32) -> Option<Property> {
        self.properties.get(&idx).copied()
    }
}

#[derive(Clone, Debug)]
enum Symbol {
    Var(VarId),
    Fun(FunId),
    Macro { params: Vec<(String, SortId)>, body: Sexp },
    Const(TermId),
}

#[derive(Clone, Debug)]
enum SortDef {
    Sort(SortId),
    Alias { params: Vec<String>, body: Sexp },
}

struct Parser<'a> {
    store: &'a mut TermStore,
    symbols: HashMap<String, Symbol>,
    sorts: HashMap<String, SortDef>,
    /// Resolve unknown symbols against store names (used for invariants).
    store_fallback: bool,
    declared: Vec<VarId>,
    nexts: Vec<(VarId, VarId, usize, usize)>,
    init: Option<TermId>,
    trans: Option<TermId>,
    props: BTreeMap<u32, TermId>,
    pending: Vec<(String, TermId, Sexp)>,
}

fn perr(s: &Sexp, msg: impl Into<String>) -> VmtError {
    VmtError::ParseError {
        line: s.line,
        col: s.col,
        msg: msg.into(),
    }
}

fn unsup(s: &Sexp, msg: impl Into<String>) -> VmtError {
    VmtError::UnsupportedLogic {
        line: s.line,
        col: s.col,
        msg: msg.into(),
    }
}

fn term_err(s: &Sexp, e: TermError) -> VmtError {
    match e {
        TermError::NonLinear => unsup(s, "nonlinear multiplication"),
        e => perr(s, e.to_string()),
    }
}

fn term_err_at(line: usize, col: usize, e: TermError) -> VmtError {
    VmtError::ParseError {
        line,
        col,
        msg: e.to_string(),
    }
}

type Scope = Vec<HashMap<String, TermId>>;

impl<'a> Parser<'a> {
    fn new(store: &'a mut TermStore) -> Self {
        Parser {
            store,
            symbols: HashMap::new(),
            sorts: HashMap::new(),
            store_fallback: false,
            declared: Vec::new(),
            nexts: Vec::new(),
            init: None,
            trans: None,
            props: BTreeMap::new(),
            pending: Vec::new(),
        }
    }

    fn sort(&mut self, s: &Sexp, params: &HashMap<String, SortId>) -> Result<SortId, VmtError> {
        match &s.kind {
            SexpKind::Symbol(name) => {
                if let Some(&p) = params.get(name) {
                    return Ok(p);
                }
                match name.as_str() {
                    "Int" => Ok(self.store.int_sort()),
                    "Bool" => Ok(self.store.bool_sort()),
                    "Real" => Err(unsup(s, "real arithmetic")),
                    _ => match self.sorts.get(name).cloned() {
                        Some(SortDef::Sort(id)) => Ok(id),
                        Some(SortDef::Alias { params: ps, body }) if ps.is_empty() => self.sort(&body, &HashMap::new()),
                        Some(SortDef::Alias { .. }) => Err(perr(s, format!("sort `{name}` needs arguments"))),
                        None => {
                            if self.store_fallback {
                                let id = self.store.uninterpreted_sort(name);
                                return Ok(id);
                            }
                            Err(perr(s, format!("unknown sort `{name}`")))
                        }
                    },
                }
            }
            SexpKind::List(items) if !items.is_empty() => {
                if items[0].is_symbol("_") {
                    return Err(unsup(s, "bit-vector and indexed sorts (index sorts must have an infinite domain)"));
                }
                if items[0].is_symbol("Array") && items.len() == 3 {
                    let index = self.sort(&items[1], params)?;
                    let element = self.sort(&items[2], params)?;
                    if index == self.store.bool_sort() {
                        return Err(unsup(s, "array with finite (Bool) index sort"));
                    }
                    if self.store.is_array_sort(index) || self.store.is_array_sort(element) {
                        return Err(unsup(s, "nested arrays"));
                    }
                    return Ok(self.store.array_sort(index, element));
                }
                let Some(name) = items[0].symbol() else {
                    return Err(perr(s, "malformed sort"));
                };
                match self.sorts.get(name).cloned() {
                    Some(SortDef::Alias { params: ps, body }) if ps.len() == items.len() - 1 => {
                        let mut inner = HashMap::new();
                        for (p, arg) in ps.iter().zip(&items[1..]) {
                            inner.insert(p.clone(), self.sort(arg, params)?);
                        }
                        self.sort(&body, &inner)
                    }
                    _ => Err(perr(s, format!("unknown sort constructor `{name}`"))),
                }
            }
            _ => Err(perr(s, "malformed sort")),
        }
    }

    fn lookup(&mut self, name: &str, scope: &Scope) -> Option<Symbol> {
        for frame in scope.iter().rev() {
            if let Some(&t) = frame.get(name) {
                return Some(Symbol::Const(t));
            }
        }
        if let Some(sym) = self.symbols.get(name) {
            return Some(sym.clone());
        }
        if self.store_fallback {
            if let Some(v) = self.store.var_by_name(name) {
                return Some(Symbol::Var(v));
            }
            if let Some(f) = self.store.fun_by_name(name) {
                return Some(Symbol::Fun(f));
            }
        }
        None
    }

    fn term(&mut self, s: &Sexp, scope: &mut Scope) -> Result<TermId, VmtError> {
        match &s.kind {
            SexpKind::Numeral(n) => Ok(self.store.int(n.clone())),
            SexpKind::OtherLiteral(l) => Err(unsup(s, format!("non-integer literal `{l}`"))),
            SexpKind::Str(_) | SexpKind::Keyword(_) => Err(perr(s, "expected a term")),
            SexpKind::Symbol(name) => match name.as_str() {
                "true" => Ok(self.store.tru()),
                "false" => Ok(self.store.fls()),
                _ => match self.lookup(name, scope) {
                    Some(Symbol::Var(v)) => Ok(self.store.var_term(v)),
                    Some(Symbol::Const(t)) => Ok(t),
                    Some(Symbol::Macro { params, body }) if params.is_empty() => {
                        let t = self.term(&body, &mut Vec::new())?;
                        self.symbols.insert(name.clone(), Symbol::Const(t));
                        Ok(t)
                    }
                    Some(_) => Err(perr(s, format!("`{name}` needs arguments"))),
                    None => Err(perr(s, format!("unknown symbol `{name}`"))),
                },
            },
            SexpKind::List(items) => {
                if items.is_empty() {
                    return Err(perr(s, "empty application"));
                }
                if let Some(inner) = items[0].list() {
                    // ((as const (Array I E)) c)
                    if inner.len() == 3 && inner[0].is_symbol("as") && inner[1].is_symbol("const") {
                        if items.len() != 2 {
                            return Err(perr(s, "constant array takes one argument"));
                        }
                        let sort = self.sort(&inner[2], &HashMap::new())?;
                        if !self.store.is_array_sort(sort) {
                            return Err(perr(&inner[2], "constant array of non-array sort"));
                        }
                        let e = self.term(&items[1], scope)?;
                        return self.store.const_array(sort, e).map_err(|e| term_err(s, e));
                    }
                    if inner.first().is_some_and(|h| h.is_symbol("_")) {
                        return Err(unsup(s, "indexed operators"));
                    }
                    return Err(perr(s, "unsupported application head"));
                }
                let Some(head) = items[0].symbol() else {
                    return Err(perr(&items[0], "expected an operator"));
                };
                let args = &items[1..];
                match head {
                    "forall" | "exists" => Err(unsup(s, "quantifiers")),
                    "let" => self.let_term(s, args, scope),
                    "!" => self.annotated(s, args, scope),
                    "_" => Err(unsup(s, "indexed identifiers")),
                    "as" => Err(unsup(s, "qualified identifiers other than constant arrays")),
                    _ => {
                        let mut cs = Vec::with_capacity(args.len());
                        for a in args {
                            cs.push(self.term(a, scope)?);
                        }
                        self.apply(s, head, cs, scope)
                    }
                }
            }
        }
    }

    fn let_term(&mut self, s: &Sexp, args: &[Sexp], scope: &mut Scope) -> Result<TermId, VmtError> {
        if args.len() != 2 {
            return Err(perr(s, "malformed let"));
        }
        let Some(bindings) = args[0].list() else {
            return Err(perr(&args[0], "malformed let bindings"));
        };
        let mut frame = HashMap::new();
        for b in bindings {
            match b.list() {
                Some([name, value]) if name.symbol().is_some() => {
                    let v = self.term(value, scope)?;
                    frame.insert(name.symbol().unwrap().to_string(), v);
                }
                _ => return Err(perr(b, "malformed let binding")),
            }
        }
        scope.push(frame);
        let out = self.term(&args[1], scope);
        scope.pop();
        out
    }

    fn annotated(&mut self, s: &Sexp, args: &[Sexp], scope: &mut Scope) -> Result<TermId, VmtError> {
        if args.is_empty() {
            return Err(perr(s, "empty annotation"));
        }
        let t = self.term(&args[0], scope)?;
        let mut i = 1;
        while i < args.len() {
            let Some(key) = args[i].keyword() else {
                return Err(perr(&args[i], "expected an attribute keyword"));
            };
            let value = args.get(i + 1).cloned().unwrap_or_else(|| args[i].clone());
            match key {
                "next" | "init" | "trans" | "invar-property" => {
                    self.pending.push((key.to_string(), t, value));
                }
                "live-property" => return Err(unsup(&args[i], "liveness properties")),
                _ => {}
            }
            i += if args.get(i + 1).is_some_and(|v| v.keyword().is_none()) { 2 } else { 1 };
        }
        Ok(t)
    }

    fn apply(&mut self, s: &Sexp, head: &str, cs: Vec<TermId>, scope: &mut Scope) -> Result<TermId, VmtError> {
        let st = &mut *self.store;
        let r = match head {
            "and" => st.mk(Op::And, cs),
            "or" => st.mk(Op::Or, cs),
            "not" => st.mk(Op::Not, cs),
            "=>" => {
                if cs.len() < 2 {
                    return Err(perr(s, "=> needs two arguments"));
                }
                let mut acc = *cs.last().unwrap();
                for &c in cs[..cs.len() - 1].iter().rev() {
                    acc = st.mk(Op::Implies, vec![c, acc]).map_err(|e| term_err(s, e))?;
                }
                Ok(acc)
            }
            "xor" => {
                if cs.len() < 2 {
                    return Err(perr(s, "xor needs two arguments"));
                }
                let mut acc = cs[0];
                for &c in &cs[1..] {
                    let e = st.eq(acc, c).map_err(|e| term_err(s, e))?;
                    acc = st.mk(Op::Not, vec![e]).map_err(|e| term_err(s, e))?;
                }
                Ok(acc)
            }
            "ite" => st.mk(Op::Ite, cs),
            "=" | "<" | "<=" | ">" | ">=" => {
                if cs.len() < 2 {
                    return Err(perr(s, format!("`{head}` needs two arguments")));
                }
                let mut parts = Vec::new();
                for w in cs.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let t = match head {
                        "=" => st.mk(Op::Eq, vec![a, b]),
                        "<" => st.mk(Op::Lt, vec![a, b]),
                        "<=" => st.mk(Op::Le, vec![a, b]),
                        ">" => st.mk(Op::Lt, vec![b, a]),
                        _ => st.mk(Op::Le, vec![b, a]),
                    }
                    .map_err(|e| term_err(s, e))?;
                    parts.push(t);
                }
                if parts.len() == 1 {
                    Ok(parts[0])
                } else {
                    st.mk(Op::And, parts)
                }
            }
            "distinct" => {
                let mut parts = Vec::new();
                for i in 0..cs.len() {
                    for j in i + 1..cs.len() {
                        let e = st.mk(Op::Eq, vec![cs[i], cs[j]]).map_err(|e| term_err(s, e))?;
                        parts.push(st.mk(Op::Not, vec![e]).map_err(|e| term_err(s, e))?);
                    }
                }
                if parts.len() == 1 {
                    Ok(parts[0])
                } else {
                    st.mk(Op::And, parts)
                }
            }
            "+" => st.mk(Op::Add, cs),
            "-" => {
                if cs.len() == 1 {
                    st.neg(cs[0])
                } else if cs.is_empty() {
                    return Err(perr(s, "- needs arguments"));
                } else {
                    let mut parts = vec![cs[0]];
                    for &c in &cs[1..] {
                        parts.push(st.neg(c).map_err(|e| term_err(s, e))?);
                    }
                    st.mk(Op::Add, parts)
                }
            }
            "*" => {
                let mut coeff = BigInt::one();
                let mut rest = None;
                for &c in &cs {
                    match st.as_int(c) {
                        Some(v) => coeff *= v,
                        None if rest.is_none() => rest = Some(c),
                        None => return Err(unsup(s, "nonlinear multiplication")),
                    }
                }
                match rest {
                    None => Ok(st.int(coeff)),
                    Some(_) if coeff.is_zero() => Ok(st.int(0)),
                    Some(t) => st.mul_const(coeff, t),
                }
            }
            "div" | "mod" | "abs" | "/" | "to_real" | "to_int" | "is_int" => {
                return Err(unsup(s, format!("operator `{head}`")))
            }
            "select" => st.mk(Op::Read, cs),
            "store" => st.mk(Op::Write, cs),
            _ => {
                return match self.lookup(head, scope) {
                    Some(Symbol::Fun(f)) => self.store.apply(f, cs).map_err(|e| term_err(s, e)),
                    Some(Symbol::Macro { params, body }) => {
                        if params.len() != cs.len() {
                            return Err(perr(s, format!("`{head}` expects {} arguments", params.len())));
                        }
                        let mut frame = HashMap::new();
                        for ((p, sort), c) in params.iter().zip(cs) {
                            if self.store.sort_of(c) != *sort {
                                return Err(perr(s, format!("argument `{p}` of `{head}` has the wrong sort")));
                            }
                            frame.insert(p.clone(), c);
                        }
                        self.term(&body, &mut vec![frame])
                    }
                    _ => Err(perr(s, format!("unknown function `{head}`"))),
                }
            }
        };
        r.map_err(|e| term_err(s, e))
    }

    fn command(&mut self, c: &Sexp) -> Result<(), VmtError> {
        let Some(items) = c.list() else {
            return Err(perr(c, "expected a command"));
        };
        let Some(head) = items.first().and_then(|h| h.symbol()) else {
            return Err(perr(c, "expected a command"));
        };
        match head {
            "set-logic" | "set-info" | "set-option" | "check-sat" | "exit" | "get-model" | "push" | "pop" => Ok(()),
            "declare-sort" => {
                let name = items.get(1).and_then(|n| n.symbol()).ok_or_else(|| perr(c, "malformed declare-sort"))?;
                if let Some(arity) = items.get(2) {
                    if arity.kind != SexpKind::Numeral(BigInt::zero()) {
                        return Err(unsup(arity, "parametric sorts"));
                    }
                }
                let id = self.store.uninterpreted_sort(name);
                self.sorts.insert(name.to_string(), SortDef::Sort(id));
                Ok(())
            }
            "define-sort" => {
                let (Some(name), Some(params), Some(body)) =
                    (items.get(1).and_then(|n| n.symbol()), items.get(2).and_then(|p| p.list()), items.get(3))
                else {
                    return Err(perr(c, "malformed define-sort"));
                };
                let ps = params.iter().filter_map(|p| p.symbol().map(str::to_string)).collect();
                self.sorts.insert(
                    name.to_string(),
                    SortDef::Alias {
                        params: ps,
                        body: body.clone(),
                    },
                );
                Ok(())
            }
            "declare-fun" | "declare-const" => {
                let name = items.get(1).and_then(|n| n.symbol()).ok_or_else(|| perr(c, "malformed declaration"))?;
                let (args, ret) = if head == "declare-const" {
                    (Vec::new(), items.get(2).ok_or_else(|| perr(c, "missing sort"))?)
                } else {
                    let args = items.get(2).and_then(|a| a.list()).ok_or_else(|| perr(c, "missing argument sorts"))?;
                    (args.to_vec(), items.get(3).ok_or_else(|| perr(c, "missing sort"))?)
                };
                let ret = self.sort(ret, &HashMap::new())?;
                if args.is_empty() {
                    let v = self
                        .store
                        .new_var(name, ret, VarKind::Input)
                        .map_err(|e| perr(c, e.to_string()))?;
                    self.symbols.insert(name.to_string(), Symbol::Var(v));
                    self.declared.push(v);
                } else {
                    let mut sorts = Vec::new();
                    for a in &args {
                        sorts.push(self.sort(a, &HashMap::new())?);
                    }
                    let f = self.store.declare_fun(name, sorts, ret).map_err(|e| perr(c, e.to_string()))?;
                    self.symbols.insert(name.to_string(), Symbol::Fun(f));
                }
                Ok(())
            }
            "define-fun" => {
                let (Some(name), Some(params), Some(ret), Some(body)) = (
                    items.get(1).and_then(|n| n.symbol()),
                    items.get(2).and_then(|p| p.list()),
                    items.get(3),
                    items.get(4),
                ) else {
                    return Err(perr(c, "malformed define-fun"));
                };
                let ret = self.sort(ret, &HashMap::new())?;
                let mut ps = Vec::new();
                for p in params {
                    match p.list() {
                        Some([n, s]) if n.symbol().is_some() => {
                            let sort = self.sort(s, &HashMap::new())?;
                            ps.push((n.symbol().unwrap().to_string(), sort));
                        }
                        _ => return Err(perr(p, "malformed parameter")),
                    }
                }
                if ps.is_empty() {
                    let t = self.term(body, &mut Vec::new())?;
                    if self.store.sort_of(t) != ret {
                        return Err(perr(body, format!("body of `{name}` does not have the declared sort")));
                    }
                    self.symbols.insert(name.to_string(), Symbol::Const(t));
                    self.flush_pending()?;
                } else {
                    self.symbols.insert(
                        name.to_string(),
                        Symbol::Macro {
                            params: ps,
                            body: body.clone(),
                        },
                    );
                }
                Ok(())
            }
            "assert" => Err(unsup(c, "assertions outside annotated definitions")),
            _ => Err(perr(c, format!("unknown command `{head}`"))),
        }
    }

    fn flush_pending(&mut self) -> Result<(), VmtError> {
        for (key, t, value) in std::mem::take(&mut self.pending) {
            match key.as_str() {
                "next" => {
                    let cur = self.store.as_var(t).ok_or_else(|| perr(&value, ":next must annotate a variable"))?;
                    let name = value.symbol().ok_or_else(|| perr(&value, ":next expects a variable name"))?;
                    let Some(Symbol::Var(nxt)) = self.symbols.get(name).cloned() else {
                        return Err(perr(&value, format!("unknown next-state variable `{name}`")));
                    };
                    if self.store.sort_of(t) != self.store.var(nxt).sort {
                        return Err(perr(&value, "next-state variable has a different sort"));
                    }
                    if self.nexts.iter().any(|(c, n, _, _)| *c == cur || *n == nxt || *n == cur || *c == nxt) {
                        return Err(VmtError::DuplicateSection(format!(":next for `{}`", self.store.var(cur).name)));
                    }
                    self.nexts.push((cur, nxt, value.line, value.col));
                }
                "init" => {
                    if self.init.replace(t).is_some() {
                        return Err(VmtError::DuplicateSection(":init".into()));
                    }
                }
                "trans" => {
                    if self.trans.replace(t).is_some() {
                        return Err(VmtError::DuplicateSection(":trans".into()));
                    }
                }
                _ => {
                    let idx = match &value.kind {
                        SexpKind::Numeral(n) => u32::try_from(n.clone()).map_err(|_| perr(&value, "bad property index"))?,
                        _ => return Err(perr(&value, ":invar-property expects an index")),
                    };
                    if self.props.insert(idx, t).is_some() {
                        return Err(VmtError::DuplicateSection(format!(":invar-property {idx}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses a VMT script into a transition system and its properties.
pub fn parse_vmt(store: &mut TermStore, text: &str) -> Result<VmtProblem, VmtError> {
    let cmds = sexp::parse_all(text).map_err(|e| VmtError::ParseError {
        line: e.line,
        col: e.col,
        msg: e.msg,
    })?;
    let mut p = Parser::new(store);
    for c in &cmds {
        p.command(c)?;
        p.flush_pending()?;
    }
    let init = p.init.ok_or_else(|| VmtError::MissingSection(":init".into()))?;
    let trans = p.trans.ok_or_else(|| VmtError::MissingSection(":trans".into()))?;
    if p.props.is_empty() {
        return Err(VmtError::MissingSection(":invar-property".into()));
    }
    let mut sys = TransitionSystem::new();
    let next_set: BTreeSet<VarId> = p.nexts.iter().map(|n| n.1).collect();
    for &(cur, nxt, _, _) in &p.nexts {
        p.store.set_var_kind(cur, VarKind::State);
        p.store.set_var_kind(nxt, VarKind::Next { of: cur });
    }
    for &v in &p.declared {
        if next_set.contains(&v) {
            continue;
        }
        if p.nexts.iter().any(|n| n.0 == v) {
            sys.add_state_var(p.store, v);
        } else {
            sys.add_input_var(v);
        }
    }
    let st = &*p.store;
    let scope_ok = |t: TermId, allow_next: bool| {
        st.free_vars(t)
            .into_iter()
            .all(|v| allow_next || !next_set.contains(&v))
    };
    if !scope_ok(init, false) {
        return Err(VmtError::ParseError {
            line: 0,
            col: 0,
            msg: ":init mentions next-state variables".into(),
        });
    }
    for (idx, &t) in &p.props {
        if !scope_ok(t, false) {
            return Err(VmtError::ParseError {
                line: 0,
                col: 0,
                msg: format!("property {idx} mentions next-state variables"),
            });
        }
    }
    sys.init = p.store.conjuncts(init);
    sys.trans = p.store.conjuncts(trans);
    for &(cur, nxt, _, _) in &p.nexts {
        let (c, n) = (p.store.var_term(cur), p.store.var_term(nxt));
        let fwd = p.store.eq(n, c).map_err(|e| term_err_at(0, 0, e))?;
        let bwd = p.store.eq(c, n).map_err(|e| term_err_at(0, 0, e))?;
        if sys.trans.contains(&fwd) || sys.trans.contains(&bwd) {
            sys.frozen.insert(cur);
        }
    }
    let properties = p.props.iter().map(|(&i, &t)| (i, Property::new(t))).collect();
    Ok(VmtProblem {
        system: sys,
        properties,
    })
}

/// Parses a single term whose symbols are resolved against variable and
/// function names already in `store`.
pub fn parse_term(store: &mut TermStore, text: &str) -> Result<TermId, VmtError> {
    let s = sexp::parse_one(text).map_err(|e| VmtError::ParseError {
        line: e.line,
        col: e.col,
        msg: e.msg,
    })?;
    let mut p = Parser::new(store);
    p.store_fallback = true;
    p.term(&s, &mut Vec::new())
}

/// Writes `sys` and `props` (indexed from 0) as a VMT script.
pub fn emit_vmt(store: &mut TermStore, sys: &TransitionSystem, props: &[Property]) -> String {
    let init = store.and_all(sys.init.clone()).unwrap();
    let trans = store.and_all(sys.trans.clone()).unwrap();
    let mut roots = vec![init, trans];
    roots.extend(props.iter().map(|p| p.formula));
    let mut sorts = BTreeSet::new();
    let mut funs = BTreeSet::new();
    let mut extra_vars = BTreeSet::new();
    for &r in &roots {
        for u in store.subterms(r) {
            match store.node(u) {
                Node::App(Op::Apply(f), _) => {
                    funs.insert(*f);
                }
                Node::Var(v) => {
                    extra_vars.insert(*v);
                }
                _ => {}
            }
        }
    }
    let mut declared: BTreeSet<VarId> = BTreeSet::new();
    for &v in sys.state_vars.iter().chain(&sys.input_vars) {
        declared.insert(v);
        if let Some(n) = store.existing_next(v) {
            declared.insert(n);
        }
    }
    for v in sys.state_vars.iter().chain(&sys.input_vars).chain(&extra_vars) {
        collect_sorts(store, store.var(*v).sort, &mut sorts);
    }
    for &f in &funs {
        let d = store.fun(f);
        for &s in d.args.iter().chain(std::iter::once(&d.ret)) {
            collect_sorts(store, s, &mut sorts);
        }
    }
    let mut out = String::new();
    for s in sorts {
        if let Sort::Uninterpreted(n) = store.sort(s) {
            let _ = writeln!(out, "(declare-sort {} 0)", quote_symbol(n));
        }
    }
    for &f in &funs {
        let d = store.fun(f);
        let args: Vec<String> = d.args.iter().map(|&s| store.sort_name(s)).collect();
        let _ = writeln!(out, "(declare-fun {} ({}) {})", quote_symbol(&d.name), args.join(" "), store.sort_name(d.ret));
    }
    let name = |v: VarId| quote_symbol(&store.var(v).name);
    for (i, &v) in sys.state_vars.iter().enumerate() {
        let n = store.existing_next(v).expect("state variable without next copy");
        let sort = store.sort_name(store.var(v).sort);
        let _ = writeln!(out, "(declare-fun {} () {sort})", name(v));
        let _ = writeln!(out, "(declare-fun {} () {sort})", name(n));
        let _ = writeln!(out, "(define-fun .def{i} () {sort} (! {} :next {}))", name(v), name(n));
    }
    for &v in sys.input_vars.iter().chain(extra_vars.iter().filter(|v| !declared.contains(v))) {
        let _ = writeln!(out, "(declare-fun {} () {})", name(v), store.sort_name(store.var(v).sort));
    }
    let _ = writeln!(out, "(define-fun .init () Bool (! {} :init true))", store.display(init));
    let _ = writeln!(out, "(define-fun .trans () Bool (! {} :trans true))", store.display(trans));
    for (i, p) in props.iter().enumerate() {
        let _ = writeln!(out, "(define-fun .prop{i} () Bool (! {} :invar-property {i}))", store.display(p.formula));
    }
    out
}

fn collect_sorts(store: &TermStore, s: SortId, out: &mut BTreeSet<SortId>) {
    match store.sort(s) {
        Sort::Array { index, element } => {
            collect_sorts(store, *index, out);
            collect_sorts(store, *element, out);
        }
        Sort::Uninterpreted(_) => {
            out.insert(s);
        }
        _ => {}
    }
}
