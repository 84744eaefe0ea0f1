//! Hash-consed, many-sorted terms.
//!
//! Every term lives in a [`TermStore`] and is referred to by a [`TermId`].
//! Structurally equal terms always receive the same id, so term equality is
//! id equality. Sorts, variables and uninterpreted function symbols are
//! interned in the same store.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{CexModel, Value};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct SortId(u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VarId(u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct FunId(u32);

/// Identity of an interned term. Ordering follows creation order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct TermId(u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Sort {
    Bool,
    Int,
    Array { index: SortId, element: SortId },
    Uninterpreted(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum VarKind {
    State,
    /// Primed copy of a state variable.
    Next { of: VarId },
    Input,
    /// `base@step` inside an unrolling.
    Timed { base: VarId, step: u32 },
    History { target: TermId, depth: u32 },
    Prophecy { target: TermId, delay: u32 },
    /// Skolem index for the extensionality axiom of one array equality.
    Witness,
    /// Fresh index distinct from every other index of its sort.
    Lambda,
}

#[derive(Clone, Debug)]
pub struct VarInfo {
    pub name: String,
    pub sort: SortId,
    pub kind: VarKind,
}

#[derive(Clone, Debug)]
pub struct FunDecl {
    pub name: String,
    pub args: Vec<SortId>,
    pub ret: SortId,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Op {
    And,
    Or,
    Not,
    Implies,
    Ite,
    Eq,
    Lt,
    Le,
    Add,
    /// Multiplication by a literal; the first child is always an integer literal.
    Mul,
    Read,
    Write,
    /// Constant array of the carried array sort.
    ConstArray(SortId),
    Apply(FunId),
}

impl Op {
    pub fn smt_name(self) -> &'static str {
        match self {
            Op::And => "and",
            Op::Or => "or",
            Op::Not => "not",
            Op::Implies => "=>",
            Op::Ite => "ite",
            Op::Eq => "=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Add => "+",
            Op::Mul => "*",
            Op::Read => "select",
            Op::Write => "store",
            Op::ConstArray(_) => "const",
            Op::Apply(_) => "apply",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Node {
    Var(VarId),
    Int(BigInt),
    Bool(bool),
    App(Op, Vec<TermId>),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("sort mismatch in `{op}` at child {position}: expected {expected}, found {found}")]
    SortMismatch {
        op: String,
        position: usize,
        expected: String,
        found: String,
    },
    #[error("`{op}` expects {expected} arguments, got {found}")]
    Arity {
        op: String,
        expected: String,
        found: usize,
    },
    #[error("substitution changes sort of `{from}` ({from_sort}) to `{to}` ({to_sort})")]
    SubstitutionSort {
        from: String,
        from_sort: String,
        to: String,
        to_sort: String,
    },
    #[error("multiplication requires a literal factor")]
    NonLinear,
    #[error("unassigned variable `{0}`")]
    UnassignedVariable(String),
    #[error("no model value for application `{0}`")]
    UnassignedApplication(String),
    #[error("cannot evaluate `{0}` without an array model")]
    NotEvaluable(String),
    #[error("symbol `{0}` already declared with a different signature")]
    Redeclared(String),
    #[error("variable `{0}` has no next-state copy")]
    NoNext(String),
}

#[derive(Clone, Debug)]
struct TermData {
    node: Node,
    sort: SortId,
}

/// Owner of all sorts, variables, functions and terms of one engine instance.
#[derive(Clone, Debug)]
pub struct TermStore {
    sorts: Vec<Sort>,
    sort_ids: HashMap<Sort, SortId>,
    vars: Vec<VarInfo>,
    var_names: HashMap<String, VarId>,
    funs: Vec<FunDecl>,
    fun_names: HashMap<String, FunId>,
    terms: Vec<TermData>,
    term_ids: HashMap<Node, TermId>,
    var_terms: Vec<TermId>,
    next_vars: HashMap<VarId, VarId>,
    timed_vars: HashMap<(VarId, u32), VarId>,
    bool_sort: SortId,
    int_sort: SortId,
    tru: TermId,
    fls: TermId,
}

impl Default for TermStore {
    fn default() -> Self {
        Self::new()
    }
}

impl TermStore {
    pub fn new() -> Self {
        let mut store = TermStore {
            sorts: Vec::new(),
            sort_ids: HashMap::new(),
            vars: Vec::new(),
            var_names: HashMap::new(),
            funs: Vec::new(),
            fun_names: HashMap::new(),
            terms: Vec::new(),
            term_ids: HashMap::new(),
            var_terms: Vec::new(),
            next_vars: HashMap::new(),
            timed_vars: HashMap::new(),
            bool_sort: SortId(0),
            int_sort: SortId(0),
            tru: TermId(0),
            fls: TermId(0),
        };
        store.bool_sort = store.intern_sort(Sort::Bool);
        store.int_sort = store.intern_sort(Sort::Int);
        store.tru = store.intern(Node::Bool(true), store.bool_sort);
        store.fls = store.intern(Node::Bool(false), store.bool_sort);
        store
    }

    // ---------------------------------------------------------------- sorts

    pub fn intern_sort(&mut self, sort: Sort) -> SortId {
        if let Some(&id) = self.sort_ids.get(&sort) {
            return id;
        }
        let id = SortId(self.sorts.len() as u32);
        self.sorts.push(sort.clone());
        self.sort_ids.insert(sort, id);
        id
    }

    pub fn bool_sort(&self) -> SortId {
        self.bool_sort
    }

    pub fn int_sort(&self) -> SortId {
        self.int_sort
    }

    pub fn array_sort(&mut self, index: SortId, element: SortId) -> SortId {
        self.intern_sort(Sort::Array { index, element })
    }

    pub fn uninterpreted_sort(&mut self, name: &str) -> SortId {
        self.intern_sort(Sort::Uninterpreted(name.to_string()))
    }

    pub fn sort(&self, id: SortId) -> &Sort {
        &self.sorts[id.0 as usize]
    }

    pub fn is_array_sort(&self, id: SortId) -> bool {
        matches!(self.sort(id), Sort::Array { .. })
    }

    pub fn array_parts(&self, id: SortId) -> Option<(SortId, SortId)> {
        match self.sort(id) {
            Sort::Array { index, element } => Some((*index, *element)),
            _ => None,
        }
    }

    /// SMT-LIB spelling of a sort.
    pub fn sort_name(&self, id: SortId) -> String {
        match self.sort(id) {
            Sort::Bool => "Bool".into(),
            Sort::Int => "Int".into(),
            Sort::Array { index, element } => {
                format!("(Array {} {})", self.sort_name(*index), self.sort_name(*element))
            }
            Sort::Uninterpreted(name) => quote_symbol(name),
        }
    }

    /// All interned uninterpreted sorts, in creation order.
    pub fn uninterpreted_sorts(&self) -> Vec<SortId> {
        (0..self.sorts.len() as u32)
            .map(SortId)
            .filter(|s| matches!(self.sort(*s), Sort::Uninterpreted(_)))
            .collect()
    }

    // ------------------------------------------------------------ functions

    pub fn declare_fun(&mut self, name: &str, args: Vec<SortId>, ret: SortId) -> Result<FunId, TermError> {
        if let Some(&id) = self.fun_names.get(name) {
            let decl = &self.funs[id.0 as usize];
            if decl.args == args && decl.ret == ret {
                return Ok(id);
            }
            return Err(TermError::Redeclared(name.to_string()));
        }
        let id = FunId(self.funs.len() as u32);
        self.funs.push(FunDecl {
            name: name.to_string(),
            args,
            ret,
        });
        self.fun_names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn fun(&self, id: FunId) -> &FunDecl {
        &self.funs[id.0 as usize]
    }

    pub fn fun_by_name(&self, name: &str) -> Option<FunId> {
        self.fun_names.get(name).copied()
    }

    /// Picks a function name not yet in use.
    pub fn fresh_fun_name(&self, base: &str) -> String {
        if !self.fun_names.contains_key(base) {
            return base.to_string();
        }
        (1..)
            .map(|i| format!("{base}_{i}"))
            .find(|n| !self.fun_names.contains_key(n))
            .unwrap()
    }

    // ------------------------------------------------------------ variables

    /// Declares a variable. Names are unique within a store.
    pub fn new_var(&mut self, name: &str, sort: SortId, kind: VarKind) -> Result<VarId, TermError> {
        if self.var_names.contains_key(name) {
            return Err(TermError::Redeclared(name.to_string()));
        }
        Ok(self.push_var(name.to_string(), sort, kind))
    }

    /// Declares a variable whose name is derived from `base`, uniquified if needed.
    pub fn fresh_var(&mut self, base: &str, sort: SortId, kind: VarKind) -> VarId {
        let name = self.fresh_var_name(base);
        self.push_var(name, sort, kind)
    }

    pub fn fresh_var_name(&self, base: &str) -> String {
        if !self.var_names.contains_key(base) {
            return base.to_string();
        }
        (1..)
            .map(|i| format!("{base}_{i}"))
            .find(|n| !self.var_names.contains_key(n))
            .unwrap()
    }

    fn push_var(&mut self, name: String, sort: SortId, kind: VarKind) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.var_names.insert(name.clone(), id);
        self.vars.push(VarInfo { name, sort, kind });
        let term = self.intern(Node::Var(id), sort);
        self.var_terms.push(term);
        if let VarKind::Next { of } = kind {
            self.next_vars.insert(of, id);
        }
        if let VarKind::Timed { base, step } = kind {
            self.timed_vars.insert((base, step), id);
        }
        id
    }

    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id.0 as usize]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Re-classifies a variable while a system is being built (frontend use).
    pub fn set_var_kind(&mut self, id: VarId, kind: VarKind) {
        if let VarKind::Next { of } = kind {
            self.next_vars.insert(of, id);
        }
        self.vars[id.0 as usize].kind = kind;
    }

    pub fn var_term(&self, id: VarId) -> TermId {
        self.var_terms[id.0 as usize]
    }

    /// The primed copy of `x`, created on first use as `x.next`.
    pub fn next_of(&mut self, x: VarId) -> VarId {
        if let Some(&n) = self.next_vars.get(&x) {
            return n;
        }
        let info = self.var(x).clone();
        assert!(
            !matches!(info.kind, VarKind::Next { .. } | VarKind::Timed { .. }),
            "next_of on {}",
            info.name
        );
        let name = self.fresh_var_name(&format!("{}.next", info.name));
        self.push_var(name, info.sort, VarKind::Next { of: x })
    }

    pub fn existing_next(&self, x: VarId) -> Option<VarId> {
        self.next_vars.get(&x).copied()
    }

    /// `x@step`, unique per `(x, step)`.
    pub fn timed(&mut self, x: VarId, step: u32) -> VarId {
        if let Some(&t) = self.timed_vars.get(&(x, step)) {
            return t;
        }
        let info = self.var(x).clone();
        let name = self.fresh_var_name(&format!("{}@{}", info.name, step));
        self.push_var(name, info.sort, VarKind::Timed { base: x, step })
    }

    pub fn timed_term(&mut self, x: VarId, step: u32) -> TermId {
        let v = self.timed(x, step);
        self.var_term(v)
    }

    /// `(base, step)` when `id` is a timed variable.
    pub fn timed_parts(&self, id: VarId) -> Option<(VarId, u32)> {
        match self.var(id).kind {
            VarKind::Timed { base, step } => Some((base, step)),
            _ => None,
        }
    }

    // ---------------------------------------------------------------- terms

    fn intern(&mut self, node: Node, sort: SortId) -> TermId {
        if let Some(&id) = self.term_ids.get(&node) {
            return id;
        }
        let id = TermId(self.terms.len() as u32);
        self.terms.push(TermData {
            node: node.clone(),
            sort,
        });
        self.term_ids.insert(node, id);
        id
    }

    pub fn node(&self, t: TermId) -> &Node {
        &self.terms[t.0 as usize].node
    }

    pub fn sort_of(&self, t: TermId) -> SortId {
        self.terms[t.0 as usize].sort
    }

    pub fn children(&self, t: TermId) -> &[TermId] {
        match self.node(t) {
            Node::App(_, cs) => cs,
            _ => &[],
        }
    }

    pub fn op(&self, t: TermId) -> Option<Op> {
        match self.node(t) {
            Node::App(op, _) => Some(*op),
            _ => None,
        }
    }

    pub fn as_var(&self, t: TermId) -> Option<VarId> {
        match self.node(t) {
            Node::Var(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_int(&self, t: TermId) -> Option<&BigInt> {
        match self.node(t) {
            Node::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn tru(&self) -> TermId {
        self.tru
    }

    pub fn fls(&self) -> TermId {
        self.fls
    }

    pub fn bool_lit(&self, b: bool) -> TermId {
        if b {
            self.tru
        } else {
            self.fls
        }
    }

    pub fn int(&mut self, v: impl Into<BigInt>) -> TermId {
        let sort = self.int_sort;
        self.intern(Node::Int(v.into()), sort)
    }

    /// Builds (or finds) the application `op(children)` after checking sorts.
    pub fn mk(&mut self, op: Op, children: Vec<TermId>) -> Result<TermId, TermError> {
        let sort = self.result_sort(op, &children)?;
        Ok(self.intern(Node::App(op, children), sort))
    }

    fn expect_sort(&self, op: Op, pos: usize, child: TermId, expected: SortId) -> Result<(), TermError> {
        let found = self.sort_of(child);
        if found != expected {
            return Err(TermError::SortMismatch {
                op: self.op_label(op),
                position: pos,
                expected: self.sort_name(expected),
                found: self.sort_name(found),
            });
        }
        Ok(())
    }

    fn op_label(&self, op: Op) -> String {
        match op {
            Op::Apply(f) => self.fun(f).name.clone(),
            other => other.smt_name().to_string(),
        }
    }

    fn arity(&self, op: Op, cs: &[TermId], ok: bool, expected: &str) -> Result<(), TermError> {
        if ok {
            Ok(())
        } else {
            Err(TermError::Arity {
                op: self.op_label(op),
                expected: expected.to_string(),
                found: cs.len(),
            })
        }
    }

    fn result_sort(&self, op: Op, cs: &[TermId]) -> Result<SortId, TermError> {
        let b = self.bool_sort;
        let i = self.int_sort;
        match op {
            Op::And | Op::Or => {
                for (p, &c) in cs.iter().enumerate() {
                    self.expect_sort(op, p, c, b)?;
                }
                Ok(b)
            }
            Op::Not => {
                self.arity(op, cs, cs.len() == 1, "1")?;
                self.expect_sort(op, 0, cs[0], b)?;
                Ok(b)
            }
            Op::Implies => {
                self.arity(op, cs, cs.len() == 2, "2")?;
                self.expect_sort(op, 0, cs[0], b)?;
                self.expect_sort(op, 1, cs[1], b)?;
                Ok(b)
            }
            Op::Ite => {
                self.arity(op, cs, cs.len() == 3, "3")?;
                self.expect_sort(op, 0, cs[0], b)?;
                self.expect_sort(op, 2, cs[2], self.sort_of(cs[1]))?;
                Ok(self.sort_of(cs[1]))
            }
            Op::Eq => {
                self.arity(op, cs, cs.len() == 2, "2")?;
                self.expect_sort(op, 1, cs[1], self.sort_of(cs[0]))?;
                Ok(b)
            }
            Op::Lt | Op::Le => {
                self.arity(op, cs, cs.len() == 2, "2")?;
                self.expect_sort(op, 0, cs[0], i)?;
                self.expect_sort(op, 1, cs[1], i)?;
                Ok(b)
            }
            Op::Add => {
                self.arity(op, cs, !cs.is_empty(), "at least 1")?;
                for (p, &c) in cs.iter().enumerate() {
                    self.expect_sort(op, p, c, i)?;
                }
                Ok(i)
            }
            Op::Mul => {
                self.arity(op, cs, cs.len() == 2, "2")?;
                self.expect_sort(op, 0, cs[0], i)?;
                self.expect_sort(op, 1, cs[1], i)?;
                if self.as_int(cs[0]).is_none() {
                    return Err(TermError::NonLinear);
                }
                Ok(i)
            }
            Op::Read => {
                self.arity(op, cs, cs.len() == 2, "2")?;
                let Some((index, element)) = self.array_parts(self.sort_of(cs[0])) else {
                    return Err(TermError::SortMismatch {
                        op: "select".into(),
                        position: 0,
                        expected: "an array sort".into(),
                        found: self.sort_name(self.sort_of(cs[0])),
                    });
                };
                self.expect_sort(op, 1, cs[1], index)?;
                Ok(element)
            }
            Op::Write => {
                self.arity(op, cs, cs.len() == 3, "3")?;
                let arr = self.sort_of(cs[0]);
                let Some((index, element)) = self.array_parts(arr) else {
                    return Err(TermError::SortMismatch {
                        op: "store".into(),
                        position: 0,
                        expected: "an array sort".into(),
                        found: self.sort_name(arr),
                    });
                };
                self.expect_sort(op, 1, cs[1], index)?;
                self.expect_sort(op, 2, cs[2], element)?;
                Ok(arr)
            }
            Op::ConstArray(arr) => {
                self.arity(op, cs, cs.len() == 1, "1")?;
                let Some((_, element)) = self.array_parts(arr) else {
                    return Err(TermError::SortMismatch {
                        op: "const".into(),
                        position: 0,
                        expected: "an array sort".into(),
                        found: self.sort_name(arr),
                    });
                };
                self.expect_sort(op, 0, cs[0], element)?;
                Ok(arr)
            }
            Op::Apply(f) => {
                let decl = self.fun(f);
                self.arity(op, cs, cs.len() == decl.args.len(), &decl.args.len().to_string())?;
                for (p, (&c, &s)) in cs.iter().zip(decl.args.iter()).enumerate() {
                    self.expect_sort(op, p, c, s)?;
                }
                Ok(decl.ret)
            }
        }
    }

    // ------------------------------------------------------ smart builders

    /// Conjunction; `true` for no conjuncts, the conjunct itself for one.
    pub fn and_all(&mut self, mut cs: Vec<TermId>) -> Result<TermId, TermError> {
        cs.retain(|&c| c != self.tru);
        if cs.contains(&self.fls) {
            return Ok(self.fls);
        }
        match cs.len() {
            0 => Ok(self.tru),
            1 => Ok(cs[0]),
            _ => self.mk(Op::And, cs),
        }
    }

    pub fn or_all(&mut self, mut cs: Vec<TermId>) -> Result<TermId, TermError> {
        cs.retain(|&c| c != self.fls);
        if cs.contains(&self.tru) {
            return Ok(self.tru);
        }
        match cs.len() {
            0 => Ok(self.fls),
            1 => Ok(cs[0]),
            _ => self.mk(Op::Or, cs),
        }
    }

    pub fn and2(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.and_all(vec![a, b])
    }

    pub fn not(&mut self, t: TermId) -> Result<TermId, TermError> {
        match self.node(t) {
            Node::Bool(b) => Ok(self.bool_lit(!*b)),
            Node::App(Op::Not, cs) => Ok(cs[0]),
            _ => self.mk(Op::Not, vec![t]),
        }
    }

    pub fn implies(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk(Op::Implies, vec![a, b])
    }

    pub fn eq(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk(Op::Eq, vec![a, b])
    }

    pub fn neq(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        let e = self.eq(a, b)?;
        self.not(e)
    }

    pub fn lt(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk(Op::Lt, vec![a, b])
    }

    pub fn le(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        self.mk(Op::Le, vec![a, b])
    }

    pub fn ite(&mut self, c: TermId, t: TermId, e: TermId) -> Result<TermId, TermError> {
        self.mk(Op::Ite, vec![c, t, e])
    }

    pub fn add(&mut self, cs: Vec<TermId>) -> Result<TermId, TermError> {
        if cs.len() == 1 {
            return Ok(cs[0]);
        }
        self.mk(Op::Add, cs)
    }

    /// `c * t`; literal operands are folded.
    pub fn mul_const(&mut self, c: BigInt, t: TermId) -> Result<TermId, TermError> {
        if let Some(v) = self.as_int(t) {
            let prod = v * &c;
            return Ok(self.int(prod));
        }
        if c.is_one() {
            return Ok(t);
        }
        let lit = self.int(c);
        self.mk(Op::Mul, vec![lit, t])
    }

    /// `a - b` in canonical form (`a + (-1)*b`).
    pub fn sub(&mut self, a: TermId, b: TermId) -> Result<TermId, TermError> {
        let neg = self.neg(b)?;
        self.add(vec![a, neg])
    }

    pub fn neg(&mut self, t: TermId) -> Result<TermId, TermError> {
        self.mul_const(BigInt::from(-1), t)
    }

    pub fn read(&mut self, a: TermId, i: TermId) -> Result<TermId, TermError> {
        self.mk(Op::Read, vec![a, i])
    }

    pub fn write(&mut self, a: TermId, i: TermId, e: TermId) -> Result<TermId, TermError> {
        self.mk(Op::Write, vec![a, i, e])
    }

    pub fn const_array(&mut self, arr_sort: SortId, e: TermId) -> Result<TermId, TermError> {
        self.mk(Op::ConstArray(arr_sort), vec![e])
    }

    pub fn apply(&mut self, f: FunId, args: Vec<TermId>) -> Result<TermId, TermError> {
        self.mk(Op::Apply(f), args)
    }

    // --------------------------------------------------------- traversals

    /// Sub-terms of `t` in post-order, each listed once.
    pub fn subterms(&self, t: TermId) -> Vec<TermId> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        let mut stack = vec![(t, false)];
        while let Some((u, expanded)) = stack.pop() {
            if expanded {
                out.push(u);
                continue;
            }
            if !seen.insert(u) {
                continue;
            }
            stack.push((u, true));
            for &c in self.children(u).iter().rev() {
                if !seen.contains(&c) {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    pub fn free_vars(&self, t: TermId) -> BTreeSet<VarId> {
        self.subterms(t)
            .into_iter()
            .filter_map(|u| self.as_var(u))
            .collect()
    }

    pub fn contains_var(&self, t: TermId, pred: impl Fn(VarId, &VarInfo) -> bool) -> bool {
        self.subterms(t).into_iter().any(|u| match self.node(u) {
            Node::Var(v) => pred(*v, self.var(*v)),
            _ => false,
        })
    }

    /// The set of steps of all timed variables occurring in `t`.
    pub fn times_of(&self, t: TermId) -> BTreeSet<u32> {
        self.free_vars(t)
            .into_iter()
            .filter_map(|v| self.timed_parts(v).map(|(_, s)| s))
            .collect()
    }

    /// Simultaneous substitution of sub-terms.
    pub fn substitute(&mut self, t: TermId, map: &HashMap<TermId, TermId>) -> Result<TermId, TermError> {
        for (&from, &to) in map {
            if self.sort_of(from) != self.sort_of(to) {
                return Err(TermError::SubstitutionSort {
                    from: self.display(from).to_string(),
                    from_sort: self.sort_name(self.sort_of(from)),
                    to: self.display(to).to_string(),
                    to_sort: self.sort_name(self.sort_of(to)),
                });
            }
        }
        if map.is_empty() {
            return Ok(t);
        }
        let mut memo: HashMap<TermId, TermId> = HashMap::new();
        for u in self.subterms(t) {
            let out = if let Some(&to) = map.get(&u) {
                to
            } else {
                match self.node(u).clone() {
                    Node::App(op, cs) => {
                        let new_cs: Vec<TermId> = cs.iter().map(|c| memo[c]).collect();
                        if new_cs == cs {
                            u
                        } else {
                            self.mk(op, new_cs)?
                        }
                    }
                    _ => u,
                }
            };
            memo.insert(u, out);
        }
        Ok(memo[&t])
    }

    /// Substitution keyed by variables.
    pub fn substitute_vars(&mut self, t: TermId, map: &HashMap<VarId, TermId>) -> Result<TermId, TermError> {
        let tmap: HashMap<TermId, TermId> = map.iter().map(|(&v, &to)| (self.var_term(v), to)).collect();
        self.substitute(t, &tmap)
    }

    /// Top-level conjuncts of `t`, flattening nested `and`.
    pub fn conjuncts(&self, t: TermId) -> Vec<TermId> {
        let mut out = Vec::new();
        let mut stack = vec![t];
        while let Some(u) = stack.pop() {
            match self.node(u) {
                Node::App(Op::And, cs) => stack.extend(cs.iter().rev()),
                Node::Bool(true) => {}
                _ => out.push(u),
            }
        }
        out
    }

    // --------------------------------------------------------- evaluation

    /// Evaluates `t` under `model`. Uninterpreted applications are looked up
    /// in the model's function tables, falling back to the table default.
    pub fn evaluate(&self, t: TermId, model: &CexModel) -> Result<Value, TermError> {
        let mut memo: HashMap<TermId, Value> = HashMap::new();
        for u in self.subterms(t) {
            let v = self.eval_node(u, model, &memo)?;
            memo.insert(u, v);
        }
        Ok(memo.remove(&t).unwrap())
    }

    fn eval_node(&self, u: TermId, model: &CexModel, memo: &HashMap<TermId, Value>) -> Result<Value, TermError> {
        let arg = |i: usize| &memo[&self.children(u)[i]];
        let int_arg = |i: usize| -> BigInt {
            match &memo[&self.children(u)[i]] {
                Value::Int(v) => v.clone(),
                other => panic!("ill-sorted evaluation: expected Int, got {other}"),
            }
        };
        let bool_arg = |i: usize| -> bool {
            match &memo[&self.children(u)[i]] {
                Value::Bool(b) => *b,
                other => panic!("ill-sorted evaluation: expected Bool, got {other}"),
            }
        };
        Ok(match self.node(u) {
            Node::Var(v) => match model.scalar(*v) {
                Some(val) => val.clone(),
                None => return Err(TermError::UnassignedVariable(self.var(*v).name.clone())),
            },
            Node::Int(v) => Value::Int(v.clone()),
            Node::Bool(b) => Value::Bool(*b),
            Node::App(op, cs) => match op {
                Op::And => Value::Bool((0..cs.len()).all(bool_arg)),
                Op::Or => Value::Bool((0..cs.len()).any(bool_arg)),
                Op::Not => Value::Bool(!bool_arg(0)),
                Op::Implies => Value::Bool(!bool_arg(0) || bool_arg(1)),
                Op::Ite => {
                    if bool_arg(0) {
                        arg(1).clone()
                    } else {
                        arg(2).clone()
                    }
                }
                Op::Eq => Value::Bool(arg(0) == arg(1)),
                Op::Lt => Value::Bool(int_arg(0) < int_arg(1)),
                Op::Le => Value::Bool(int_arg(0) <= int_arg(1)),
                Op::Add => Value::Int((0..cs.len()).map(int_arg).fold(BigInt::zero(), |a, b| a + b)),
                Op::Mul => Value::Int(int_arg(0) * int_arg(1)),
                Op::Read | Op::Write | Op::ConstArray(_) => {
                    return Err(TermError::NotEvaluable(self.display(u).to_string()))
                }
                Op::Apply(f) => {
                    let args: Vec<Value> = cs.iter().map(|c| memo[c].clone()).collect();
                    match model.lookup(*f, &args) {
                        Some(v) => v.clone(),
                        None => return Err(TermError::UnassignedApplication(self.display(u).to_string())),
                    }
                }
            },
        })
    }

    // ------------------------------------------------------------ display

    /// SMT-LIB rendering using the variables' own names.
    pub fn display(&self, t: TermId) -> TermDisplay<'_> {
        TermDisplay { store: self, term: t }
    }

    /// Writes `t` in SMT-LIB syntax, naming variables through `name`.
    pub fn write_smt(&self, t: TermId, name: &dyn Fn(VarId) -> String, out: &mut String) {
        use std::fmt::Write;
        match self.node(t) {
            Node::Var(v) => out.push_str(&name(*v)),
            Node::Int(v) => {
                if v < &BigInt::zero() {
                    let _ = write!(out, "(- {})", -v);
                } else {
                    let _ = write!(out, "{v}");
                }
            }
            Node::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Node::App(op, cs) => {
                out.push('(');
                match op {
                    Op::ConstArray(s) => {
                        let _ = write!(out, "(as const {})", self.sort_name(*s));
                    }
                    Op::Apply(f) => out.push_str(&quote_symbol(&self.fun(*f).name)),
                    other => out.push_str(other.smt_name()),
                }
                for &c in cs {
                    out.push(' ');
                    self.write_smt(c, name, out);
                }
                out.push(')');
            }
        }
    }

    /// Short stable digest of a term's printed form, for naming.
    pub fn digest(&self, t: TermId) -> String {
        let text = self.display(t).to_string();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{:08x}", h as u32)
    }
}

pub struct TermDisplay<'a> {
    store: &'a TermStore,
    term: TermId,
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let store = self.store;
        store.write_smt(self.term, &|v| quote_symbol(&store.var(v).name), &mut s);
        f.write_str(&s)
    }
}

const SMT_RESERVED: &[&str] = &[
    "_", "!", "as", "let", "exists", "forall", "match", "par", "BINARY", "DECIMAL", "HEXADECIMAL", "NUMERAL",
    "STRING",
];

pub fn is_simple_symbol(s: &str) -> bool {
    let extra = "~!@$%^&*_-+=<>.?/";
    let mut chars = s.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_ascii_alphabetic() || extra.contains(first))
        && chars.all(|c| c.is_ascii_alphanumeric() || extra.contains(c))
        && !SMT_RESERVED.contains(&s)
}

/// Quotes `s` with `|...|` unless it is already a simple symbol.
pub fn quote_symbol(s: &str) -> String {
    if is_simple_symbol(s) {
        s.to_string()
    } else {
        format!("|{}|", s.replace(['|', '\\'], "_"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TermStore, TermId, TermId, TermId) {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let arr_sort = st.array_sort(int, int);
        let x = st.new_var("x", int, VarKind::State).unwrap();
        let a = st.new_var("a", arr_sort, VarKind::State).unwrap();
        let i = st.new_var("i", int, VarKind::Input).unwrap();
        (st.clone(), st.var_term(x), st.var_term(a), st.var_term(i))
    }

    #[test]
    fn interning_returns_same_id() {
        let (mut st, x, _, _) = setup();
        let zero = st.int(0);
        let e1 = st.mk(Op::Eq, vec![x, zero]).unwrap();
        let e2 = st.mk(Op::Eq, vec![x, zero]).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn read_has_element_sort() {
        let (mut st, _, a, i) = setup();
        let r = st.mk(Op::Read, vec![a, i]).unwrap();
        assert_eq!(st.sort_of(r), st.int_sort());
    }

    #[test]
    fn and_of_int_is_sort_mismatch_at_child_zero() {
        let (mut st, x, _, _) = setup();
        let t = st.tru();
        match st.mk(Op::And, vec![x, t]) {
            Err(TermError::SortMismatch { position, .. }) => assert_eq!(position, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rename_substitution() {
        let (mut st, x, _, _) = setup();
        let int = st.int_sort();
        let dr = st.new_var("dr", int, VarKind::State).unwrap();
        let dr = st.var_term(dr);
        let c = st.int(200);
        let t = st.lt(x, c).unwrap();
        let map = HashMap::from([(x, dr)]);
        let out = st.substitute(t, &map).unwrap();
        let expected = st.lt(dr, c).unwrap();
        assert_eq!(out, expected);
        assert_eq!(st.substitute(t, &HashMap::new()).unwrap(), t);
    }

    #[test]
    fn substitution_rejects_sort_change() {
        let (mut st, x, _, _) = setup();
        let tru = st.tru();
        let map = HashMap::from([(x, tru)]);
        assert!(matches!(st.substitute(x, &map), Err(TermError::SubstitutionSort { .. })));
    }

    #[test]
    fn times_of_collects_steps() {
        let (mut st, _, a, i) = setup();
        let av = st.as_var(a).unwrap();
        let iv = st.as_var(i).unwrap();
        let i2 = st.timed_term(iv, 2);
        assert_eq!(st.times_of(i2), BTreeSet::from([2]));
        let a0 = st.timed_term(av, 0);
        let r = st.read(a0, i2).unwrap();
        let d0 = st.timed_term(iv, 0);
        let e = st.eq(r, d0).unwrap();
        assert_eq!(st.times_of(e), BTreeSet::from([0, 2]));
        let one = st.int(1);
        let s = st.add(vec![i, one]).unwrap();
        assert!(st.times_of(s).is_empty());
    }

    #[test]
    fn ground_evaluation() {
        let mut st = TermStore::new();
        let one = st.int(1);
        let two = st.int(2);
        let four = st.int(4);
        let s = st.add(vec![one, two]).unwrap();
        let t = st.lt(s, four).unwrap();
        assert_eq!(st.evaluate(t, &CexModel::default()).unwrap(), Value::Bool(true));
    }

    #[test]
    fn unassigned_variable_is_reported() {
        let (st, x, _, _) = setup();
        assert_eq!(
            st.evaluate(x, &CexModel::default()),
            Err(TermError::UnassignedVariable("x".into()))
        );
    }

    #[test]
    fn uf_table_lookup() {
        let mut st = TermStore::new();
        let int = st.int_sort();
        let arr = st.uninterpreted_sort("ArrA");
        let read = st.declare_fun("readA", vec![arr, int], int).unwrap();
        let a = st.new_var("aA", arr, VarKind::State).unwrap();
        let i = st.new_var("i", int, VarKind::State).unwrap();
        let (at, it) = (st.var_term(a), st.var_term(i));
        let r = st.apply(read, vec![at, it]).unwrap();
        let mut m = CexModel::default();
        m.set_scalar(a, Value::Opaque("aA0".into()));
        m.set_scalar(i, Value::Int(5.into()));
        m.set_entry(read, vec![Value::Opaque("aA0".into()), Value::Int(5.into())], Value::Int(3.into()));
        assert_eq!(st.evaluate(r, &m).unwrap(), Value::Int(3.into()));
    }

    #[test]
    fn negative_literals_print_canonically() {
        let mut st = TermStore::new();
        let m = st.int(-5);
        assert_eq!(st.display(m).to_string(), "(- 5)");
        let x = st.new_var("x", st.int_sort(), VarKind::State).unwrap();
        let xt = st.var_term(x);
        let n = st.neg(xt).unwrap();
        assert_eq!(st.display(n).to_string(), "(* (- 1) x)");
    }

    #[test]
    fn timed_variables_are_unique() {
        let (mut st, x, _, _) = setup();
        let xv = st.as_var(x).unwrap();
        assert_eq!(st.timed(xv, 3), st.timed(xv, 3));
        assert_ne!(st.timed(xv, 3), st.timed(xv, 4));
        let x3 = st.timed(xv, 3);
        assert_eq!(st.var(x3).name, "x@3");
    }
}
