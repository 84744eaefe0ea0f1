mod common;

use std::collections::HashMap;

use proptest::prelude::*;

use prophic::smt::Want;
use prophic::{CexModel, TermId, TermStore, Value, VarId, VarKind};

/// Recipe for an integer term over three variables.
#[derive(Clone, Debug)]
enum IntE {
    Var(usize),
    Lit(i64),
    Add(Box<IntE>, Box<IntE>),
    Scale(i64, Box<IntE>),
    Ite(Box<BoolE>, Box<IntE>, Box<IntE>),
    F(Box<IntE>),
}

#[derive(Clone, Debug)]
enum BoolE {
    Lt(IntE, IntE),
    Le(IntE, IntE),
    Eq(IntE, IntE),
    Not(Box<BoolE>),
    And(Box<BoolE>, Box<BoolE>),
    Or(Box<BoolE>, Box<BoolE>),
}

fn int_leaf() -> impl Strategy<Value = IntE> {
    prop_oneof![(0usize..3).prop_map(IntE::Var), (-5i64..6).prop_map(IntE::Lit)]
}

fn int_expr() -> impl Strategy<Value = IntE> {
    int_leaf().prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| IntE::Add(Box::new(a), Box::new(b))),
            (-3i64..4, inner.clone()).prop_map(|(c, a)| IntE::Scale(c, Box::new(a))),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(a, b, c)| IntE::Ite(
                Box::new(BoolE::Lt(a, b.clone())),
                Box::new(b),
                Box::new(c)
            )),
            inner.prop_map(|a| IntE::F(Box::new(a))),
        ]
    })
}

fn bool_expr() -> impl Strategy<Value = BoolE> {
    let atom = prop_oneof![
        (int_expr(), int_expr()).prop_map(|(a, b)| BoolE::Lt(a, b)),
        (int_expr(), int_expr()).prop_map(|(a, b)| BoolE::Le(a, b)),
        (int_expr(), int_expr()).prop_map(|(a, b)| BoolE::Eq(a, b)),
    ];
    atom.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| BoolE::Not(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| BoolE::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| BoolE::Or(Box::new(a), Box::new(b))),
        ]
    })
}

struct Ctx {
    store: TermStore,
    vars: Vec<VarId>,
    f: prophic::terms::FunId,
}

impl Ctx {
    fn new() -> Self {
        let mut store = TermStore::new();
        let int = store.int_sort();
        let vars = ["x", "y", "z"]
            .iter()
            .map(|n| store.new_var(n, int, VarKind::State).unwrap())
            .collect();
        let f = store.declare_fun("f", vec![int], int).unwrap();
        Ctx { store, vars, f }
    }

    fn int(&mut self, e: &IntE) -> TermId {
        match e {
            IntE::Var(i) => self.store.var_term(self.vars[*i]),
            IntE::Lit(c) => self.store.int(*c),
            IntE::Add(a, b) => {
                let (a, b) = (self.int(a), self.int(b));
                self.store.add(vec![a, b]).unwrap()
            }
            IntE::Scale(c, a) => {
                let a = self.int(a);
                self.store.mul_const((*c).into(), a).unwrap()
            }
            IntE::Ite(c, a, b) => {
                let (c, a, b) = (self.boolean(c), self.int(a), self.int(b));
                self.store.ite(c, a, b).unwrap()
            }
            IntE::F(a) => {
                let a = self.int(a);
                self.store.apply(self.f, vec![a]).unwrap()
            }
        }
    }

    fn boolean(&mut self, e: &BoolE) -> TermId {
        match e {
            BoolE::Lt(a, b) => {
                let (a, b) = (self.int(a), self.int(b));
                self.store.lt(a, b).unwrap()
            }
            BoolE::Le(a, b) => {
                let (a, b) = (self.int(a), self.int(b));
                self.store.le(a, b).unwrap()
            }
            BoolE::Eq(a, b) => {
                let (a, b) = (self.int(a), self.int(b));
                self.store.eq(a, b).unwrap()
            }
            BoolE::Not(a) => {
                let a = self.boolean(a);
                self.store.not(a).unwrap()
            }
            BoolE::And(a, b) => {
                let (a, b) = (self.boolean(a), self.boolean(b));
                self.store.and2(a, b).unwrap()
            }
            BoolE::Or(a, b) => {
                let (a, b) = (self.boolean(a), self.boolean(b));
                self.store.or_all(vec![a, b]).unwrap()
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn building_twice_gives_the_same_id(e in bool_expr()) {
        let mut cx = Ctx::new();
        let a = cx.boolean(&e);
        let n = cx.store.num_terms();
        let b = cx.boolean(&e);
        prop_assert_eq!(a, b);
        prop_assert_eq!(n, cx.store.num_terms());
    }

    #[test]
    fn substitution_composes(e in bool_expr(), s1 in proptest::collection::vec(int_expr(), 3), s2 in proptest::collection::vec(int_expr(), 3)) {
        let mut cx = Ctx::new();
        let t = cx.boolean(&e);
        let vars = cx.vars.clone();
        let m1: HashMap<VarId, TermId> = vars.iter().zip(&s1).take(2).map(|(&v, r)| (v, cx.int(r))).collect();
        let m2: HashMap<VarId, TermId> = vars.iter().zip(&s2).skip(1).map(|(&v, r)| (v, cx.int(r))).collect();
        let step = cx.store.substitute_vars(t, &m1).unwrap();
        let twice = cx.store.substitute_vars(step, &m2).unwrap();
        let mut composed = HashMap::new();
        for (&v, &r) in &m1 {
            composed.insert(v, cx.store.substitute_vars(r, &m2).unwrap());
        }
        for (&v, &r) in &m2 {
            composed.entry(v).or_insert(r);
        }
        let once = cx.store.substitute_vars(t, &composed).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn identity_substitution_is_identity(e in bool_expr()) {
        let mut cx = Ctx::new();
        let t = cx.boolean(&e);
        let id: HashMap<VarId, TermId> = cx.vars.iter().map(|&v| (v, cx.store.var_term(v))).collect();
        prop_assert_eq!(cx.store.substitute_vars(t, &id).unwrap(), t);
    }

    #[test]
    fn times_of_distributes_over_and(a in bool_expr(), b in bool_expr(), sa in 0u32..4, sb in 0u32..4) {
        let mut cx = Ctx::new();
        let ta = cx.boolean(&a);
        let tb = cx.boolean(&b);
        let ta = prophic::bmc::time_term(&mut cx.store, ta, sa).unwrap();
        let tb = prophic::bmc::time_term(&mut cx.store, tb, sb).unwrap();
        let both = cx.store.and2(ta, tb).unwrap();
        let mut expect = cx.store.times_of(ta);
        expect.extend(cx.store.times_of(tb));
        prop_assert_eq!(cx.store.times_of(both), expect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The evaluator and the solver agree on ground truth values.
    #[test]
    fn evaluation_agrees_with_solver(e in bool_expr(), vals in proptest::collection::vec(-6i64..7, 3), fvals in proptest::collection::vec(-6i64..7, 4)) {
        let mut cx = Ctx::new();
        let t = cx.boolean(&e);
        let mut model = CexModel::default();
        let mut pins = Vec::new();
        for (&v, &c) in cx.vars.clone().iter().zip(&vals) {
            model.set_scalar(v, Value::Int(c.into()));
            let vt = cx.store.var_term(v);
            let lit = cx.store.int(c);
            pins.push(cx.store.eq(vt, lit).unwrap());
        }
        // f maps -1, 0, 1 through a table and everything else to fvals[3].
        let int = cx.store.int_sort();
        let p = cx.store.new_var("p", int, VarKind::Input).unwrap();
        let pt = cx.store.var_term(p);
        let mut table = Vec::new();
        for (i, &fv) in fvals.iter().take(3).enumerate() {
            let key = i as i64 - 1;
            model.set_entry(cx.f, vec![Value::Int(key.into())], Value::Int(fv.into()));
            let k = cx.store.int(key);
            let v = cx.store.int(fv);
            table.push((k, v));
        }
        model.set_default(cx.f, Value::Int(fvals[3].into()));
        let mut body = cx.store.int(fvals[3]);
        for &(k, v) in table.iter().rev() {
            let c = cx.store.eq(pt, k).unwrap();
            body = cx.store.ite(c, v, body).unwrap();
        }
        let value = cx.store.evaluate(t, &model).unwrap().as_bool().unwrap();
        // Pin f everywhere t uses it, through its table.
        let apps: Vec<TermId> = cx.store.subterms(t).into_iter().filter(|&u| matches!(cx.store.op(u), Some(prophic::Op::Apply(_)))).collect();
        for app in apps {
            let arg = cx.store.children(app)[0];
            let mut m = HashMap::new();
            m.insert(p, arg);
            let def = cx.store.substitute_vars(body, &m).unwrap();
            pins.push(cx.store.eq(app, def).unwrap());
        }
        let factory = common::factory();
        let mut s = factory.open("ALL").unwrap();
        let mut asserts: Vec<(Option<String>, TermId)> = pins.into_iter().map(|t| (None, t)).collect();
        asserts.push((None, t));
        let sat = s.check(&cx.store, &asserts, Want::Nothing).unwrap().is_sat();
        prop_assert_eq!(sat, value);
    }
}
